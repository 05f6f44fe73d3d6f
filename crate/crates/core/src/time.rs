//! Virtual time. All times are milliseconds since the simulation epoch,
//! which sits at midnight. Days are exactly 86,400,000 ms: no zones, no DST.

pub const MS_PER_SECOND: i64 = 1_000;
pub const MS_PER_MINUTE: i64 = 60 * MS_PER_SECOND;
pub const MS_PER_HOUR: i64 = 60 * MS_PER_MINUTE;
pub const MS_PER_DAY: i64 = 24 * MS_PER_HOUR;

/// Calendar day index of a timestamp.
pub fn day_index(ts: i64) -> i64 {
    ts.div_euclid(MS_PER_DAY)
}

pub fn start_of_day(ts: i64) -> i64 {
    day_index(ts) * MS_PER_DAY
}

/// Hour of day, 0..=23.
pub fn hour_of_day(ts: i64) -> i64 {
    ts.rem_euclid(MS_PER_DAY) / MS_PER_HOUR
}

pub fn is_pm(ts: i64) -> bool {
    hour_of_day(ts) >= 12
}

pub fn same_calendar_day(a: i64, b: i64) -> bool {
    day_index(a) == day_index(b)
}

/// Monotone virtual clock driven by the simulator.
#[derive(Debug, Default, Clone)]
pub struct VirtualClock {
    now: i64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> i64 {
        self.now
    }

    /// Moves the clock forward. Returns false (and leaves the clock alone)
    /// if `t` lies in the past.
    pub fn advance_to(&mut self, t: i64) -> bool {
        if t < self.now {
            return false;
        }
        self.now = t;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calendar_arithmetic() {
        assert_eq!(hour_of_day(13 * MS_PER_HOUR), 13);
        assert_eq!(hour_of_day(MS_PER_DAY + 5 * MS_PER_HOUR + 59 * MS_PER_MINUTE), 5);
        assert!(is_pm(12 * MS_PER_HOUR));
        assert!(!is_pm(12 * MS_PER_HOUR - 1));
        assert!(same_calendar_day(0, MS_PER_DAY - 1));
        assert!(!same_calendar_day(MS_PER_DAY - 1, MS_PER_DAY));
        assert_eq!(start_of_day(3 * MS_PER_DAY + 17), 3 * MS_PER_DAY);
    }

    #[test]
    fn clock_never_goes_back() {
        let mut c = VirtualClock::new();
        assert!(c.advance_to(10));
        assert!(c.advance_to(10));
        assert!(!c.advance_to(9));
        assert_eq!(c.now(), 10);
    }
}
