use std::time::Instant;

/// Source of timestamps for latency measurement, chosen by name.
pub trait LatencyProbe: Send + Sync {
    fn name(&self) -> &'static str;
    /// Nanoseconds since an arbitrary fixed origin.
    fn stamp(&self) -> u64;

    fn since(&self, start: u64) -> u64 {
        self.stamp().saturating_sub(start)
    }
}

/// Wall-clock nanoseconds.
pub struct WallProbe {
    origin: Instant,
}

impl WallProbe {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for WallProbe {
    fn default() -> Self {
        Self::new()
    }
}

impl LatencyProbe for WallProbe {
    fn name(&self) -> &'static str {
        "wall"
    }

    fn stamp(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

/// Always zero, so outputs are byte-stable across runs.
pub struct OffProbe;

impl LatencyProbe for OffProbe {
    fn name(&self) -> &'static str {
        "off"
    }

    fn stamp(&self) -> u64 {
        0
    }
}

pub const PROBES: &[&str] = &["wall", "off"];

pub fn probe_by_name(name: &str) -> Option<Box<dyn LatencyProbe>> {
    match name {
        "wall" => Some(Box::new(WallProbe::new())),
        "off" => Some(Box::new(OffProbe)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry() {
        for name in PROBES {
            assert_eq!(probe_by_name(name).unwrap().name(), *name);
        }
        assert!(probe_by_name("cycle").is_none());
        let off = probe_by_name("off").unwrap();
        assert_eq!(off.since(off.stamp()), 0);
    }
}
