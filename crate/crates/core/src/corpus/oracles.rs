//! Reference decisions for the corpus, written directly against the trace.
//! Nothing here touches the compiler, the evaluator or the monitors.

use std::collections::BTreeMap;

use crate::config::{DeviceConfig, GapAnchor};
use crate::sim::{TraceEvent, VerdictDecision};

const MINUTE: i64 = 60_000;
const HOUR: i64 = 3_600_000;
const DAY: i64 = 86_400_000;

const SMS: &str = "SmsManager.sendTextMessage";
const WIFI: &str = "WifiManager.setWifiEnabled";
const DIAL: &str = "TelephonyManager.dialCall";
const END_CALL: &str = "TelephonyManager.endCall";
const URL: &str = "WebBrowser.requestUrl";
const OPEN: &str = "FileSystem.openFile";
const LAUNCH: &str = "AppLauncher.launchApp";

fn decision(blocked: bool) -> VerdictDecision {
    if blocked {
        VerdictDecision::Blocked
    } else {
        VerdictDecision::Allowed
    }
}

fn text(e: &TraceEvent, i: usize) -> &str {
    e.args.get(i).and_then(|v| v.as_str()).unwrap_or("")
}

fn flag(e: &TraceEvent, i: usize) -> bool {
    e.args.get(i).and_then(|v| v.as_bool()).unwrap_or(false)
}

fn midnight(t: i64) -> i64 {
    t.div_euclid(DAY) * DAY
}

/// Time `[start, end]` spends inside `[from, to]`.
fn overlap(start: i64, end: i64, from: i64, to: i64) -> i64 {
    (end.min(to) - start.max(from)).max(0)
}

fn stateless(trace: &[TraceEvent], blocked: impl Fn(&TraceEvent) -> bool) -> Vec<VerdictDecision> {
    trace.iter().map(|e| decision(blocked(e))).collect()
}

pub fn phone_ext_blk(trace: &[TraceEvent], cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    stateless(trace, |e| {
        let n = text(e, 0);
        e.call == DIAL && n.starts_with('+') && !n.starts_with(&cfg.home_country_code)
    })
}

pub fn url_blk_req(trace: &[TraceEvent], cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    stateless(trace, |e| e.call == URL && cfg.url_blocklist.iter().any(|w| text(e, 0).contains(w.as_str())))
}

pub fn wifi_lmt(trace: &[TraceEvent], _cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    stateless(trace, |e| {
        let hour = e.t_ms.rem_euclid(DAY) / HOUR;
        e.call == WIFI && flag(e, 0) && hour >= 12
    })
}

pub fn file_access_lmt(trace: &[TraceEvent], cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    stateless(trace, |e| {
        if e.call != OPEN {
            return false;
        }
        let path = text(e, 0);
        cfg.protected_paths.iter().any(|prefix| {
            path.starts_with(prefix.as_str())
                && !cfg.authorized_apps.get(prefix).is_some_and(|apps| apps.contains(&e.app))
        })
    })
}

pub fn phone_time_lim(trace: &[TraceEvent], _cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    let mut active: Option<i64> = None;
    let mut calls: Vec<(i64, i64)> = Vec::new();
    trace
        .iter()
        .map(|e| {
            let t = e.t_ms;
            let mut blocked = false;
            if e.call == DIAL {
                let today: i64 = calls.iter().map(|&(s, f)| overlap(s, f, midnight(t), t)).sum();
                blocked = today >= 4 * HOUR;
                if !blocked && active.is_none() {
                    active = Some(t);
                }
            } else if e.call == END_CALL {
                if let Some(s) = active.take() {
                    calls.push((s, t));
                }
            }
            decision(blocked)
        })
        .collect()
}

pub fn game_play_lmt(trace: &[TraceEvent], cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    let is_game = |name: &str| cfg.game_apps.iter().any(|g| g == name);
    let mut stints: Vec<(i64, i64)> = Vec::new();
    let mut playing_since: Option<i64> = None;
    trace
        .iter()
        .map(|e| {
            if e.call != LAUNCH {
                return VerdictDecision::Allowed;
            }
            let t = e.t_ms;
            let target = text(e, 0);
            let open = playing_since.map(|s| (s, t));
            let today: i64 = stints.iter().chain(open.iter()).map(|&(s, f)| overlap(s, f, midnight(t), t)).sum();
            let blocked = is_game(target) && today >= 3 * HOUR;
            if !blocked {
                if let Some(s) = playing_since.take() {
                    stints.push((s, t));
                }
                if is_game(target) {
                    playing_since = Some(t);
                }
            }
            decision(blocked)
        })
        .collect()
}

pub fn one_hr_per_sitting(trace: &[TraceEvent], cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    let mut last: Option<i64> = None;
    let mut sitting_start = 0;
    trace
        .iter()
        .map(|e| {
            let t = e.t_ms;
            if last.is_none_or(|l| t - l >= cfg.idle_threshold_ms) {
                sitting_start = t;
            }
            last = Some(t);
            decision(t - sitting_start >= HOUR)
        })
        .collect()
}

pub fn msg_time_lmt(trace: &[TraceEvent], cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    let mut previous: Option<i64> = None;
    trace
        .iter()
        .map(|e| {
            if e.call != SMS {
                return VerdictDecision::Allowed;
            }
            let blocked = previous.is_some_and(|p| e.t_ms - p < MINUTE);
            if !blocked || cfg.msg_gap_anchor == GapAnchor::Attempt {
                previous = Some(e.t_ms);
            }
            decision(blocked)
        })
        .collect()
}

pub fn msg_cnt_lmt(trace: &[TraceEvent], _cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    let mut per_day: BTreeMap<i64, u64> = BTreeMap::new();
    trace
        .iter()
        .map(|e| {
            if e.call != SMS {
                return VerdictDecision::Allowed;
            }
            let count = per_day.entry(e.t_ms.div_euclid(DAY)).or_default();
            let blocked = *count >= 500;
            if !blocked && !text(e, 0).is_empty() {
                *count += 1;
            }
            decision(blocked)
        })
        .collect()
}

pub fn msg_cnt_lmt_hr(trace: &[TraceEvent], _cfg: &DeviceConfig) -> Vec<VerdictDecision> {
    let mut delivered: Vec<i64> = Vec::new();
    trace
        .iter()
        .map(|e| {
            if e.call != SMS {
                return VerdictDecision::Allowed;
            }
            let recent = delivered.iter().filter(|&&s| e.t_ms - s <= HOUR).count();
            let blocked = recent >= 100;
            if !blocked && !text(e, 0).is_empty() {
                delivered.push(e.t_ms);
            }
            decision(blocked)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use VerdictDecision::{Allowed, Blocked};

    fn sms(t: i64) -> TraceEvent {
        TraceEvent::new(t, "a", SMS, vec![json!("99"), json!("hi")])
    }

    #[test]
    fn message_gap() {
        let cfg = DeviceConfig::default();
        let trace = vec![sms(0), sms(59_000), sms(61_000)];
        assert_eq!(msg_time_lmt(&trace, &cfg), vec![Allowed, Blocked, Allowed]);
        let attempts = DeviceConfig { msg_gap_anchor: GapAnchor::Attempt, ..cfg };
        assert_eq!(msg_time_lmt(&trace, &attempts), vec![Allowed, Blocked, Blocked]);
    }

    #[test]
    fn sitting() {
        let cfg = DeviceConfig::default();
        let trace: Vec<_> = (0..=61).map(|m| sms(m * MINUTE)).collect();
        let got = one_hr_per_sitting(&trace, &cfg);
        assert_eq!(got[59], Allowed);
        assert_eq!(got[60], Blocked);
    }

    #[test]
    fn split_call_charges_today_only() {
        let cfg = DeviceConfig::default();
        let dial = |t| TraceEvent::new(t, "a", DIAL, vec![json!("21")]);
        let end = |t| TraceEvent::new(t, "a", END_CALL, vec![]);
        let trace = vec![dial(DAY - HOUR), end(DAY + 4 * HOUR), dial(DAY + 5 * HOUR), dial(2 * DAY + HOUR)];
        assert_eq!(phone_time_lim(&trace, &cfg), vec![Allowed, Allowed, Blocked, Allowed]);
    }
}
