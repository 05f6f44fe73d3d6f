use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::catalog::{Api, CATALOG};
use super::trace::TraceEvent;
use crate::time::{MS_PER_DAY, MS_PER_HOUR, MS_PER_MINUTE, MS_PER_SECOND};

/// Shape of a synthetic trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProfile {
    pub apps: usize,
    pub max_events: usize,
    pub max_span_ms: i64,
    /// Relative weight of each catalog API.
    pub weights: Vec<(Api, u32)>,
    /// `(weight, min_gap_ms, max_gap_ms)` buckets for inter-arrival gaps.
    pub gaps: Vec<(u32, i64, i64)>,
}

impl Default for TraceProfile {
    fn default() -> Self {
        Self {
            apps: 5,
            max_events: 2000,
            max_span_ms: 7 * MS_PER_DAY,
            weights: CATALOG.iter().map(|s| (s.api, 1)).collect(),
            gaps: vec![
                (3, 0, 0),
                (60, 0, 90 * MS_PER_SECOND),
                (8, MS_PER_MINUTE, 20 * MS_PER_MINUTE),
                (2, MS_PER_HOUR, 8 * MS_PER_HOUR),
            ],
        }
    }
}

impl TraceProfile {
    fn weighted(mut self, weights: &[(Api, u32)]) -> Self {
        self.weights = weights.to_vec();
        self
    }

    fn gaps(mut self, gaps: &[(u32, i64, i64)]) -> Self {
        self.gaps = gaps.to_vec();
        self
    }

    /// A profile that exercises the policy `id` hard enough to produce blocks.
    pub fn for_policy(id: &str) -> Self {
        let s = MS_PER_SECOND;
        let m = MS_PER_MINUTE;
        let h = MS_PER_HOUR;
        let base = Self::default();
        let sms_heavy = [(Api::SendTextMessage, 20), (Api::RequestUrl, 1), (Api::LaunchApp, 1)];
        match id {
            "MsgCntLmt" => base.weighted(&sms_heavy).gaps(&[(2, 0, 0), (90, 0, 40 * s), (1, h, 10 * h)]),
            "MsgCntLmtHr" => base.weighted(&sms_heavy).gaps(&[(4, 0, 0), (90, 0, 50 * s), (3, 10 * m, 2 * h)]),
            "MsgTimeLmt" => base.weighted(&sms_heavy).gaps(&[(4, 0, 0), (60, 0, 2 * m), (5, 30 * m, 3 * h)]),
            "OneHrPerSittingOnly" => base.gaps(&[(2, 0, 0), (80, 0, 5 * m), (10, 5 * m, 14 * m), (8, 14 * m, 40 * m)]),
            "PhoneTimeLim" => base
                .weighted(&[(Api::DialCall, 5), (Api::EndCall, 5), (Api::SendTextMessage, 1)])
                .gaps(&[(2, 0, 0), (30, m, 2 * h), (4, 2 * h, 10 * h)]),
            "GamePlayLmt" => base.weighted(&[(Api::LaunchApp, 10), (Api::RequestUrl, 1)]).gaps(&[
                (2, 0, 0),
                (30, m, 90 * m),
                (4, 2 * h, 10 * h),
            ]),
            "WiFiLmt" => {
                base.weighted(&[(Api::SetWifiEnabled, 5), (Api::SendTextMessage, 1)]).gaps(&[(1, 0, 0), (10, m, 3 * h)])
            }
            "PhoneExtBlk" => base.weighted(&[(Api::DialCall, 5), (Api::EndCall, 3), (Api::LaunchApp, 1)]),
            "URLBlkReq" => base.weighted(&[(Api::RequestUrl, 5), (Api::SendTextMessage, 1)]),
            "FileAccessLmt" => base.weighted(&[(Api::OpenFile, 5), (Api::LaunchApp, 1)]),
            _ => base,
        }
    }
}

const DESTS: &[&str] = &["+35679000000", "21234567", "+447700900000", ""];
const NUMBERS: &[&str] = &["+35621000000", "+35699", "+442079460000", "+15550100", "21000000", "+356"];
const URLS: &[&str] = &[
    "http://news.example/today",
    "http://casino.example/",
    "http://kids.example/gambling-facts",
    "http://adult.example",
    "http://CASINO.example",
    "http://example.org/",
];
const PATHS: &[&str] = &[
    "/sdcard/company/report.xls",
    "/sdcard/photos/a.jpg",
    "/sdcard/company",
    "/sdcard/companyx/a",
    "/sdcard/company/",
];
const TARGETS: &[&str] = &["1024", "Puzzle", "Mail", "Maps", "puzzle"];

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn pick_weighted<T: Copy>(rng: &mut ChaCha8Rng, items: &[(u32, T)]) -> T {
    let total: u32 = items.iter().map(|(w, _)| w).sum();
    let mut roll = rng.gen_range(0..total.max(1));
    for (w, item) in items {
        if roll < *w {
            return *item;
        }
        roll -= w;
    }
    items[items.len() - 1].1
}

fn args_for(rng: &mut ChaCha8Rng, api: Api) -> Vec<serde_json::Value> {
    match api {
        Api::SendTextMessage => {
            let dest = if rng.gen_ratio(1, 20) { "" } else { pick(rng, &DESTS[..3]) };
            vec![json!(dest), json!("hello")]
        }
        Api::SetWifiEnabled => vec![json!(rng.gen_bool(0.6))],
        Api::DialCall => vec![json!(pick(rng, NUMBERS))],
        Api::EndCall => vec![],
        Api::RequestUrl => vec![json!(pick(rng, URLS))],
        Api::OpenFile => vec![json!(pick(rng, PATHS)), json!("r")],
        Api::LaunchApp => vec![json!(pick(rng, TARGETS))],
    }
}

fn app_name(i: usize) -> String {
    if i == 0 {
        "StockControl".to_string()
    } else {
        format!("app{i}")
    }
}

/// Deterministic random trace for `seed`.
pub fn generate(profile: &TraceProfile, seed: u64) -> Vec<TraceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let apps = profile.apps.max(1);
    let n = rng.gen_range(1..=profile.max_events.max(1));
    let weights: Vec<(u32, Api)> = profile.weights.iter().map(|&(a, w)| (w, a)).collect();
    let gaps: Vec<(u32, (i64, i64))> = profile.gaps.iter().map(|&(w, lo, hi)| (w, (lo, hi))).collect();
    let mut t = rng.gen_range(0..MS_PER_DAY);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let api = pick_weighted(&mut rng, &weights);
        let spec = CATALOG.iter().find(|s| s.api == api).expect("catalogued");
        let app = app_name(rng.gen_range(0..apps));
        out.push(TraceEvent::new(t, &app, &spec.call_name(), args_for(&mut rng, api)));
        let (lo, hi) = pick_weighted(&mut rng, &gaps);
        t += rng.gen_range(lo..=hi);
        if t >= profile.max_span_ms {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trace::resolve_trace;

    #[test]
    fn deterministic_sorted_and_resolvable() {
        let p = TraceProfile::for_policy("MsgCntLmt");
        let a = generate(&p, 7);
        assert_eq!(a, generate(&p, 7));
        assert!(a.windows(2).all(|w| w[0].t_ms <= w[1].t_ms));
        assert!(a.len() <= p.max_events && a.last().unwrap().t_ms < p.max_span_ms);
        assert!(resolve_trace(&a).is_ok());
        let apps: std::collections::BTreeSet<_> = a.iter().map(|e| &e.app).collect();
        assert!(apps.len() <= 5);
    }
}
