//! Overhead benchmark: every trace event timed with and without monitoring.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::central::{state_size, StateSize};
use crate::config::DeviceConfig;
use crate::corpus::CorpusPolicy;
use crate::rules::CompiledPolicy;
use crate::sim::{run, run_unmonitored, ResolvedEvent, RunOptions, VerdictDecision};

pub const MIN_REPS: usize = 30;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("at least {MIN_REPS} repetitions are required, got {0}")]
    TooFewReps(usize),
    #[error("policy `{0}` does not compile")]
    Compile(String),
    #[error(transparent)]
    Run(#[from] crate::sim::RunError),
}

/// Results for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBench {
    pub id: String,
    pub category: String,
    /// Trace events whose API the policy intercepts.
    pub events_matched: usize,
    pub blocked: usize,
    pub channel_messages: usize,
    /// Mean per-call latency over matched events, averaged across reps.
    pub unmonitored_mean_ns: f64,
    pub monitored_mean_ns: f64,
    pub overhead_pct: f64,
    /// Mean wall time of a whole-trace run.
    pub unmonitored_trace_ns: f64,
    pub monitored_trace_ns: f64,
    /// Every monitored rep produced the same decisions.
    pub decisions_stable: bool,
}

/// Global state a policy holds at the end of the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRow {
    pub id: String,
    pub state: StateSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Name of the trace file, or a label for an in-memory trace.
    pub trace_id: String,
    pub trace_events: usize,
    pub repetitions: usize,
    pub service_cost_ns: u64,
    pub rows: Vec<PolicyBench>,
    pub memory_rows: Vec<MemoryRow>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn matched_events(trace: &[ResolvedEvent], cp: &CompiledPolicy) -> Vec<usize> {
    let apis: BTreeSet<(String, String)> = cp.dispatch_keys().into_iter().map(|k| (k.namespace, k.method)).collect();
    trace
        .iter()
        .enumerate()
        .filter(|(_, e)| apis.contains(&(e.api.namespace.to_string(), e.api.method.to_string())))
        .map(|(i, _)| i)
        .collect()
}

/// Benchmarks one compiled policy over `trace`, alternating monitored and
/// unmonitored reps after one untimed warm-up of each.
pub fn bench_compiled(
    id: &str,
    category: &str,
    cp: &CompiledPolicy,
    trace: &[ResolvedEvent],
    config: &DeviceConfig,
    reps: usize,
) -> Result<(PolicyBench, MemoryRow), BenchError> {
    if reps < MIN_REPS {
        return Err(BenchError::TooFewReps(reps));
    }
    let opts = RunOptions { probe: "wall".into(), ..RunOptions::default() };
    let matched = matched_events(trace, cp);
    let per_event = |lat: &dyn Fn(usize) -> u64| mean(&matched.iter().map(|&i| lat(i) as f64).collect::<Vec<_>>());

    run(trace, cp, config, &opts)?;
    run_unmonitored(trace, config, "wall")?;

    let (mut mon, mut unmon, mut mon_wall, mut unmon_wall) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut first: Option<Vec<VerdictDecision>> = None;
    let mut stable = true;
    let mut last = None;
    for _ in 0..reps {
        let start = Instant::now();
        let out = run(trace, cp, config, &opts)?;
        mon_wall.push(start.elapsed().as_nanos() as f64);
        mon.push(per_event(&|i| out.verdicts[i].latency_ns));
        let decisions: Vec<_> = out.verdicts.iter().map(|v| v.decision).collect();
        match &first {
            None => first = Some(decisions),
            Some(d) => stable &= *d == decisions,
        }
        last = Some(out);

        let start = Instant::now();
        let (verdicts, _) = run_unmonitored(trace, config, "wall")?;
        unmon_wall.push(start.elapsed().as_nanos() as f64);
        unmon.push(per_event(&|i| verdicts[i].latency_ns));
    }
    let out = last.expect("at least one rep");
    let (m, u) = (mean(&mon), mean(&unmon));
    let row = PolicyBench {
        id: id.to_string(),
        category: category.to_string(),
        events_matched: matched.len(),
        blocked: out.verdicts.iter().filter(|v| v.blocked()).count(),
        channel_messages: out.channel_log.len(),
        unmonitored_mean_ns: u,
        monitored_mean_ns: m,
        overhead_pct: (m - u) / u.max(1.0) * 100.0,
        unmonitored_trace_ns: mean(&unmon_wall),
        monitored_trace_ns: mean(&mon_wall),
        decisions_stable: stable,
    };
    Ok((row, MemoryRow { id: id.to_string(), state: state_size(&out.global) }))
}

pub fn bench_policies(
    trace_id: &str,
    policies: &[&dyn CorpusPolicy],
    trace: &[ResolvedEvent],
    config: &DeviceConfig,
    reps: usize,
) -> Result<BenchReport, BenchError> {
    if reps < MIN_REPS {
        return Err(BenchError::TooFewReps(reps));
    }
    let (mut rows, mut memory_rows) = (Vec::new(), Vec::new());
    for p in policies {
        let cp = p.compile().map_err(|_| BenchError::Compile(p.id().to_string()))?;
        let (row, mem) = bench_compiled(p.id(), p.category().label(), &cp, trace, config, reps)?;
        rows.push(row);
        memory_rows.push(mem);
    }
    Ok(BenchReport {
        trace_id: trace_id.to_string(),
        trace_events: trace.len(),
        repetitions: reps,
        service_cost_ns: config.service_cost_ns,
        rows,
        memory_rows,
    })
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Plain-text table, one row per policy.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: {} events, {} reps, service cost {} ns",
            self.trace_id, self.trace_events, self.repetitions, self.service_cost_ns
        );
        let _ = writeln!(
            s,
            "{:<20} {:>7} {:>7} {:>7} {:>12} {:>12} {:>9} {:>12} {:>12} {:>8} {:>6}",
            "policy",
            "matched",
            "blocked",
            "msgs",
            "unmon ns",
            "mon ns",
            "overhead",
            "unmon trace",
            "mon trace",
            "mem B",
            "stable"
        );
        for (p, m) in self.rows.iter().zip(&self.memory_rows) {
            let _ = writeln!(
                s,
                "{:<20} {:>7} {:>7} {:>7} {:>12.0} {:>12.0} {:>8.1}% {:>12.0} {:>12.0} {:>8} {:>6}",
                p.id,
                p.events_matched,
                p.blocked,
                p.channel_messages,
                p.unmonitored_mean_ns,
                p.monitored_mean_ns,
                p.overhead_pct,
                p.unmonitored_trace_ns,
                p.monitored_trace_ns,
                m.state.total_bytes,
                if p.decisions_stable { "yes" } else { "NO" }
            );
        }
        let mem: Vec<_> = self.memory_rows.iter().filter(|m| !m.state.vars.is_empty()).collect();
        if !mem.is_empty() {
            let _ = writeln!(s, "\nglobal state");
            for m in mem {
                for v in &m.state.vars {
                    let _ = writeln!(
                        s,
                        "{:<20} {:<14} {:<10} {:>6} elems {:>8} B",
                        m.id, v.name, v.kind, v.elements, v.bytes
                    );
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PolicyRegistry;
    use crate::sim::{resolve_trace, TraceEvent};
    use serde_json::json;

    #[test]
    fn report_round_trip_and_rep_floor() {
        let reg = PolicyRegistry::standard();
        let trace: Vec<_> = (0..20)
            .map(|i| TraceEvent::new(i * 1000, "a", "SmsManager.sendTextMessage", vec![json!("1"), json!("x")]))
            .collect();
        let trace = resolve_trace(&trace).unwrap();
        let config = DeviceConfig::default();
        let p = reg.select("MsgCntLmtHr,WiFiLmt").unwrap();
        assert!(matches!(bench_policies("inline", &p, &trace, &config, 29), Err(BenchError::TooFewReps(29))));
        let r = bench_policies("inline", &p, &trace, &config, 30).unwrap();
        assert_eq!(r.rows[0].events_matched, 20);
        assert_eq!(r.rows[0].channel_messages, 80);
        assert_eq!(r.rows[1].events_matched, 0);
        assert!(r.rows.iter().all(|p| p.decisions_stable));
        assert_eq!(r.memory_rows[0].state.list_elements, 20);
        assert_eq!(BenchReport::from_json(&r.to_json()).unwrap(), r);
        assert!(r.table().contains("MsgCntLmtHr"));
    }
}
