use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::device::{spin_for, Device};
use super::latency::{probe_by_name, LatencyProbe};
use super::trace::{ResolvedEvent, TraceEvent};
use crate::central::{snapshot, ChannelLogEntry};
use crate::channel::{channel_by_name, ChannelPort};
use crate::config::DeviceConfig;
use crate::dsl::Phase;
use crate::expr::Effect;
use crate::local::{Decision, EventOccurrence, Fault, LocalMonitor, REASON_ALLOWED, REASON_NO_RULE};
use crate::rules::{CompiledPolicy, DispatchKey};
use crate::state::GlobalState;
use crate::time::VirtualClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictDecision {
    Allowed,
    Blocked,
}

/// One line of the verdict log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub t_ms: i64,
    pub app: String,
    pub call: String,
    pub decision: VerdictDecision,
    pub reason: String,
    pub latency_ns: u64,
}

impl Verdict {
    pub fn blocked(&self) -> bool {
        self.decision == VerdictDecision::Blocked
    }
}

pub const REASON_UNMONITORED: &str = "unmonitored";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    /// Channel name, see [`crate::channel::CHANNELS`].
    pub channel: String,
    /// Latency probe name, see [`super::latency::PROBES`].
    pub probe: String,
    /// Dispatch same-timestamp events of different apps on separate threads.
    pub concurrent: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { channel: "in-process".into(), probe: "off".into(), concurrent: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("unknown latency probe `{0}`")]
    UnknownProbe(String),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub verdicts: Vec<Verdict>,
    pub global: GlobalState,
    pub snapshot: String,
    pub channel_log: Vec<ChannelLogEntry>,
    pub device: Device,
    pub monitors: BTreeMap<String, LocalMonitor>,
    /// Rule faults, by trace position.
    pub faults: Vec<(usize, Fault)>,
}

struct Env<'a> {
    cp: Option<&'a CompiledPolicy>,
    channel: Option<&'a dyn ChannelPort>,
    config: &'a DeviceConfig,
    probe: &'a dyn LatencyProbe,
    device: &'a Mutex<Device>,
}

fn apply_attrs(device: &Mutex<Device>, effects: &[Effect]) {
    let attrs: Vec<_> = effects
        .iter()
        .filter_map(|e| match e {
            Effect::SetAttr { name, value } => Some((name, value)),
            _ => None,
        })
        .collect();
    if !attrs.is_empty() {
        let mut d = device.lock().unwrap_or_else(|e| e.into_inner());
        for (n, v) in attrs {
            d.apply_attr(n, v.clone());
        }
    }
}

fn step(ev: &ResolvedEvent, monitor: &mut LocalMonitor, env: &Env<'_>) -> (Verdict, Vec<Fault>) {
    let start = env.probe.stamp();
    let mut faults = Vec::new();
    let verdict = |decision, reason: &str, latency_ns| Verdict {
        t_ms: ev.t,
        app: ev.app.clone(),
        call: ev.api.call_name(),
        decision,
        reason: reason.to_string(),
        latency_ns,
    };
    let (app_id, app_name) = (monitor.app_id.clone(), monitor.app_name.clone());
    let occ = |phase, return_value| EventOccurrence {
        app_id: app_id.clone(),
        app_name: app_name.clone(),
        key: DispatchKey::new(ev.api.namespace, ev.api.method, phase),
        args: ev.args.clone(),
        return_value,
        t: ev.t,
    };
    let before = occ(Phase::Before, None);
    let monitored = env.cp.zip(env.channel);
    let mut fired = false;
    if let Some((cp, channel)) = monitored {
        let r = monitor.intercept(&before, cp, channel, env.config);
        apply_attrs(env.device, &r.effects);
        faults.extend(r.faults);
        if r.decision == Decision::Block {
            let v = verdict(VerdictDecision::Blocked, &r.reason, env.probe.since(start));
            return (v, faults);
        }
        fired |= !r.fired.is_empty();
    }
    spin_for(env.config.service_cost_ns);
    let ret = env.device.lock().unwrap_or_else(|e| e.into_inner()).execute(ev.api.api, &ev.app, &ev.args, ev.t);
    let reason = match monitored {
        None => REASON_UNMONITORED,
        Some((cp, channel)) => {
            let after = occ(Phase::After, Some(ret));
            let r = monitor.intercept(&after, cp, channel, env.config);
            apply_attrs(env.device, &r.effects);
            faults.extend(r.faults);
            fired |= !r.fired.is_empty();
            if fired {
                REASON_ALLOWED
            } else {
                REASON_NO_RULE
            }
        }
    };
    (verdict(VerdictDecision::Allowed, reason, env.probe.since(start)), faults)
}

fn drive(
    trace: &[ResolvedEvent],
    env: &Env<'_>,
    monitors: &mut BTreeMap<String, LocalMonitor>,
    concurrent: bool,
) -> (Vec<Verdict>, Vec<(usize, Fault)>) {
    let mut verdicts: Vec<Option<Verdict>> = vec![None; trace.len()];
    let mut faults = Vec::new();
    let mut clock = VirtualClock::new();
    let mut i = 0;
    while i < trace.len() {
        let t = trace[i].t;
        let advanced = clock.advance_to(t);
        debug_assert!(advanced, "trace is sorted");
        let mut j = i;
        while j < trace.len() && trace[j].t == t {
            j += 1;
        }
        let group = &trace[i..j];
        let mut apps: Vec<&str> = group.iter().map(|e| e.app.as_str()).collect();
        apps.sort_unstable();
        apps.dedup();
        if concurrent && apps.len() > 1 {
            let results: Vec<(usize, Verdict, Vec<Fault>)> = std::thread::scope(|s| {
                let handles: Vec<_> = apps
                    .iter()
                    .map(|app| {
                        let mut m = monitors.remove(*app).expect("registered app");
                        s.spawn(move || {
                            let mut out = Vec::new();
                            for (k, ev) in group.iter().enumerate().filter(|(_, e)| e.app == *app) {
                                let (v, f) = step(ev, &mut m, env);
                                out.push((i + k, v, f));
                            }
                            (m, out)
                        })
                    })
                    .collect();
                let mut all = Vec::new();
                for h in handles {
                    let (m, out) = h.join().expect("monitor thread");
                    monitors.insert(m.app_id.clone(), m);
                    all.extend(out);
                }
                all
            });
            for (pos, v, f) in results {
                verdicts[pos] = Some(v);
                faults.extend(f.into_iter().map(|f| (pos, f)));
            }
        } else {
            for (k, ev) in group.iter().enumerate() {
                let m = monitors.get_mut(&ev.app).expect("registered app");
                let (v, f) = step(ev, m, env);
                verdicts[i + k] = Some(v);
                faults.extend(f.into_iter().map(|f| (i + k, f)));
            }
        }
        i = j;
    }
    faults.sort_by_key(|(pos, _)| *pos);
    (verdicts.into_iter().map(|v| v.expect("every event has a verdict")).collect(), faults)
}

fn register_apps(trace: &[ResolvedEvent]) -> BTreeMap<String, LocalMonitor> {
    trace.iter().map(|e| (e.app.clone(), LocalMonitor::new(&e.app, &e.app))).collect()
}

/// Drives every trace event through the monitors and the device.
pub fn run(
    trace: &[ResolvedEvent],
    cp: &CompiledPolicy,
    config: &DeviceConfig,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let channel =
        channel_by_name(&opts.channel, cp, config).ok_or_else(|| RunError::UnknownChannel(opts.channel.clone()))?;
    let probe = probe_by_name(&opts.probe).ok_or_else(|| RunError::UnknownProbe(opts.probe.clone()))?;
    let device = Mutex::new(Device::new());
    let mut monitors = register_apps(trace);
    let env = Env { cp: Some(cp), channel: Some(channel.port()), config, probe: probe.as_ref(), device: &device };
    let (verdicts, faults) = drive(trace, &env, &mut monitors, opts.concurrent);
    let (global, channel_log) = channel.into_parts();
    Ok(RunOutcome {
        verdicts,
        snapshot: snapshot(&global),
        global,
        channel_log,
        device: device.into_inner().unwrap_or_else(|e| e.into_inner()),
        monitors,
        faults,
    })
}

/// The same trace with monitoring switched off.
pub fn run_unmonitored(
    trace: &[ResolvedEvent],
    config: &DeviceConfig,
    probe: &str,
) -> Result<(Vec<Verdict>, Device), RunError> {
    let probe = probe_by_name(probe).ok_or_else(|| RunError::UnknownProbe(probe.to_string()))?;
    let device = Mutex::new(Device::new());
    let mut monitors = register_apps(trace);
    let env = Env { cp: None, channel: None, config, probe: probe.as_ref(), device: &device };
    let (verdicts, _) = drive(trace, &env, &mut monitors, false);
    Ok((verdicts, device.into_inner().unwrap_or_else(|e| e.into_inner())))
}

/// Splits device activity into sittings: a gap of at least `idle_ms`
/// between consecutive events ends one. Returns `(start, end)` pairs.
pub fn usage_sessions(trace: &[TraceEvent], idle_ms: i64) -> Vec<(i64, i64)> {
    let mut out: Vec<(i64, i64)> = Vec::new();
    for e in trace {
        match out.last_mut() {
            Some((_, end)) if e.t_ms - *end < idle_ms => *end = e.t_ms,
            _ => out.push((e.t_ms, e.t_ms)),
        }
    }
    out
}

/// JSON Lines rendering with sorted keys.
pub fn verdicts_jsonl(verdicts: &[Verdict]) -> String {
    verdicts.iter().map(|v| serde_json::to_value(v).expect("verdict serializes").to_string() + "\n").collect()
}

pub fn channel_log_jsonl(log: &[ChannelLogEntry]) -> String {
    log.iter().map(|e| serde_json::to_value(e).expect("log entry serializes").to_string() + "\n").collect()
}
