//! The central monitor: sole owner of global state. It only ever answers
//! requests; it never initiates contact with an application.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DeviceConfig;
use crate::expr::{eval_bool, exec_body, EvalContext, EvalError};
use crate::rules::{evaluate_guard, ActionId, CompiledPolicy, CondId, Locality, RuleId};
use crate::state::GlobalState;
use crate::value::Value;

/// An application's request to evaluate the global part of one rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorRequest {
    /// Assigned by the channel.
    pub seq: u64,
    pub app_id: String,
    pub app_name: String,
    pub rule_id: RuleId,
    pub t: i64,
    /// Truth value of every application-side condition in the rule's guard.
    pub appside_truth: BTreeMap<CondId, bool>,
    /// Event parameters the global side reads as `event.x`.
    pub forwarded_bindings: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum ReplyError {
    #[error("unknown rule {0}")]
    UnknownRule(RuleId),
    #[error("rule {0} has no global part")]
    NotGlobal(RuleId),
    /// The application-side truth map does not cover exactly the rule's
    /// application-side conditions.
    #[error("truth map does not match rule {0}")]
    StaleTruthMap(RuleId),
    #[error("evaluation failed: {0}")]
    Eval(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorReply {
    pub seq: u64,
    pub guard_result: bool,
    /// Application-side actions the requester must run, in rule order.
    pub appside_actions_to_run: Vec<ActionId>,
    pub error: Option<ReplyError>,
}

impl MonitorReply {
    fn failed(seq: u64, e: ReplyError) -> Self {
        Self { seq, guard_result: false, appside_actions_to_run: Vec::new(), error: Some(e) }
    }
}

/// Evaluates a rule's global conditions, combines them with the
/// application's truth values, and on success runs the rule's global actions.
/// Global state is changed only if the whole request succeeds.
pub fn handle_request(
    req: &MonitorRequest,
    gs: &mut GlobalState,
    cp: &CompiledPolicy,
    config: &DeviceConfig,
) -> MonitorReply {
    let Some(rule) = cp.rules.get(req.rule_id) else {
        return MonitorReply::failed(req.seq, ReplyError::UnknownRule(req.rule_id));
    };
    if rule.locality != Locality::NeedsGlobal {
        return MonitorReply::failed(req.seq, ReplyError::NotGlobal(req.rule_id));
    }
    let expected: Vec<CondId> = {
        let mut v = rule.app_conditions.clone();
        v.sort_unstable();
        v
    };
    if req.appside_truth.keys().copied().collect::<Vec<_>>() != expected {
        return MonitorReply::failed(req.seq, ReplyError::StaleTruthMap(req.rule_id));
    }
    let mut scratch = gs.clone();
    let result: Result<bool, EvalError> = (|| {
        let mut truth = req.appside_truth.clone();
        {
            let ctx = EvalContext::central(
                &req.forwarded_bindings,
                &mut scratch,
                req.t,
                &req.app_id,
                &req.app_name,
                config,
                &cp.state_types,
            );
            for c in &rule.global_conditions {
                truth.insert(*c, eval_bool(&cp.conditions[*c].body, &ctx)?);
            }
        }
        let guard = evaluate_guard(&rule.guard, &truth).map_err(|e| EvalError::UnboundVariable(e.to_string()))?;
        if guard {
            let mut ctx = EvalContext::central(
                &req.forwarded_bindings,
                &mut scratch,
                req.t,
                &req.app_id,
                &req.app_name,
                config,
                &cp.state_types,
            );
            for a in rule.global_actions(cp) {
                exec_body(&cp.actions[a].body, &mut ctx)?;
            }
        }
        Ok(guard)
    })();
    match result {
        Ok(guard) => {
            *gs = scratch;
            let appside_actions_to_run = if guard { rule.app_actions(cp).collect() } else { Vec::new() };
            MonitorReply { seq: req.seq, guard_result: guard, appside_actions_to_run, error: None }
        }
        Err(e) => MonitorReply::failed(req.seq, ReplyError::Eval(e.to_string())),
    }
}

/// Owns global state and serves requests against it.
#[derive(Debug, Clone, Default)]
pub struct CentralMonitor {
    pub state: GlobalState,
}

impl CentralMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn handle(&mut self, req: &MonitorRequest, cp: &CompiledPolicy, config: &DeviceConfig) -> MonitorReply {
        handle_request(req, &mut self.state, cp, config)
    }
}

/// Canonical JSON of the global state: keys sorted, no whitespace.
pub fn snapshot(gs: &GlobalState) -> String {
    serde_json::to_value(gs).expect("state serializes").to_string()
}

pub fn restore(snapshot: &str) -> Result<GlobalState, serde_json::Error> {
    serde_json::from_str(snapshot)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSize {
    pub name: String,
    pub kind: String,
    pub elements: usize,
    pub bytes: usize,
}

/// Memory held by global state, per variable and by kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSize {
    pub vars: Vec<VarSize>,
    pub counters: usize,
    pub lists: usize,
    pub list_elements: usize,
    pub flags: usize,
    pub timestamps: usize,
    pub durations: usize,
    pub strings: usize,
    pub total_bytes: usize,
}

fn value_bytes(v: &Value) -> (usize, usize) {
    match v {
        Value::Bool(_) => (1, 1),
        Value::Int(_) | Value::Timestamp(_) | Value::Duration(_) => (1, 8),
        Value::Str(s) => (1, 24 + s.len()),
        Value::TimestampList(l) => (l.len(), 24 + 8 * l.len()),
        Value::StrList(l) => (l.len(), 24 + l.iter().map(|s| 24 + s.len()).sum::<usize>()),
    }
}

/// Accounts for every global variable and device attribute the central
/// monitor holds.
pub fn state_size(gs: &GlobalState) -> StateSize {
    let mut out = StateSize::default();
    for (prefix, map) in [("", &gs.vars), ("attr:", &gs.attrs)] {
        for (name, v) in map {
            let (elements, bytes) = value_bytes(v);
            match v {
                Value::Int(_) => out.counters += 1,
                Value::Bool(_) => out.flags += 1,
                Value::Timestamp(_) => out.timestamps += 1,
                Value::Duration(_) => out.durations += 1,
                Value::Str(_) => out.strings += 1,
                Value::TimestampList(l) => {
                    out.lists += 1;
                    out.list_elements += l.len();
                }
                Value::StrList(l) => {
                    out.lists += 1;
                    out.list_elements += l.len();
                }
            }
            out.total_bytes += bytes;
            out.vars.push(VarSize {
                name: format!("{prefix}{name}"),
                kind: v.ty().keyword().to_string(),
                elements,
                bytes,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    AppToCentral,
    CentralToApp,
}

/// One message crossing the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLogEntry {
    pub direction: Direction,
    pub seq: u64,
    pub t: i64,
    pub app_id: String,
    pub rule_id: RuleId,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogCheckError {
    #[error("entry {0}: reply with no outstanding request")]
    UnsolicitedReply(usize),
    #[error("entry {0}: request while another is outstanding")]
    Interleaved(usize),
    #[error("entry {0}: reply does not match the outstanding request")]
    Mismatched(usize),
    #[error("entry {0}: sequence number does not increase")]
    SeqOrder(usize),
    #[error("log ends with an unanswered request")]
    Unanswered,
}

/// Checks that every central-to-app message answers the request directly
/// before it, with matching sequence number, app and rule. This is what
/// makes the channel one-way initiated and non-interleaved.
pub fn check_channel_log(log: &[ChannelLogEntry]) -> Result<(), LogCheckError> {
    let mut open: Option<&ChannelLogEntry> = None;
    let mut last_seq: Option<u64> = None;
    for (i, e) in log.iter().enumerate() {
        match e.direction {
            Direction::AppToCentral => {
                if open.is_some() {
                    return Err(LogCheckError::Interleaved(i));
                }
                if last_seq.is_some_and(|s| e.seq <= s) {
                    return Err(LogCheckError::SeqOrder(i));
                }
                last_seq = Some(e.seq);
                open = Some(e);
            }
            Direction::CentralToApp => {
                let Some(req) = open.take() else {
                    return Err(LogCheckError::UnsolicitedReply(i));
                };
                if req.seq != e.seq || req.app_id != e.app_id || req.rule_id != e.rule_id {
                    return Err(LogCheckError::Mismatched(i));
                }
            }
        }
    }
    if open.is_some() {
        return Err(LogCheckError::Unanswered);
    }
    Ok(())
}

/// Re-executes the logged requests, in log order, against fresh global
/// state and returns the final snapshot.
pub fn replay_requests(
    log: &[ChannelLogEntry],
    cp: &CompiledPolicy,
    config: &DeviceConfig,
) -> Result<String, serde_json::Error> {
    let mut gs = GlobalState::new();
    for e in log.iter().filter(|e| e.direction == Direction::AppToCentral) {
        let req: MonitorRequest = serde_json::from_value(e.payload.clone())?;
        handle_request(&req, &mut gs, cp, config);
    }
    Ok(snapshot(&gs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::compile_source;
    use crate::value::Value;

    const SRC: &str = r#"
        Events { send() = { SmsManager.sendTextMessage(...) } }
        Conditions { GlobalSide { full = { global.n >= 2 } } }
        Actions { stop = { block() } GlobalSide { inc = { global.n := global.n + 1 } } }
        Rules { send | full -> stop; send | !full -> inc; }
    "#;

    fn req(rule_id: RuleId, t: i64) -> MonitorRequest {
        MonitorRequest {
            seq: 1,
            app_id: "a".into(),
            app_name: "a".into(),
            rule_id,
            t,
            appside_truth: BTreeMap::new(),
            forwarded_bindings: BTreeMap::new(),
        }
    }

    #[test]
    fn counting_and_blocking() {
        let cp = compile_source(SRC).unwrap();
        let cfg = DeviceConfig::default();
        let mut gs = GlobalState::new();
        for _ in 0..2 {
            assert!(!handle_request(&req(0, 0), &mut gs, &cp, &cfg).guard_result);
            assert!(handle_request(&req(1, 0), &mut gs, &cp, &cfg).guard_result);
        }
        let r = handle_request(&req(0, 0), &mut gs, &cp, &cfg);
        assert!(r.guard_result);
        assert_eq!(r.appside_actions_to_run, vec![0]);
        assert_eq!(gs.vars.get("n"), Some(&Value::Int(2)));
        assert_eq!(snapshot(&gs), r#"{"attrs":{},"vars":{"n":{"int":2}}}"#);
        assert_eq!(restore(&snapshot(&gs)).unwrap(), gs);
    }

    #[test]
    fn bad_requests_leave_state_alone() {
        let cp = compile_source(SRC).unwrap();
        let cfg = DeviceConfig::default();
        let mut gs = GlobalState::new();
        let r = handle_request(&req(9, 0), &mut gs, &cp, &cfg);
        assert_eq!(r.error, Some(ReplyError::UnknownRule(9)));
        let mut stale = req(1, 0);
        stale.appside_truth.insert(0, true);
        assert_eq!(handle_request(&stale, &mut gs, &cp, &cfg).error, Some(ReplyError::StaleTruthMap(1)));
        assert_eq!(gs, GlobalState::new());
    }

    #[test]
    fn size_accounting() {
        let mut gs = GlobalState::new();
        gs.vars.insert("n".into(), Value::Int(4));
        gs.vars.insert("times".into(), Value::TimestampList(vec![1, 2, 3]));
        let s = state_size(&gs);
        assert_eq!((s.counters, s.lists, s.list_elements), (1, 1, 3));
        assert_eq!(s.total_bytes, 8 + 24 + 24);
    }

    fn entry(direction: Direction, seq: u64) -> ChannelLogEntry {
        ChannelLogEntry { direction, seq, t: 0, app_id: "a".into(), rule_id: 0, payload: serde_json::Value::Null }
    }

    #[test]
    fn log_checks() {
        use Direction::*;
        assert!(check_channel_log(&[entry(AppToCentral, 1), entry(CentralToApp, 1)]).is_ok());
        assert_eq!(check_channel_log(&[entry(CentralToApp, 1)]), Err(LogCheckError::UnsolicitedReply(0)));
        assert_eq!(
            check_channel_log(&[entry(AppToCentral, 1), entry(AppToCentral, 2)]),
            Err(LogCheckError::Interleaved(1))
        );
        assert_eq!(check_channel_log(&[entry(AppToCentral, 1)]), Err(LogCheckError::Unanswered));
    }
}
