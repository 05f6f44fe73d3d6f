//! Per-application monitors. Each one intercepts its app's API calls,
//! evaluates application-side conditions against its own local state, and
//! asks the central monitor about the rest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::central::MonitorRequest;
use crate::channel::ChannelPort;
use crate::config::DeviceConfig;
use crate::dsl::{ArgPattern, EventDecl, Phase};
use crate::expr::{eval_bool, exec_body, Effect, EffectList, EvalContext, EvalError};
use crate::rules::{evaluate_guard, ActionId, CompiledPolicy, CompiledRule, CondId, DispatchKey, Locality, RuleId};
use crate::state::LocalState;
use crate::value::Value;

/// One intercepted call, before or after it runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventOccurrence {
    pub app_id: String,
    pub app_name: String,
    pub key: DispatchKey,
    pub args: Vec<Value>,
    pub return_value: Option<Value>,
    pub t: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("call has {found} argument(s), pattern expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("argument `{0}` has the wrong type")]
    TypeMismatch(String),
    #[error("no return value to bind to `{0}`")]
    MissingReturn(String),
}

/// Binds an event's parameters from a call: pattern parameters by position,
/// the return binding from the return value.
pub fn bind_params(
    event: &EventDecl,
    args: &[Value],
    return_value: Option<&Value>,
) -> Result<BTreeMap<String, Value>, BindError> {
    let mut out = BTreeMap::new();
    if let ArgPattern::Exact(params) = &event.pattern.args {
        if params.len() != args.len() {
            return Err(BindError::ArityMismatch { expected: params.len(), found: args.len() });
        }
        for (p, v) in params.iter().zip(args) {
            if v.ty() != p.ty {
                return Err(BindError::TypeMismatch(p.name.clone()));
            }
            out.insert(p.name.clone(), v.clone());
        }
    }
    if let Some(b) = &event.return_binding {
        let v = return_value.ok_or_else(|| BindError::MissingReturn(b.clone()))?;
        let ty = event.header_params.iter().find(|p| &p.name == b).map(|p| p.ty);
        if ty.is_some_and(|t| t != v.ty()) {
            return Err(BindError::TypeMismatch(b.clone()));
        }
        out.insert(b.clone(), v.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Proceed,
    Block,
}

/// A rule that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub rule: RuleId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterceptResult {
    pub decision: Decision,
    pub reason: String,
    pub effects: EffectList,
    pub faults: Vec<Fault>,
    /// Rules whose guard held.
    pub fired: Vec<RuleId>,
}

pub const REASON_CHANNEL_ERROR: &str = "ChannelError";
pub const REASON_NO_RULE: &str = "no rule";
pub const REASON_ALLOWED: &str = "allowed";

/// Monitor embedded in one application.
#[derive(Debug, Clone)]
pub struct LocalMonitor {
    pub app_id: String,
    pub app_name: String,
    pub state: LocalState,
}

enum Outcome {
    Guard(bool, Vec<ActionId>),
    ChannelDown,
    Fault(String),
}

impl LocalMonitor {
    pub fn new(app_id: &str, app_name: &str) -> Self {
        Self { app_id: app_id.to_string(), app_name: app_name.to_string(), state: LocalState::new() }
    }

    /// Runs every rule triggered by `occ`, in declaration order. A block by
    /// one rule does not stop later rules from running.
    ///
    /// Fails closed: if the central monitor cannot be reached for any rule,
    /// the call is blocked; if a rule cannot be evaluated, any blocking
    /// action of that rule takes effect.
    pub fn intercept(
        &mut self,
        occ: &EventOccurrence,
        cp: &CompiledPolicy,
        channel: &dyn ChannelPort,
        config: &DeviceConfig,
    ) -> InterceptResult {
        let mut res = InterceptResult {
            decision: Decision::Proceed,
            reason: String::new(),
            effects: Vec::new(),
            faults: Vec::new(),
            fired: Vec::new(),
        };
        let rules = cp.rules_for(&occ.key);
        let mut block_reason: Option<String> = None;
        let mut channel_block = false;

        // The after-call half of a globally checked call can only be
        // recorded if the channel is up, so refuse the call up front.
        if occ.key.phase == Phase::Before && !channel.is_connected() {
            let after = DispatchKey { phase: Phase::After, ..occ.key.clone() };
            if cp.needs_global(&after) {
                channel_block = true;
            }
        }

        let mut bindings_cache: BTreeMap<usize, Result<BTreeMap<String, Value>, BindError>> = BTreeMap::new();
        for &rid in rules {
            let rule = &cp.rules[rid];
            let bindings = bindings_cache
                .entry(rule.trigger)
                .or_insert_with(|| bind_params(&cp.events[rule.trigger], &occ.args, occ.return_value.as_ref()));
            let outcome = match bindings {
                Err(e) => Outcome::Fault(e.to_string()),
                Ok(b) => self.evaluate(rule, b, occ, cp, channel, config),
            };
            let to_run = match outcome {
                Outcome::Guard(false, _) => continue,
                Outcome::Guard(true, actions) => actions,
                Outcome::ChannelDown => {
                    channel_block = true;
                    continue;
                }
                Outcome::Fault(message) => {
                    res.faults.push(Fault { rule: rid, message });
                    if rule_blocks(rule, cp) && block_reason.is_none() {
                        block_reason = Some(rule.name.clone());
                    }
                    continue;
                }
            };
            res.fired.push(rid);
            let Ok(b) = bindings else { unreachable!("guard held on bound event") };
            let mut ctx = EvalContext::application(
                b,
                &mut self.state,
                occ.t,
                &occ.app_id,
                &occ.app_name,
                config,
                &cp.state_types,
            );
            for a in to_run {
                match exec_body(&cp.actions[a].body, &mut ctx) {
                    Ok(effects) => {
                        if effects.contains(&Effect::BlockCall) && block_reason.is_none() {
                            block_reason = Some(rule.name.clone());
                        }
                        res.effects.extend(effects);
                    }
                    Err(e) => res.faults.push(Fault { rule: rid, message: e.to_string() }),
                }
            }
        }

        if channel_block {
            res.decision = Decision::Block;
            res.reason = REASON_CHANNEL_ERROR.to_string();
        } else if let Some(r) = block_reason {
            res.decision = Decision::Block;
            res.reason = r;
        } else if res.fired.is_empty() {
            res.reason = REASON_NO_RULE.to_string();
        } else {
            res.reason = REASON_ALLOWED.to_string();
        }
        res
    }

    fn evaluate(
        &mut self,
        rule: &CompiledRule,
        bindings: &BTreeMap<String, Value>,
        occ: &EventOccurrence,
        cp: &CompiledPolicy,
        channel: &dyn ChannelPort,
        config: &DeviceConfig,
    ) -> Outcome {
        let truth: Result<BTreeMap<CondId, bool>, EvalError> = {
            let ctx = EvalContext::application(
                bindings,
                &mut self.state,
                occ.t,
                &occ.app_id,
                &occ.app_name,
                config,
                &cp.state_types,
            );
            rule.app_conditions.iter().map(|c| Ok((*c, eval_bool(&cp.conditions[*c].body, &ctx)?))).collect()
        };
        let truth = match truth {
            Ok(t) => t,
            Err(e) => return Outcome::Fault(e.to_string()),
        };
        match rule.locality {
            Locality::LocalOnly => match evaluate_guard(&rule.guard, &truth) {
                Ok(g) => Outcome::Guard(g, rule.app_actions(cp).collect()),
                Err(e) => Outcome::Fault(e.to_string()),
            },
            Locality::NeedsGlobal => {
                let req = MonitorRequest {
                    seq: 0,
                    app_id: occ.app_id.clone(),
                    app_name: occ.app_name.clone(),
                    rule_id: rule.id,
                    t: occ.t,
                    appside_truth: truth,
                    forwarded_bindings: rule
                        .forwarded
                        .iter()
                        .filter_map(|n| bindings.get(n).map(|v| (n.clone(), v.clone())))
                        .collect(),
                };
                match channel.request(req) {
                    Err(_) => Outcome::ChannelDown,
                    Ok(reply) => match reply.error {
                        Some(e) => Outcome::Fault(e.to_string()),
                        None => Outcome::Guard(reply.guard_result, reply.appside_actions_to_run),
                    },
                }
            }
        }
    }
}

fn rule_blocks(rule: &CompiledRule, cp: &CompiledPolicy) -> bool {
    rule.app_actions(cp).any(|a| cp.actions[a].blocks())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channel_by_name, DisconnectedChannel};
    use crate::rules::compile_source;

    const SRC: &str = r#"
        Events {
          send(string dest) = { SmsManager.sendTextMessage(string dest, string body) }
          sent(bool ok) = { after SmsManager.sendTextMessage(...) } uponReturning(ok)
        }
        Conditions {
          empty = { dest == "" }
          GlobalSide { many = { global.n >= 2 } }
          ok1 = { ok }
        }
        Actions {
          stop = { block() }
          mark = { local.tries := local.tries + 1 }
          GlobalSide { inc = { global.n := global.n + 1 } }
        }
        Rules {
          first = send | empty -> stop;
          count = send | !empty -> mark;
          quota = send | many -> stop;
          sent | ok1 -> inc;
        }
    "#;

    fn occ(phase: Phase, dest: &str, ret: Option<bool>) -> EventOccurrence {
        EventOccurrence {
            app_id: "a".into(),
            app_name: "a".into(),
            key: DispatchKey::new("SmsManager", "sendTextMessage", phase),
            args: vec![Value::Str(dest.into()), Value::Str("hi".into())],
            return_value: ret.map(Value::Bool),
            t: 0,
        }
    }

    #[test]
    fn sequential_rules_and_global_quota() {
        let cp = compile_source(SRC).unwrap();
        let cfg = DeviceConfig::default();
        let ch = channel_by_name("in-process", &cp, &cfg).unwrap();
        let mut m = LocalMonitor::new("a", "a");
        let r = m.intercept(&occ(Phase::Before, "", None), &cp, ch.port(), &cfg);
        assert_eq!((r.decision, r.reason.as_str()), (Decision::Block, "first"));
        for _ in 0..2 {
            let r = m.intercept(&occ(Phase::Before, "x", None), &cp, ch.port(), &cfg);
            assert_eq!(r.decision, Decision::Proceed);
            assert_eq!(r.reason, "allowed");
            m.intercept(&occ(Phase::After, "x", Some(true)), &cp, ch.port(), &cfg);
        }
        let r = m.intercept(&occ(Phase::Before, "x", None), &cp, ch.port(), &cfg);
        assert_eq!((r.decision, r.reason.as_str()), (Decision::Block, "quota"));
        assert_eq!(m.state.vars.get("tries"), Some(&Value::Int(3)));
    }

    #[test]
    fn disconnected_channel_fails_closed() {
        let cp = compile_source(SRC).unwrap();
        let cfg = DeviceConfig::default();
        let mut m = LocalMonitor::new("a", "a");
        let r = m.intercept(&occ(Phase::Before, "x", None), &cp, &DisconnectedChannel, &cfg);
        assert_eq!((r.decision, r.reason.as_str()), (Decision::Block, REASON_CHANNEL_ERROR));
    }

    #[test]
    fn bind_errors() {
        let cp = compile_source(SRC).unwrap();
        assert_eq!(
            bind_params(&cp.events[0], &[Value::Str("x".into())], None),
            Err(BindError::ArityMismatch { expected: 2, found: 1 })
        );
        assert_eq!(bind_params(&cp.events[1], &[], None), Err(BindError::MissingReturn("ok".into())));
    }
}
