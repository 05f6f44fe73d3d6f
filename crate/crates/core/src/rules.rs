//! Compiled policies: dense ids, dispatch table and rule locality.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{
    parse_policy, rule_label, validate_policy, ActionDecl, ConditionDecl, EventDecl, Formula, ParseError, Phase, Side,
    ValidatedPolicy, ValidationError,
};
use crate::expr::{Namespace, Stmt};
use crate::state::StateTypes;

pub type EventId = usize;
pub type CondId = usize;
pub type ActionId = usize;
pub type RuleId = usize;

/// Where a rule has to be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Locality {
    /// Every guard condition and action is application-side.
    LocalOnly,
    NeedsGlobal,
}

/// Key used to find the rules an intercepted call triggers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DispatchKey {
    pub namespace: String,
    pub method: String,
    pub phase: Phase,
}

impl DispatchKey {
    pub fn new(namespace: &str, method: &str, phase: Phase) -> Self {
        Self { namespace: namespace.to_string(), method: method.to_string(), phase }
    }

    pub fn of(e: &EventDecl) -> Self {
        Self::new(&e.pattern.namespace, &e.pattern.method, e.phase)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledRule {
    pub id: RuleId,
    pub name: String,
    pub trigger: EventId,
    pub guard: Formula<CondId>,
    pub actions: Vec<ActionId>,
    pub locality: Locality,
    /// Guard conditions evaluated in the application, in first-use order.
    pub app_conditions: Vec<CondId>,
    pub global_conditions: Vec<CondId>,
    /// Event parameters the central monitor reads as `event.x`.
    pub forwarded: Vec<String>,
}

impl CompiledRule {
    pub fn app_actions<'a>(&'a self, cp: &'a CompiledPolicy) -> impl Iterator<Item = ActionId> + 'a {
        self.actions.iter().copied().filter(move |a| cp.actions[*a].side() == Side::ApplicationSide)
    }

    pub fn global_actions<'a>(&'a self, cp: &'a CompiledPolicy) -> impl Iterator<Item = ActionId> + 'a {
        self.actions.iter().copied().filter(move |a| cp.actions[*a].side() == Side::GlobalSide)
    }
}

#[derive(Debug, Clone)]
pub struct CompiledPolicy {
    pub events: Vec<EventDecl>,
    pub conditions: Vec<ConditionDecl>,
    pub actions: Vec<ActionDecl>,
    pub rules: Vec<CompiledRule>,
    /// Rules per intercepted call, in declaration order. Every declared
    /// event has an entry even if no rule uses it.
    pub dispatch: HashMap<DispatchKey, Vec<RuleId>>,
    pub state_types: StateTypes,
    pub source: ValidatedPolicy,
}

/// Anything that can go wrong turning source text into a compiled policy.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("{0}")]
    Parse(ParseError),
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ValidationError>),
}

impl CompileError {
    /// One diagnostic per line, `LINE:COL: code: message`.
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            CompileError::Parse(e) => vec![e.to_string()],
            CompileError::Invalid(errs) => errs.iter().map(|e| e.to_string()).collect(),
        }
    }
}

/// Parses, validates and compiles a policy.
pub fn compile_source(src: &str) -> Result<CompiledPolicy, CompileError> {
    let spec = parse_policy(src).map_err(CompileError::Parse)?;
    let validated = validate_policy(&spec).map_err(CompileError::Invalid)?;
    Ok(compile(validated))
}

/// Builds the dispatch table and rule metadata of a validated policy.
pub fn compile(validated: ValidatedPolicy) -> CompiledPolicy {
    let spec = &validated.spec;
    let event_id = |n: &str| spec.events.iter().position(|e| e.name == n).expect("validated trigger");
    let cond_id = |n: &String| spec.conditions.iter().position(|c| &c.name == n).expect("validated condition");
    let action_id = |n: &String| spec.actions.iter().position(|a| &a.name == n).expect("validated action");

    let mut dispatch: HashMap<DispatchKey, Vec<RuleId>> = HashMap::new();
    for e in &spec.events {
        dispatch.entry(DispatchKey::of(e)).or_default();
    }
    let mut rules = Vec::with_capacity(spec.rules.len());
    for (id, r) in spec.rules.iter().enumerate() {
        let trigger = event_id(&r.trigger);
        let guard = r.guard.try_map(&mut |c| Ok::<_, ()>(cond_id(c))).expect("infallible");
        let actions: Vec<ActionId> = r.actions.iter().map(action_id).collect();
        let mut app_conditions = Vec::new();
        let mut global_conditions = Vec::new();
        for c in guard.atoms() {
            let list = match spec.conditions[*c].side() {
                Side::ApplicationSide => &mut app_conditions,
                Side::GlobalSide => &mut global_conditions,
            };
            if !list.contains(c) {
                list.push(*c);
            }
        }
        let any_global_action = actions.iter().any(|a| spec.actions[*a].side() == Side::GlobalSide);
        let locality = if global_conditions.is_empty() && !any_global_action {
            Locality::LocalOnly
        } else {
            Locality::NeedsGlobal
        };
        let mut forwarded = BTreeSet::new();
        for c in &global_conditions {
            for v in spec.conditions[*c].body.vars() {
                if v.ns == Namespace::Event {
                    forwarded.insert(v.name.clone());
                }
            }
        }
        for a in &actions {
            let decl = &spec.actions[*a];
            if decl.side() == Side::GlobalSide {
                for v in decl.body.iter().flat_map(Stmt::vars) {
                    if v.ns == Namespace::Event {
                        forwarded.insert(v.name.clone());
                    }
                }
            }
        }
        dispatch.entry(DispatchKey::of(&spec.events[trigger])).or_default().push(id);
        rules.push(CompiledRule {
            id,
            name: rule_label(r, id),
            trigger,
            guard,
            actions,
            locality,
            app_conditions,
            global_conditions,
            forwarded: forwarded.into_iter().collect(),
        });
    }
    CompiledPolicy {
        events: spec.events.clone(),
        conditions: spec.conditions.clone(),
        actions: spec.actions.clone(),
        rules,
        dispatch,
        state_types: validated.state_types.clone(),
        source: validated,
    }
}

/// Rules triggered by `key`, in declaration order.
pub fn rules_for<'a>(cp: &'a CompiledPolicy, key: &DispatchKey) -> &'a [RuleId] {
    cp.dispatch.get(key).map(Vec::as_slice).unwrap_or(&[])
}

impl CompiledPolicy {
    pub fn rules_for(&self, key: &DispatchKey) -> &[RuleId] {
        rules_for(self, key)
    }

    /// Whether some rule triggered by `key` must consult the central monitor.
    pub fn needs_global(&self, key: &DispatchKey) -> bool {
        self.rules_for(key).iter().any(|r| self.rules[*r].locality == Locality::NeedsGlobal)
    }

    /// Rule name by id.
    pub fn rule_name(&self, id: RuleId) -> &str {
        &self.rules[id].name
    }

    /// Distinct intercepted calls, sorted.
    pub fn dispatch_keys(&self) -> Vec<DispatchKey> {
        let mut keys: Vec<_> = self.dispatch.keys().cloned().collect();
        keys.sort();
        keys
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no truth value for condition {0}")]
pub struct MissingTruthValue(pub CondId);

/// Evaluates a guard over a table of condition truth values.
pub fn evaluate_guard(guard: &Formula<CondId>, truth: &BTreeMap<CondId, bool>) -> Result<bool, MissingTruthValue> {
    Ok(match guard {
        Formula::Atom(c) => *truth.get(c).ok_or(MissingTruthValue(*c))?,
        Formula::Not(f) => !evaluate_guard(f, truth)?,
        Formula::And(l, r) => evaluate_guard(l, truth)? && evaluate_guard(r, truth)?,
        Formula::Or(l, r) => evaluate_guard(l, truth)? || evaluate_guard(r, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SRC: &str = r#"
        Events {
          send(string dest) = { SmsManager.sendTextMessage(string dest, string body) }
          sent(bool ok) = { after SmsManager.sendTextMessage(...) } uponReturning(ok)
          dial(string number) = { TelephonyManager.dialCall(string number) }
        }
        Conditions {
          foreign = { starts_with(number, "+") }
          GlobalSide { quota = { global.n >= 3 } isPath = { event.dest == "x" } }
          ok2 = { ok }
        }
        Actions {
          stop = { block() }
          GlobalSide { inc = { global.n := global.n + 1 } }
        }
        Rules {
          dialRule = dial | foreign -> stop;
          send | quota || isPath -> stop;
          sent | ok2 -> inc;
        }
    "#;

    #[test]
    fn locality_and_forwarding() {
        let cp = compile_source(SRC).unwrap();
        assert_eq!(cp.rules[0].locality, Locality::LocalOnly);
        assert_eq!(cp.rules[1].locality, Locality::NeedsGlobal);
        assert_eq!(cp.rules[1].forwarded, vec!["dest".to_string()]);
        assert_eq!(cp.rules[1].name, "rule#1");
        assert_eq!(cp.rules[2].locality, Locality::NeedsGlobal);
        assert_eq!(cp.rules[2].app_conditions, vec![3]);
        let key = DispatchKey::new("SmsManager", "sendTextMessage", Phase::Before);
        assert_eq!(cp.rules_for(&key), &[1]);
        assert!(cp.needs_global(&key));
        assert!(!cp.needs_global(&DispatchKey::new("TelephonyManager", "dialCall", Phase::Before)));
        assert!(cp.rules_for(&DispatchKey::new("Nope", "x", Phase::Before)).is_empty());
    }

    #[test]
    fn missing_truth_value_is_an_error() {
        let g = Formula::And(Box::new(Formula::Atom(0)), Box::new(Formula::Atom(1)));
        let truth = BTreeMap::from([(0, true)]);
        assert_eq!(evaluate_guard(&g, &truth), Err(MissingTruthValue(1)));
        let truth = BTreeMap::from([(0, false)]);
        assert_eq!(evaluate_guard(&g, &truth), Ok(false));
    }

    fn formula() -> impl Strategy<Value = Formula<CondId>> {
        let leaf = (0usize..4).prop_map(Formula::Atom);
        leaf.prop_recursive(5, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|f| Formula::Not(Box::new(f))),
                (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::And(Box::new(l), Box::new(r))),
                (inner.clone(), inner).prop_map(|(l, r)| Formula::Or(Box::new(l), Box::new(r))),
            ]
        })
    }

    /// Reference semantics written as a truth-table lookup over the four atoms.
    fn reference(f: &Formula<CondId>, bits: u8) -> bool {
        match f {
            Formula::Atom(c) => bits & (1 << c) != 0,
            Formula::Not(x) => !reference(x, bits),
            Formula::And(l, r) => reference(l, bits) & reference(r, bits),
            Formula::Or(l, r) => reference(l, bits) | reference(r, bits),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn guard_matches_truth_table(f in formula(), bits in 0u8..16) {
            let truth: BTreeMap<CondId, bool> = (0..4).map(|c| (c, bits & (1 << c) != 0)).collect();
            prop_assert_eq!(evaluate_guard(&f, &truth).unwrap(), reference(&f, bits));
        }
    }
}
