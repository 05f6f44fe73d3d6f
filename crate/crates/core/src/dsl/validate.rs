//! Name resolution, side discipline and typing for parsed policies.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::error::ValidationError;
use crate::expr::types::{lookup_fixed, Checker, Lookup, TypeScope};
use crate::expr::{Expr, Namespace, Stmt, TypeError, VarRef};
use crate::state::StateTypes;
use crate::value::Ty;

/// A policy that passed validation, with the inferred type of every state
/// variable it mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedPolicy {
    pub spec: PolicySpec,
    pub state_types: StateTypes,
}

/// Checks `spec` and reports every problem found, ordered by position.
pub fn validate_policy(spec: &PolicySpec) -> Result<ValidatedPolicy, Vec<ValidationError>> {
    let mut v = Validator { spec, errors: Vec::new() };
    v.duplicates();
    v.events();
    v.sides();
    v.rules();
    let state_types = v.types();
    let mut errors = v.errors;
    errors.sort_by_key(|e| (e.span(), e.to_string()));
    errors.dedup();
    if errors.is_empty() {
        Ok(ValidatedPolicy { spec: spec.clone(), state_types })
    } else {
        Err(errors)
    }
}

struct Validator<'a> {
    spec: &'a PolicySpec,
    errors: Vec<ValidationError>,
}

/// One body to type: a condition or action checked under some parameter
/// environment.
#[derive(Clone, Copy)]
enum Body<'a> {
    Condition(usize, &'a Expr),
    Action(usize, &'a [Stmt]),
}

struct InferScope<'a> {
    params: &'a BTreeMap<String, Ty>,
    state: &'a mut BTreeMap<VarRef, Option<Ty>>,
    changed: bool,
}

impl TypeScope for InferScope<'_> {
    fn lookup(&self, var: &VarRef) -> Lookup {
        if var.ns.is_state() {
            match self.state.get(var) {
                Some(Some(t)) => Lookup::Known(*t),
                Some(None) => Lookup::Unknown,
                None => Lookup::Unbound,
            }
        } else {
            lookup_fixed(self.params, var).map_or(Lookup::Unbound, Lookup::Known)
        }
    }

    fn refine(&mut self, var: &VarRef, ty: Ty) {
        if let Some(slot @ None) = self.state.get_mut(var) {
            *slot = Some(ty);
            self.changed = true;
        }
    }
}

fn stmt_reads(s: &Stmt) -> Vec<&VarRef> {
    s.exprs().into_iter().flat_map(|e| e.vars()).collect()
}

impl<'a> Validator<'a> {
    fn span(&self, kind: DeclKind, i: usize) -> Span {
        self.spec.span(kind, i)
    }

    fn dup_names<'n>(&mut self, kind: DeclKind, names: impl Iterator<Item = (usize, &'n str)>) {
        let mut seen = BTreeSet::new();
        for (i, n) in names {
            if !seen.insert(n) {
                self.errors.push(ValidationError::DuplicateName {
                    span: self.span(kind, i),
                    kind: kind.label(),
                    name: n.to_string(),
                });
            }
        }
    }

    fn duplicates(&mut self) {
        let spec = self.spec;
        self.dup_names(DeclKind::Event, spec.events.iter().enumerate().map(|(i, e)| (i, e.name.as_str())));
        self.dup_names(DeclKind::Condition, spec.conditions.iter().enumerate().map(|(i, c)| (i, c.name.as_str())));
        self.dup_names(DeclKind::Action, spec.actions.iter().enumerate().map(|(i, a)| (i, a.name.as_str())));
        self.dup_names(
            DeclKind::Rule,
            spec.rules.iter().enumerate().filter_map(|(i, r)| r.name.as_deref().map(|n| (i, n))),
        );
        for (i, e) in spec.events.iter().enumerate() {
            let span = self.span(DeclKind::Event, i);
            for list in [
                &e.header_params,
                match &e.pattern.args {
                    ArgPattern::Exact(p) => p,
                    ArgPattern::Any => &e.header_params,
                },
            ] {
                let mut seen = BTreeSet::new();
                for p in list {
                    if !seen.insert(&p.name) {
                        self.errors.push(ValidationError::DuplicateName {
                            span,
                            kind: "parameter",
                            name: p.name.clone(),
                        });
                    }
                }
            }
        }
    }

    fn events(&mut self) {
        for (i, e) in self.spec.events.iter().enumerate() {
            let span = self.span(DeclKind::Event, i);
            if e.group == Some(Side::GlobalSide) {
                self.errors.push(ValidationError::SideViolation {
                    span,
                    decl: e.name.clone(),
                    detail: "events are intercepted inside applications and cannot be global-side".into(),
                });
            }
            if let Some(b) = &e.return_binding {
                if e.phase == Phase::Before {
                    self.errors.push(ValidationError::ReturnBindingOnBeforeEvent { span, event: e.name.clone() });
                }
                if !e.header_params.iter().any(|p| &p.name == b) {
                    self.errors.push(ValidationError::UnresolvedName {
                        span,
                        name: b.clone(),
                        context: format!("return binding of event `{}`", e.name),
                    });
                }
            }
            let pattern: &[Param] = match &e.pattern.args {
                ArgPattern::Exact(p) => p,
                ArgPattern::Any => &[],
            };
            for h in &e.header_params {
                match pattern.iter().find(|p| p.name == h.name) {
                    Some(p) if p.ty != h.ty => self.errors.push(ValidationError::TypeError {
                        span,
                        decl: e.name.clone(),
                        detail: format!(
                            "parameter `{}` is declared {} in the header but {} in the call pattern",
                            h.name, h.ty, p.ty
                        ),
                    }),
                    Some(_) => {}
                    None if e.return_binding.as_ref() == Some(&h.name) => {}
                    None => self.errors.push(ValidationError::UnboundParameter {
                        span,
                        event: e.name.clone(),
                        param: h.name.clone(),
                    }),
                }
            }
        }
    }

    fn side_violation(&mut self, kind: DeclKind, i: usize, decl: &str, detail: String) {
        self.errors.push(ValidationError::SideViolation { span: self.span(kind, i), decl: decl.to_string(), detail });
    }

    fn sides(&mut self) {
        for (i, c) in self.spec.conditions.iter().enumerate() {
            if c.tag.conflicting() {
                self.side_violation(DeclKind::Condition, i, &c.name, "group and body disagree on the side".into());
            }
            for v in c.body.vars() {
                if let Some(detail) = read_violation(c.side(), v) {
                    self.side_violation(DeclKind::Condition, i, &c.name, detail);
                }
            }
        }
        for (i, a) in self.spec.actions.iter().enumerate() {
            if a.tag.conflicting() {
                self.side_violation(DeclKind::Action, i, &a.name, "group and body disagree on the side".into());
            }
            let side = a.side();
            for s in &a.body {
                for v in stmt_reads(s) {
                    if let Some(detail) = read_violation(side, v) {
                        self.side_violation(DeclKind::Action, i, &a.name, detail);
                    }
                }
                if let Some(t) = s.target() {
                    let bad = match side {
                        Side::ApplicationSide => t.ns == Namespace::Global,
                        Side::GlobalSide => t.ns == Namespace::Local,
                    };
                    if bad {
                        self.side_violation(
                            DeclKind::Action,
                            i,
                            &a.name,
                            format!("`{t}` cannot be written on the {side}"),
                        );
                    }
                }
                if matches!(s, Stmt::Block) && side == Side::GlobalSide {
                    self.side_violation(
                        DeclKind::Action,
                        i,
                        &a.name,
                        "`block()` runs in the application and cannot be global-side".into(),
                    );
                }
            }
        }
    }

    fn rules(&mut self) {
        let spec = self.spec;
        for (i, r) in spec.rules.iter().enumerate() {
            let span = self.span(DeclKind::Rule, i);
            let rname = rule_label(r, i);
            let event = spec.event(&r.trigger);
            if event.is_none() {
                self.errors.push(ValidationError::UnresolvedName {
                    span,
                    name: r.trigger.clone(),
                    context: format!("trigger of rule `{rname}`"),
                });
            }
            for c in r.guard.atoms() {
                if spec.condition(c).is_none() {
                    self.errors.push(ValidationError::UnresolvedName {
                        span,
                        name: c.clone(),
                        context: format!("guard of rule `{rname}`"),
                    });
                }
            }
            for a in &r.actions {
                match spec.action(a) {
                    None => self.errors.push(ValidationError::UnresolvedName {
                        span,
                        name: a.clone(),
                        context: format!("actions of rule `{rname}`"),
                    }),
                    Some(decl) if decl.blocks() && event.is_some_and(|e| e.phase == Phase::After) => self
                        .errors
                        .push(ValidationError::BlockAfterReturn { span, rule: rname.clone(), action: a.clone() }),
                    Some(_) => {}
                }
            }
        }
    }

    /// Parameter environments each condition and action is checked under:
    /// one per distinct triggering event, or an empty one if unused.
    fn contexts(&self) -> Vec<(Body<'a>, BTreeMap<String, Ty>, Option<String>)> {
        let spec = self.spec;
        let mut cond_events: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); spec.conditions.len()];
        let mut act_events: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); spec.actions.len()];
        for r in &spec.rules {
            if spec.event(&r.trigger).is_none() {
                continue;
            }
            for c in r.guard.atoms() {
                if let Some(i) = spec.conditions.iter().position(|d| &d.name == c) {
                    cond_events[i].insert(&r.trigger);
                }
            }
            for a in &r.actions {
                if let Some(i) = spec.actions.iter().position(|d| &d.name == a) {
                    act_events[i].insert(&r.trigger);
                }
            }
        }
        let params_of = |ev: &str| -> BTreeMap<String, Ty> {
            spec.event(ev).map(|e| e.params().into_iter().map(|p| (p.name, p.ty)).collect()).unwrap_or_default()
        };
        let mut out = Vec::new();
        let mut push = |body: Body<'a>, events: &BTreeSet<&str>| {
            if events.is_empty() {
                out.push((body, BTreeMap::new(), None));
            }
            for ev in events {
                out.push((body, params_of(ev), Some(ev.to_string())));
            }
        };
        for (i, c) in spec.conditions.iter().enumerate() {
            push(Body::Condition(i, &c.body), &cond_events[i]);
        }
        for (i, a) in spec.actions.iter().enumerate() {
            push(Body::Action(i, &a.body), &act_events[i]);
        }
        out
    }

    fn types(&mut self) -> StateTypes {
        let spec = self.spec;
        let mut state: BTreeMap<VarRef, Option<Ty>> = BTreeMap::new();
        for c in &spec.conditions {
            for v in c.body.vars() {
                if v.ns.is_state() {
                    state.insert(v.clone(), None);
                }
            }
        }
        for a in &spec.actions {
            for s in &a.body {
                for v in s.vars() {
                    if v.ns.is_state() {
                        state.insert(v.clone(), None);
                    }
                }
            }
        }
        let contexts = self.contexts();
        // Inference: refine untyped state variables until nothing changes.
        for _ in 0..=state.len() {
            let mut changed = false;
            for (body, params, _) in &contexts {
                let mut scope = InferScope { params, state: &mut state, changed: false };
                let _ = check_body(&mut scope, *body);
                changed |= scope.changed;
            }
            if !changed {
                break;
            }
        }
        let mut uninferred = BTreeSet::new();
        for (body, params, event) in &contexts {
            let mut scope = InferScope { params, state: &mut state, changed: false };
            let result = check_body(&mut scope, *body);
            let (kind, i, name) = match body {
                Body::Condition(i, _) => (DeclKind::Condition, *i, spec.conditions[*i].name.clone()),
                Body::Action(i, _) => (DeclKind::Action, *i, spec.actions[*i].name.clone()),
            };
            let span = self.span(kind, i);
            let mut vars: Vec<&VarRef> = match body {
                Body::Condition(_, e) => e.vars(),
                Body::Action(_, b) => b.iter().flat_map(|s| s.vars()).collect(),
            };
            vars.retain(|v| v.ns.is_state() && scope.state.get(*v) == Some(&None));
            for v in vars {
                if uninferred.insert(v.clone()) {
                    self.errors.push(ValidationError::TypeError {
                        span,
                        decl: name.clone(),
                        detail: TypeError::CannotInfer(v.to_string()).to_string(),
                    });
                }
            }
            if let Err(e) = result {
                let via = event.as_ref().map(|ev| format!(" (triggered by `{ev}`)")).unwrap_or_default();
                self.errors.push(match e {
                    TypeError::UnboundVariable(n) => ValidationError::UnresolvedName {
                        span,
                        name: n,
                        context: format!("in {} `{name}`{via}", kind.label()),
                    },
                    TypeError::CannotInfer(_) => continue,
                    other => ValidationError::TypeError { span, decl: name, detail: format!("{other}{via}") },
                });
            }
        }
        state.into_iter().filter_map(|(v, t)| t.map(|t| (v, t))).collect()
    }
}

fn check_body(scope: &mut InferScope<'_>, body: Body<'_>) -> Result<(), TypeError> {
    let mut checker = Checker::new(scope);
    match body {
        Body::Condition(_, e) => checker.check(e, Ty::Bool),
        Body::Action(_, stmts) => stmts.iter().try_for_each(|s| checker.stmt(s)),
    }
}

fn read_violation(side: Side, v: &VarRef) -> Option<String> {
    match (side, v.ns) {
        (Side::ApplicationSide, Namespace::Global) => {
            Some(format!("`{v}` is global state and cannot be read on the application side"))
        }
        (Side::GlobalSide, Namespace::Local) => {
            Some(format!("`{v}` is application-local state and cannot be read on the global side"))
        }
        (Side::GlobalSide, Namespace::Param) => {
            Some(format!("event parameter `{v}` must be forwarded explicitly as `event.{}` on the global side", v.name))
        }
        _ => None,
    }
}

/// Display name of a rule: its declared name or its position.
pub fn rule_label(r: &RuleDecl, index: usize) -> String {
    r.name.clone().unwrap_or_else(|| format!("rule#{index}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_policy;

    fn errors(src: &str) -> Vec<ValidationError> {
        validate_policy(&parse_policy(src).unwrap()).unwrap_err()
    }

    fn codes(src: &str) -> Vec<&'static str> {
        errors(src).iter().map(|e| e.code()).collect()
    }

    const BASE_EVENTS: &str = "Events { send(string dest) = { SmsManager.sendTextMessage(string dest, string body) } \
        sent(bool ok) = { after SmsManager.sendTextMessage(...) } uponReturning(ok) }";

    #[test]
    fn infers_state_types() {
        let src = format!(
            "{BASE_EVENTS} Conditions {{ GlobalSide {{ full = {{ global.n >= 3 }} soon = {{ now - global.last < minutes(1) }} }} }} \
             Actions {{ GlobalSide {{ inc = {{ global.n := global.n + 1; global.last := now }} }} }} \
             Rules {{ sent | full && soon -> inc }}"
        );
        let v = validate_policy(&parse_policy(&src).unwrap()).unwrap();
        assert_eq!(v.state_types.get(&VarRef::global("n")), Some(&Ty::Int));
        assert_eq!(v.state_types.get(&VarRef::global("last")), Some(&Ty::Timestamp));
    }

    #[test]
    fn unresolved_names() {
        let src = format!("{BASE_EVENTS} Rules {{ nope | c -> a }}");
        assert_eq!(codes(&src), vec!["unresolved-name"; 3]);
    }

    #[test]
    fn duplicates_are_reported() {
        let src = "Conditions { c = { true } c = { false } }";
        assert_eq!(codes(src), vec!["duplicate-name"]);
    }

    #[test]
    fn side_rules() {
        let src = format!(
            "{BASE_EVENTS} Conditions {{ c = {{ global.n > 1 }} GlobalSide {{ g = {{ dest == \"x\" }} }} }} Rules {{ send | c && g -> a }} Actions {{ a = {{ block() }} }}"
        );
        assert_eq!(codes(&src), vec!["side-violation", "side-violation"]);
        let src = "Actions { GlobalSide { a = { block() } b = { local.x := 1 } } c = { global.y := 2 } }";
        assert_eq!(codes(src), vec!["side-violation", "side-violation", "side-violation"]);
        let src = "Actions { GlobalSide { a = { ApplicationSide { return } } } }";
        assert!(codes(src).contains(&"side-violation"));
        let src = "Events { GlobalSide { e() = { A.b(...) } } }";
        assert_eq!(codes(src), vec!["side-violation"]);
    }

    #[test]
    fn event_shape_errors() {
        assert_eq!(
            codes("Events { e(bool r) = { A.b(...) } uponReturning(r) }"),
            vec!["return-binding-on-before-event"]
        );
        assert_eq!(codes("Events { e(string s) = { A.b(...) } }"), vec!["unbound-parameter"]);
        assert_eq!(codes("Events { e(int s) = { A.b(string s) } }"), vec!["type-error"]);
    }

    #[test]
    fn block_after_return() {
        let src = format!(
            "{BASE_EVENTS} Conditions {{ c = {{ ok }} }} Actions {{ a = {{ block() }} }} Rules {{ sent | c -> a }}"
        );
        assert_eq!(codes(&src), vec!["block-after-return"]);
    }

    #[test]
    fn type_errors_carry_positions() {
        let src = format!("{BASE_EVENTS}\nConditions {{\n  c = {{ dest + 1 }}\n}}\nActions {{ a = {{ block() }} }} Rules {{ send | c -> a }}");
        let errs = errors(&src);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code(), "type-error");
        assert_eq!(errs[0].span(), Span { line: 3, col: 3 });
        assert!(errs[0].to_string().starts_with("3:3: type-error: "));
    }

    #[test]
    fn uninferable_state_is_an_error() {
        let src = "Conditions { GlobalSide { c = { global.a == global.b } } }";
        let errs = errors(src);
        assert_eq!(errs.iter().map(|e| e.code()).collect::<Vec<_>>(), vec!["type-error", "type-error"]);
    }

    #[test]
    fn conflicting_state_types() {
        let src = "Conditions { GlobalSide { c = { global.a == 1 } d = { global.a } } }";
        assert_eq!(codes(src), vec!["type-error"]);
    }

    #[test]
    fn unbound_parameter_in_body() {
        let src = format!("{BASE_EVENTS} Conditions {{ c = {{ text == \"\" }} }} Actions {{ a = {{ block() }} }} Rules {{ send | c -> a }}");
        assert_eq!(codes(&src), vec!["unresolved-name"]);
    }
}
