use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Stmt};
use crate::value::Ty;

/// Which monitor a declaration runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    ApplicationSide,
    GlobalSide,
}

impl Side {
    pub fn keyword(self) -> &'static str {
        match self {
            Side::ApplicationSide => "ApplicationSide",
            Side::GlobalSide => "GlobalSide",
        }
    }

    /// Side keywords are case-insensitive.
    pub fn from_keyword(word: &str) -> Option<Side> {
        match word.to_ascii_lowercase().as_str() {
            "applicationside" => Some(Side::ApplicationSide),
            "globalside" => Some(Side::GlobalSide),
            _ => None,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Where a declaration's side came from. The enclosing group and the tag
/// written inside the body are kept apart so disagreement can be reported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SideTag {
    pub outer: Option<Side>,
    pub inner: Option<Side>,
}

impl SideTag {
    pub fn outer(side: Side) -> Self {
        Self { outer: Some(side), inner: None }
    }

    /// Effective side; untagged declarations run on the application side.
    pub fn side(self) -> Side {
        self.outer.or(self.inner).unwrap_or(Side::ApplicationSide)
    }

    pub fn conflicting(self) -> bool {
        matches!((self.outer, self.inner), (Some(a), Some(b)) if a != b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Before,
    After,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub ty: Ty,
}

impl Param {
    pub fn new(name: &str, ty: Ty) -> Self {
        Self { name: name.to_string(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ArgPattern {
    /// `(...)`: any argument list, nothing bound.
    Any,
    /// Explicit parameters bound positionally; arity must match exactly.
    Exact(Vec<Param>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CallPattern {
    pub namespace: String,
    pub method: String,
    /// Written `Namespace *.method`: any receiver instance.
    pub receiver_wildcard: bool,
    pub args: ArgPattern,
}

impl CallPattern {
    pub fn arity(&self) -> Option<usize> {
        match &self.args {
            ArgPattern::Any => None,
            ArgPattern::Exact(p) => Some(p.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDecl {
    pub name: String,
    pub group: Option<Side>,
    pub phase: Phase,
    pub pattern: CallPattern,
    /// Parameters written after the event name, e.g. `sendMessageAfter(boolean sent)`.
    pub header_params: Vec<Param>,
    pub return_binding: Option<String>,
}

impl EventDecl {
    pub fn side(&self) -> Side {
        self.group.unwrap_or(Side::ApplicationSide)
    }

    /// All parameter names visible to bodies: pattern parameters first,
    /// then header parameters not already bound by the pattern.
    pub fn params(&self) -> Vec<Param> {
        let mut out: Vec<Param> = match &self.pattern.args {
            ArgPattern::Any => Vec::new(),
            ArgPattern::Exact(p) => p.clone(),
        };
        for p in &self.header_params {
            if !out.iter().any(|q| q.name == p.name) {
                out.push(p.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionDecl {
    pub name: String,
    pub tag: SideTag,
    pub body: Expr,
}

impl ConditionDecl {
    pub fn side(&self) -> Side {
        self.tag.side()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionDecl {
    pub name: String,
    pub tag: SideTag,
    pub body: Vec<Stmt>,
}

impl ActionDecl {
    pub fn side(&self) -> Side {
        self.tag.side()
    }

    pub fn blocks(&self) -> bool {
        self.body.iter().any(|s| matches!(s, Stmt::Block))
    }
}

/// Boolean formula over condition references.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula<T> {
    Atom(T),
    Not(Box<Formula<T>>),
    And(Box<Formula<T>>, Box<Formula<T>>),
    Or(Box<Formula<T>>, Box<Formula<T>>),
}

impl<T> Formula<T> {
    pub fn atoms(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a T>) {
        match self {
            Formula::Atom(a) => out.push(a),
            Formula::Not(f) => f.collect(out),
            Formula::And(l, r) | Formula::Or(l, r) => {
                l.collect(out);
                r.collect(out);
            }
        }
    }

    pub fn try_map<U, E>(&self, f: &mut impl FnMut(&T) -> Result<U, E>) -> Result<Formula<U>, E> {
        Ok(match self {
            Formula::Atom(a) => Formula::Atom(f(a)?),
            Formula::Not(x) => Formula::Not(Box::new(x.try_map(f)?)),
            Formula::And(l, r) => Formula::And(Box::new(l.try_map(f)?), Box::new(r.try_map(f)?)),
            Formula::Or(l, r) => Formula::Or(Box::new(l.try_map(f)?), Box::new(r.try_map(f)?)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDecl {
    pub name: Option<String>,
    pub trigger: String,
    pub guard: Formula<String>,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeclKind {
    Event,
    Condition,
    Action,
    Rule,
}

impl DeclKind {
    pub fn label(self) -> &'static str {
        match self {
            DeclKind::Event => "event",
            DeclKind::Condition => "condition",
            DeclKind::Action => "action",
            DeclKind::Rule => "rule",
        }
    }
}

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A parsed policy document. Equality is structural and ignores spans.
#[derive(Debug, Clone, Default)]
pub struct PolicySpec {
    pub events: Vec<EventDecl>,
    pub conditions: Vec<ConditionDecl>,
    pub actions: Vec<ActionDecl>,
    pub rules: Vec<RuleDecl>,
    pub source_spans: BTreeMap<(DeclKind, usize), Span>,
}

impl PartialEq for PolicySpec {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events
            && self.conditions == other.conditions
            && self.actions == other.actions
            && self.rules == other.rules
    }
}

impl Eq for PolicySpec {}

impl PolicySpec {
    pub fn span(&self, kind: DeclKind, index: usize) -> Span {
        self.source_spans.get(&(kind, index)).copied().unwrap_or_default()
    }

    pub fn event(&self, name: &str) -> Option<&EventDecl> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionDecl> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionDecl> {
        self.actions.iter().find(|a| a.name == name)
    }
}
