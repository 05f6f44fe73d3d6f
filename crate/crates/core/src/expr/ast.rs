use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::Value;

/// Where a variable lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    /// A bare identifier: an event parameter read on the application side.
    Param,
    /// `event.x`: an event parameter explicitly forwarded to the central monitor.
    Event,
    Local,
    Global,
    Config,
}

impl Namespace {
    pub fn prefix(self) -> Option<&'static str> {
        match self {
            Namespace::Param => None,
            Namespace::Event => Some("event"),
            Namespace::Local => Some("local"),
            Namespace::Global => Some("global"),
            Namespace::Config => Some("config"),
        }
    }

    pub fn from_prefix(word: &str) -> Option<Namespace> {
        match word {
            "event" => Some(Namespace::Event),
            "local" => Some(Namespace::Local),
            "global" => Some(Namespace::Global),
            "config" => Some(Namespace::Config),
            _ => None,
        }
    }

    pub fn is_state(self) -> bool {
        matches!(self, Namespace::Local | Namespace::Global)
    }

    pub fn is_event(self) -> bool {
        matches!(self, Namespace::Param | Namespace::Event)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarRef {
    pub ns: Namespace,
    pub name: String,
}

impl VarRef {
    pub fn new(ns: Namespace, name: impl Into<String>) -> Self {
        Self { ns, name: name.into() }
    }

    pub fn global(name: impl Into<String>) -> Self {
        Self::new(Namespace::Global, name)
    }

    pub fn local(name: impl Into<String>) -> Self {
        Self::new(Namespace::Local, name)
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ns.prefix() {
            Some(p) => write!(f, "{p}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div => 5,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }
}

/// The closed set of builtin functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    HourOfDay,
    IsPm,
    SameCalendarDay,
    StartOfDay,
    CountWithin,
    Size,
    Hours,
    Minutes,
    Seconds,
    StartsWith,
    Contains,
    ContainsAny,
    Member,
    Authorized,
}

impl Builtin {
    pub const ALL: [Builtin; 14] = [
        Builtin::HourOfDay,
        Builtin::IsPm,
        Builtin::SameCalendarDay,
        Builtin::StartOfDay,
        Builtin::CountWithin,
        Builtin::Size,
        Builtin::Hours,
        Builtin::Minutes,
        Builtin::Seconds,
        Builtin::StartsWith,
        Builtin::Contains,
        Builtin::ContainsAny,
        Builtin::Member,
        Builtin::Authorized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::HourOfDay => "hour_of_day",
            Builtin::IsPm => "is_pm",
            Builtin::SameCalendarDay => "same_calendar_day",
            Builtin::StartOfDay => "start_of_day",
            Builtin::CountWithin => "count_within",
            Builtin::Size => "size",
            Builtin::Hours => "hours",
            Builtin::Minutes => "minutes",
            Builtin::Seconds => "seconds",
            Builtin::StartsWith => "starts_with",
            Builtin::Contains => "contains",
            Builtin::ContainsAny => "contains_any",
            Builtin::Member => "member",
            Builtin::Authorized => "authorized",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Value),
    Var(VarRef),
    Now,
    AppId,
    AppName,
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

impl Expr {
    pub fn int(i: i64) -> Expr {
        Expr::Lit(Value::Int(i))
    }

    pub fn bool(b: bool) -> Expr {
        Expr::Lit(Value::Bool(b))
    }

    pub fn var(ns: Namespace, name: &str) -> Expr {
        Expr::Var(VarRef::new(ns, name))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn negate(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    pub fn call(b: Builtin, args: Vec<Expr>) -> Expr {
        Expr::Call(b, args)
    }

    /// Every variable reference, in left-to-right order.
    pub fn vars(&self) -> Vec<&VarRef> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a VarRef>) {
        match self {
            Expr::Var(v) => out.push(v),
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Expr::Lit(_) | Expr::Now | Expr::AppId | Expr::AppName => {}
        }
    }
}

/// Statements of action bodies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    /// `local.x := e` or `global.x := e`.
    Assign(VarRef, Expr),
    /// Refuse the intercepted call. Written `block()` or `return`.
    Block,
    Append(VarRef, Expr),
    PruneOlder(VarRef, Expr),
    SetAttr(String, Expr),
}

impl Stmt {
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::Assign(_, e) | Stmt::Append(_, e) | Stmt::PruneOlder(_, e) | Stmt::SetAttr(_, e) => {
                vec![e]
            }
            Stmt::Block => Vec::new(),
        }
    }

    /// The state variable written, if any.
    pub fn target(&self) -> Option<&VarRef> {
        match self {
            Stmt::Assign(v, _) | Stmt::Append(v, _) | Stmt::PruneOlder(v, _) => Some(v),
            Stmt::Block | Stmt::SetAttr(..) => None,
        }
    }

    /// Every variable this statement reads or writes.
    pub fn vars(&self) -> Vec<&VarRef> {
        let mut out: Vec<&VarRef> = self.target().into_iter().collect();
        for e in self.exprs() {
            out.extend(e.vars());
        }
        out
    }
}

/// Device attributes a policy may set, with their types.
pub const DEVICE_ATTRS: &[(&str, crate::value::Ty)] = &[("wifi_enabled", crate::value::Ty::Bool)];

pub fn device_attr_type(name: &str) -> Option<crate::value::Ty> {
    DEVICE_ATTRS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
