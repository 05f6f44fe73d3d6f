//! Static typing of expressions and statements.
//!
//! The checker is bidirectional so the same rules serve two callers:
//! [`type_check`] with a complete environment, and state-variable inference
//! during policy validation, where a state variable may still be untyped and
//! is refined from the position it appears in.

use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::{device_attr_type, BinOp, Builtin, Expr, Namespace, Stmt, UnOp, VarRef};
use crate::config::config_var_type;
use crate::value::Ty;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("type mismatch in `{context}`: expected {expected}, found {found}")]
    Mismatch { context: String, expected: String, found: Ty },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("`{function}` takes {expected} argument(s), got {found}")]
    Arity { function: &'static str, expected: usize, found: usize },
    #[error("cannot infer the type of `{0}`")]
    CannotInfer(String),
    #[error("`{0}` is not assignable")]
    NotAssignable(String),
    #[error("unknown device attribute `{0}`")]
    UnknownAttribute(String),
}

/// Result of looking a variable up during checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Known(Ty),
    /// A state variable whose type is not settled yet.
    Unknown,
    Unbound,
}

pub trait TypeScope {
    fn lookup(&self, var: &VarRef) -> Lookup;
    /// Records the type an untyped variable must have.
    fn refine(&mut self, var: &VarRef, ty: Ty);
}

/// Complete typing environment: event parameters plus state variables.
/// `config.` variables are typed from the fixed configuration table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeEnv {
    pub params: BTreeMap<String, Ty>,
    pub state: BTreeMap<VarRef, Ty>,
}

impl TypeEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_param(mut self, name: &str, ty: Ty) -> Self {
        self.params.insert(name.to_string(), ty);
        self
    }

    pub fn with_state(mut self, var: VarRef, ty: Ty) -> Self {
        self.state.insert(var, ty);
        self
    }
}

pub(crate) fn lookup_fixed(params: &BTreeMap<String, Ty>, var: &VarRef) -> Option<Ty> {
    match var.ns {
        Namespace::Param | Namespace::Event => params.get(&var.name).copied(),
        Namespace::Config => config_var_type(&var.name),
        Namespace::Local | Namespace::Global => None,
    }
}

impl TypeScope for TypeEnv {
    fn lookup(&self, var: &VarRef) -> Lookup {
        let found = if var.ns.is_state() { self.state.get(var).copied() } else { lookup_fixed(&self.params, var) };
        found.map_or(Lookup::Unbound, Lookup::Known)
    }

    fn refine(&mut self, _var: &VarRef, _ty: Ty) {}
}

/// Returns the type of `expr` under a complete environment, or the first
/// error in left-to-right order.
pub fn type_check(expr: &Expr, env: &TypeEnv) -> Result<Ty, TypeError> {
    let mut env = env.clone();
    let mut checker = Checker::new(&mut env);
    match checker.synth(expr)? {
        Some(t) => Ok(t),
        None => Err(TypeError::CannotInfer(expr.to_string())),
    }
}

/// Checks a statement under a complete environment.
pub fn type_check_stmt(stmt: &Stmt, env: &TypeEnv) -> Result<(), TypeError> {
    let mut env = env.clone();
    Checker::new(&mut env).stmt(stmt)
}

pub struct Checker<'s, S: TypeScope> {
    scope: &'s mut S,
}

fn mismatch(e: &Expr, expected: impl Into<String>, found: Ty) -> TypeError {
    TypeError::Mismatch { context: e.to_string(), expected: expected.into(), found }
}

fn is_ordered(t: Ty) -> bool {
    matches!(t, Ty::Int | Ty::Timestamp | Ty::Duration)
}

impl<'s, S: TypeScope> Checker<'s, S> {
    pub fn new(scope: &'s mut S) -> Self {
        Self { scope }
    }

    /// Synthesizes the type of `e`; `None` means it depends on a state
    /// variable that is not typed yet.
    pub fn synth(&mut self, e: &Expr) -> Result<Option<Ty>, TypeError> {
        Ok(match e {
            Expr::Lit(v) => Some(v.ty()),
            Expr::Var(v) => match self.scope.lookup(v) {
                Lookup::Known(t) => Some(t),
                Lookup::Unknown => None,
                Lookup::Unbound => return Err(TypeError::UnboundVariable(v.to_string())),
            },
            Expr::Now => Some(Ty::Timestamp),
            Expr::AppId | Expr::AppName => Some(Ty::Str),
            Expr::Unary(UnOp::Not, inner) => {
                self.check(inner, Ty::Bool)?;
                Some(Ty::Bool)
            }
            Expr::Unary(UnOp::Neg, inner) => {
                self.check(inner, Ty::Int)?;
                Some(Ty::Int)
            }
            Expr::Binary(op, l, r) => self.binary(e, *op, l, r)?,
            Expr::Call(b, args) => Some(self.call(*b, args)?),
        })
    }

    pub fn check(&mut self, e: &Expr, expected: Ty) -> Result<(), TypeError> {
        if let Expr::Var(v) = e {
            return match self.scope.lookup(v) {
                Lookup::Known(t) if t == expected => Ok(()),
                Lookup::Known(t) => Err(mismatch(e, expected.keyword(), t)),
                Lookup::Unknown => {
                    self.scope.refine(v, expected);
                    Ok(())
                }
                Lookup::Unbound => Err(TypeError::UnboundVariable(v.to_string())),
            };
        }
        match self.synth(e)? {
            Some(t) if t != expected => Err(mismatch(e, expected.keyword(), t)),
            _ => Ok(()),
        }
    }

    fn binary(&mut self, e: &Expr, op: BinOp, l: &Expr, r: &Expr) -> Result<Option<Ty>, TypeError> {
        match op {
            BinOp::And | BinOp::Or => {
                self.check(l, Ty::Bool)?;
                self.check(r, Ty::Bool)?;
                Ok(Some(Ty::Bool))
            }
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                let ordered = !matches!(op, BinOp::Eq | BinOp::Ne);
                let tl = self.synth(l)?;
                let tr = self.synth(r)?;
                let known = match (tl, tr) {
                    (Some(a), Some(b)) if a != b => return Err(mismatch(r, a.keyword(), b)),
                    (Some(a), Some(_)) => Some(a),
                    (Some(a), None) => {
                        self.check(r, a)?;
                        Some(a)
                    }
                    (None, Some(b)) => {
                        self.check(l, b)?;
                        Some(b)
                    }
                    (None, None) => None,
                };
                if let Some(t) = known {
                    if ordered && !is_ordered(t) {
                        return Err(mismatch(e, "int, timestamp or duration operands", t));
                    }
                }
                Ok(Some(Ty::Bool))
            }
            BinOp::Mul | BinOp::Div => {
                self.check(l, Ty::Int)?;
                self.check(r, Ty::Int)?;
                Ok(Some(Ty::Int))
            }
            BinOp::Add => {
                let tl = self.synth(l)?;
                let tr = self.synth(r)?;
                match (tl, tr) {
                    (Some(a), Some(b)) => match (a, b) {
                        (Ty::Int, Ty::Int) => Ok(Some(Ty::Int)),
                        (Ty::Duration, Ty::Duration) => Ok(Some(Ty::Duration)),
                        (Ty::Timestamp, Ty::Duration) => Ok(Some(Ty::Timestamp)),
                        (Ty::Int, b) => Err(mismatch(r, "int", b)),
                        (Ty::Duration | Ty::Timestamp, b) => Err(mismatch(r, "duration", b)),
                        (a, _) => Err(mismatch(l, "int, duration or timestamp", a)),
                    },
                    (Some(a), None) => {
                        let (want, out) = match a {
                            Ty::Int => (Ty::Int, Ty::Int),
                            Ty::Duration => (Ty::Duration, Ty::Duration),
                            Ty::Timestamp => (Ty::Duration, Ty::Timestamp),
                            other => return Err(mismatch(l, "int, duration or timestamp", other)),
                        };
                        self.check(r, want)?;
                        Ok(Some(out))
                    }
                    (None, Some(Ty::Int)) => {
                        self.check(l, Ty::Int)?;
                        Ok(Some(Ty::Int))
                    }
                    // duration + duration or timestamp + duration: undecided.
                    (None, Some(Ty::Duration)) | (None, None) => Ok(None),
                    (None, Some(b)) => Err(mismatch(r, "int or duration", b)),
                }
            }
            BinOp::Sub => {
                let tl = self.synth(l)?;
                let tr = self.synth(r)?;
                let out = |t: Ty| if t == Ty::Timestamp { Ty::Duration } else { t };
                match (tl, tr) {
                    (Some(a), Some(b)) => {
                        if !is_ordered(a) {
                            Err(mismatch(l, "int, duration or timestamp", a))
                        } else if a != b {
                            Err(mismatch(r, a.keyword(), b))
                        } else {
                            Ok(Some(out(a)))
                        }
                    }
                    (Some(a), None) | (None, Some(a)) => {
                        if !is_ordered(a) {
                            let side = if tl.is_some() { l } else { r };
                            return Err(mismatch(side, "int, duration or timestamp", a));
                        }
                        let other = if tl.is_some() { r } else { l };
                        self.check(other, a)?;
                        Ok(Some(out(a)))
                    }
                    (None, None) => Ok(None),
                }
            }
        }
    }

    fn call(&mut self, b: Builtin, args: &[Expr]) -> Result<Ty, TypeError> {
        use Ty::*;
        let (params, ret): (&[Ty], Ty) = match b {
            Builtin::HourOfDay => (&[Timestamp], Int),
            Builtin::IsPm => (&[Timestamp], Bool),
            Builtin::SameCalendarDay => (&[Timestamp, Timestamp], Bool),
            Builtin::StartOfDay => (&[Timestamp], Timestamp),
            Builtin::CountWithin => (&[TimestampList, Duration], Int),
            Builtin::Size => (&[TimestampList], Int),
            Builtin::Hours | Builtin::Minutes | Builtin::Seconds => (&[Int], Duration),
            Builtin::StartsWith | Builtin::Contains | Builtin::Authorized => (&[Str, Str], Bool),
            Builtin::ContainsAny | Builtin::Member => (&[Str, StrList], Bool),
        };
        if args.len() != params.len() {
            return Err(TypeError::Arity { function: b.name(), expected: params.len(), found: args.len() });
        }
        if b == Builtin::Size {
            // Either list type is fine; an untyped state variable defaults to
            // a timestamp list, the only list a policy can build.
            return match self.synth(&args[0])? {
                Some(TimestampList | StrList) => Ok(Int),
                Some(t) => Err(mismatch(&args[0], "list", t)),
                None => {
                    self.check(&args[0], TimestampList)?;
                    Ok(Int)
                }
            };
        }
        for (a, t) in args.iter().zip(params) {
            self.check(a, *t)?;
        }
        Ok(ret)
    }

    pub fn stmt(&mut self, s: &Stmt) -> Result<(), TypeError> {
        match s {
            Stmt::Block => Ok(()),
            Stmt::Assign(target, e) => {
                if !target.ns.is_state() {
                    return Err(TypeError::NotAssignable(target.to_string()));
                }
                match self.scope.lookup(target) {
                    Lookup::Known(t) => self.check(e, t),
                    Lookup::Unknown => {
                        if let Some(t) = self.synth(e)? {
                            self.scope.refine(target, t);
                        }
                        Ok(())
                    }
                    Lookup::Unbound => Err(TypeError::UnboundVariable(target.to_string())),
                }
            }
            Stmt::Append(list, e) => {
                self.list_target(list)?;
                self.check(e, Ty::Timestamp)
            }
            Stmt::PruneOlder(list, d) => {
                self.list_target(list)?;
                self.check(d, Ty::Duration)
            }
            Stmt::SetAttr(name, e) => {
                let t = device_attr_type(name).ok_or_else(|| TypeError::UnknownAttribute(name.clone()))?;
                self.check(e, t)
            }
        }
    }

    fn list_target(&mut self, list: &VarRef) -> Result<(), TypeError> {
        if !list.ns.is_state() {
            return Err(TypeError::NotAssignable(list.to_string()));
        }
        self.check(&Expr::Var(list.clone()), Ty::TimestampList)
    }
}
