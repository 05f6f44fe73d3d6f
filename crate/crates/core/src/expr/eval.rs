use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::{BinOp, Builtin, Expr, Namespace, Stmt, UnOp, VarRef};
use crate::config::DeviceConfig;
use crate::state::{GlobalState, LocalState, StateTypes};
use crate::time::{self, MS_PER_HOUR, MS_PER_MINUTE, MS_PER_SECOND};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("negative duration")]
    NegativeDuration,
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("ill-typed operands for `{0}`")]
    IllTyped(String),
    #[error("`block()` executed outside an application-side context")]
    SideViolation,
}

/// A state mutation or control effect produced by executing a statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    StateWrite { var: VarRef, value: Value },
    BlockCall,
    SetAttr { name: String, value: Value },
}

pub type EffectList = Vec<Effect>;

/// Everything an expression can see while it runs.
pub struct EvalContext<'a> {
    pub bindings: &'a BTreeMap<String, Value>,
    pub local: Option<&'a mut LocalState>,
    pub global: Option<&'a mut GlobalState>,
    pub now: i64,
    pub app_id: &'a str,
    pub app_name: &'a str,
    pub config: &'a DeviceConfig,
    pub types: &'a StateTypes,
}

impl<'a> EvalContext<'a> {
    /// Context for an application-side body: event bindings and the app's
    /// local state, no global state.
    pub fn application(
        bindings: &'a BTreeMap<String, Value>,
        local: &'a mut LocalState,
        now: i64,
        app_id: &'a str,
        app_name: &'a str,
        config: &'a DeviceConfig,
        types: &'a StateTypes,
    ) -> Self {
        Self { bindings, local: Some(local), global: None, now, app_id, app_name, config, types }
    }

    /// Context for a global-side body: global state plus whatever bindings
    /// the requesting app forwarded.
    pub fn central(
        forwarded: &'a BTreeMap<String, Value>,
        global: &'a mut GlobalState,
        now: i64,
        app_id: &'a str,
        app_name: &'a str,
        config: &'a DeviceConfig,
        types: &'a StateTypes,
    ) -> Self {
        Self { bindings: forwarded, local: None, global: Some(global), now, app_id, app_name, config, types }
    }

    fn store(&self, ns: Namespace) -> Option<&BTreeMap<String, Value>> {
        match ns {
            Namespace::Local => self.local.as_deref().map(|l| &l.vars),
            Namespace::Global => self.global.as_deref().map(|g| &g.vars),
            _ => None,
        }
    }

    fn store_mut(&mut self, ns: Namespace) -> Option<&mut BTreeMap<String, Value>> {
        match ns {
            Namespace::Local => self.local.as_deref_mut().map(|l| &mut l.vars),
            Namespace::Global => self.global.as_deref_mut().map(|g| &mut g.vars),
            _ => None,
        }
    }

    fn read(&self, var: &VarRef) -> Result<Value, EvalError> {
        let unbound = || EvalError::UnboundVariable(var.to_string());
        match var.ns {
            Namespace::Param | Namespace::Event => self.bindings.get(&var.name).cloned().ok_or_else(unbound),
            Namespace::Config => self.config.value(&var.name).ok_or_else(unbound),
            Namespace::Local | Namespace::Global => {
                let store = self.store(var.ns).ok_or_else(unbound)?;
                match store.get(&var.name) {
                    Some(v) => Ok(v.clone()),
                    // Never written: typed zero.
                    None => self.types.get(var).map(|t| t.zero()).ok_or_else(unbound),
                }
            }
        }
    }

    fn write(&mut self, var: &VarRef, value: Value) -> Result<(), EvalError> {
        let store = self.store_mut(var.ns).ok_or_else(|| EvalError::UnboundVariable(var.to_string()))?;
        store.insert(var.name.clone(), value);
        Ok(())
    }
}

fn ill(op: &str) -> EvalError {
    EvalError::IllTyped(op.to_string())
}

fn duration(ms: Option<i64>) -> Result<Value, EvalError> {
    match ms {
        None => Err(EvalError::Overflow),
        Some(d) if d < 0 => Err(EvalError::NegativeDuration),
        Some(d) => Ok(Value::Duration(d)),
    }
}

/// Number of list entries `t` with `now - t <= window`.
pub fn count_within(list: &[i64], now: i64, window: i64) -> i64 {
    let cutoff = now.saturating_sub(window);
    let first = list.partition_point(|&t| t < cutoff);
    (list.len() - first) as i64
}

/// Drops entries with `now - t > window`; the list stays sorted.
pub fn prune_older(list: &mut Vec<i64>, now: i64, window: i64) {
    let cutoff = now.saturating_sub(window);
    let first = list.partition_point(|&t| t < cutoff);
    list.drain(..first);
}

/// Evaluates `expr`. Pure: reads the context, never mutates it.
pub fn eval_expr(expr: &Expr, ctx: &EvalContext<'_>) -> Result<Value, EvalError> {
    match expr {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(v) => ctx.read(v),
        Expr::Now => Ok(Value::Timestamp(ctx.now)),
        Expr::AppId => Ok(Value::Str(ctx.app_id.to_string())),
        Expr::AppName => Ok(Value::Str(ctx.app_name.to_string())),
        Expr::Unary(op, inner) => match (op, eval_expr(inner, ctx)?) {
            (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
            (UnOp::Neg, Value::Int(i)) => i.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
            _ => Err(ill("unary")),
        },
        Expr::Binary(BinOp::And, l, r) => match eval_expr(l, ctx)? {
            Value::Bool(false) => Ok(Value::Bool(false)),
            Value::Bool(true) => eval_bool(r, ctx).map(Value::Bool),
            _ => Err(ill("&&")),
        },
        Expr::Binary(BinOp::Or, l, r) => match eval_expr(l, ctx)? {
            Value::Bool(true) => Ok(Value::Bool(true)),
            Value::Bool(false) => eval_bool(r, ctx).map(Value::Bool),
            _ => Err(ill("||")),
        },
        Expr::Binary(op, l, r) => binary(*op, eval_expr(l, ctx)?, eval_expr(r, ctx)?),
        Expr::Call(b, args) => {
            let vals = args.iter().map(|a| eval_expr(a, ctx)).collect::<Result<Vec<_>, _>>()?;
            builtin(*b, &vals, ctx)
        }
    }
}

pub fn eval_bool(expr: &Expr, ctx: &EvalContext<'_>) -> Result<bool, EvalError> {
    eval_expr(expr, ctx)?.as_bool().ok_or_else(|| ill("condition"))
}

fn binary(op: BinOp, l: Value, r: Value) -> Result<Value, EvalError> {
    use Value::*;
    let sym = op.symbol();
    match op {
        BinOp::Eq => Ok(Bool(l == r)),
        BinOp::Ne => Ok(Bool(l != r)),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = match (&l, &r) {
                (Int(a), Int(b)) | (Timestamp(a), Timestamp(b)) | (Duration(a), Duration(b)) => a.cmp(b),
                _ => return Err(ill(sym)),
            };
            Ok(Bool(match op {
                BinOp::Lt => ord.is_lt(),
                BinOp::Le => ord.is_le(),
                BinOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            }))
        }
        BinOp::Add => match (l, r) {
            (Int(a), Int(b)) => a.checked_add(b).map(Int).ok_or(EvalError::Overflow),
            (Duration(a), Duration(b)) => duration(a.checked_add(b)),
            (Timestamp(a), Duration(b)) => a.checked_add(b).map(Timestamp).ok_or(EvalError::Overflow),
            _ => Err(ill(sym)),
        },
        BinOp::Sub => match (l, r) {
            (Int(a), Int(b)) => a.checked_sub(b).map(Int).ok_or(EvalError::Overflow),
            (Duration(a), Duration(b)) | (Timestamp(a), Timestamp(b)) => duration(a.checked_sub(b)),
            _ => Err(ill(sym)),
        },
        BinOp::Mul => match (l, r) {
            (Int(a), Int(b)) => a.checked_mul(b).map(Int).ok_or(EvalError::Overflow),
            _ => Err(ill(sym)),
        },
        BinOp::Div => match (l, r) {
            (Int(_), Int(0)) => Err(EvalError::DivisionByZero),
            (Int(a), Int(b)) => a.checked_div(b).map(Int).ok_or(EvalError::Overflow),
            _ => Err(ill(sym)),
        },
        BinOp::And | BinOp::Or => unreachable!("short-circuited in eval_expr"),
    }
}

fn builtin(b: Builtin, args: &[Value], ctx: &EvalContext<'_>) -> Result<Value, EvalError> {
    use Value::*;
    let name = b.name();
    Ok(match (b, args) {
        (Builtin::HourOfDay, [Timestamp(t)]) => Int(time::hour_of_day(*t)),
        (Builtin::IsPm, [Timestamp(t)]) => Bool(time::is_pm(*t)),
        (Builtin::SameCalendarDay, [Timestamp(a), Timestamp(b)]) => Bool(time::same_calendar_day(*a, *b)),
        (Builtin::StartOfDay, [Timestamp(t)]) => Timestamp(time::start_of_day(*t)),
        (Builtin::CountWithin, [TimestampList(l), Duration(d)]) => Int(count_within(l, ctx.now, *d)),
        (Builtin::Size, [TimestampList(l)]) => Int(l.len() as i64),
        (Builtin::Size, [StrList(l)]) => Int(l.len() as i64),
        (Builtin::Hours, [Int(n)]) => duration(n.checked_mul(MS_PER_HOUR))?,
        (Builtin::Minutes, [Int(n)]) => duration(n.checked_mul(MS_PER_MINUTE))?,
        (Builtin::Seconds, [Int(n)]) => duration(n.checked_mul(MS_PER_SECOND))?,
        (Builtin::StartsWith, [Str(s), Str(p)]) => Bool(s.starts_with(p.as_str())),
        (Builtin::Contains, [Str(s), Str(p)]) => Bool(s.contains(p.as_str())),
        (Builtin::ContainsAny, [Str(s), StrList(l)]) => Bool(l.iter().any(|p| s.contains(p.as_str()))),
        (Builtin::Member, [Str(s), StrList(l)]) => Bool(l.iter().any(|x| x == s)),
        (Builtin::Authorized, [Str(path), Str(app)]) => Bool(ctx.config.authorized(path, app)),
        _ => return Err(ill(name)),
    })
}

fn read_list(ctx: &EvalContext<'_>, var: &VarRef) -> Result<Vec<i64>, EvalError> {
    match ctx.read(var)? {
        Value::TimestampList(l) => Ok(l),
        _ => Err(ill("list statement")),
    }
}

/// Executes one statement against the context's writable views and returns
/// the effects it had, in order.
pub fn exec_stmt(stmt: &Stmt, ctx: &mut EvalContext<'_>) -> Result<EffectList, EvalError> {
    match stmt {
        Stmt::Block => {
            if ctx.global.is_some() || ctx.local.is_none() {
                return Err(EvalError::SideViolation);
            }
            Ok(vec![Effect::BlockCall])
        }
        Stmt::Assign(var, e) => {
            let value = eval_expr(e, ctx)?;
            ctx.write(var, value.clone())?;
            Ok(vec![Effect::StateWrite { var: var.clone(), value }])
        }
        Stmt::Append(var, e) => {
            let t = match eval_expr(e, ctx)? {
                Value::Timestamp(t) => t,
                _ => return Err(ill("append")),
            };
            let mut list = read_list(ctx, var)?;
            let at = list.partition_point(|&x| x <= t);
            list.insert(at, t);
            let value = Value::TimestampList(list);
            ctx.write(var, value.clone())?;
            Ok(vec![Effect::StateWrite { var: var.clone(), value }])
        }
        Stmt::PruneOlder(var, e) => {
            let d = match eval_expr(e, ctx)? {
                Value::Duration(d) => d,
                _ => return Err(ill("prune_older")),
            };
            let mut list = read_list(ctx, var)?;
            prune_older(&mut list, ctx.now, d);
            let value = Value::TimestampList(list);
            ctx.write(var, value.clone())?;
            Ok(vec![Effect::StateWrite { var: var.clone(), value }])
        }
        Stmt::SetAttr(name, e) => {
            let value = eval_expr(e, ctx)?;
            if let Some(g) = ctx.global.as_deref_mut() {
                g.attrs.insert(name.clone(), value.clone());
            }
            Ok(vec![Effect::SetAttr { name: name.clone(), value }])
        }
    }
}

/// Runs a statement list, concatenating effects.
pub fn exec_body(body: &[Stmt], ctx: &mut EvalContext<'_>) -> Result<EffectList, EvalError> {
    let mut out = Vec::new();
    for s in body {
        out.extend(exec_stmt(s, ctx)?);
    }
    Ok(out)
}

/// Replays effects against state, as the statement executor would have.
pub fn apply_effects(effects: &[Effect], mut local: Option<&mut LocalState>, mut global: Option<&mut GlobalState>) {
    for e in effects {
        match e {
            Effect::StateWrite { var, value } => {
                let store = match var.ns {
                    Namespace::Local => local.as_deref_mut().map(|l| &mut l.vars),
                    Namespace::Global => global.as_deref_mut().map(|g| &mut g.vars),
                    _ => None,
                };
                if let Some(store) = store {
                    store.insert(var.name.clone(), value.clone());
                }
            }
            Effect::SetAttr { name, value } => {
                if let Some(g) = global.as_deref_mut() {
                    g.attrs.insert(name.clone(), value.clone());
                }
            }
            Effect::BlockCall => {}
        }
    }
}
