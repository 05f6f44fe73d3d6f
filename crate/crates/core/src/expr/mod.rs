//! The closed expression and statement language used in condition and
//! action bodies.

pub mod ast;
pub mod eval;
mod print;
pub mod types;

pub use ast::{BinOp, Builtin, Expr, Namespace, Stmt, UnOp, VarRef};
pub use eval::{
    apply_effects, count_within, eval_bool, eval_expr, exec_body, exec_stmt, prune_older, Effect, EffectList,
    EvalContext, EvalError,
};
pub use types::{type_check, type_check_stmt, TypeEnv, TypeError};
