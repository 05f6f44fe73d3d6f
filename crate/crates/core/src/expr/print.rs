//! Canonical surface syntax for expressions and statements. Parentheses are
//! emitted only where the tree would otherwise reparse differently.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::{Expr, Stmt, UnOp};
use crate::value::Value;

const UNARY_PREC: u8 = 6;

pub(crate) fn write_string_literal(f: &mut impl Write, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

fn write_literal(f: &mut Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Bool(b) => write!(f, "{b}"),
        Value::Int(i) => write!(f, "{i}"),
        Value::Str(s) => write_string_literal(f, s),
        // Not producible by the parser; printed in a readable but non-reparsable form.
        other => write!(f, "{other}"),
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(..) => UNARY_PREC,
        // A negative literal prints with a leading `-` and so behaves like a unary.
        Expr::Lit(Value::Int(i)) if *i < 0 => UNARY_PREC,
        _ => UNARY_PREC + 1,
    }
}

fn write_child(f: &mut Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write_literal(f, v),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Now => f.write_str("now"),
            Expr::AppId => f.write_str("app_id"),
            Expr::AppName => f.write_str("app_name"),
            Expr::Unary(op, e) => {
                f.write_str(match op {
                    UnOp::Not => "!",
                    UnOp::Neg => "-",
                })?;
                write_child(f, e, prec(e) < UNARY_PREC)
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                // Comparisons do not chain, so an equal-precedence child needs
                // parentheses on either side; other operators are left-assoc.
                let left_parens = if op.is_comparison() { prec(l) <= p } else { prec(l) < p };
                write_child(f, l, left_parens)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, r, prec(r) <= p)
            }
            Expr::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_char(')')
            }
        }
    }
}

impl Display for Stmt {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Assign(v, e) => write!(f, "{v} := {e}"),
            Stmt::Block => f.write_str("block()"),
            Stmt::Append(v, e) => write!(f, "append({v}, {e})"),
            Stmt::PruneOlder(v, e) => write!(f, "prune_older({v}, {e})"),
            Stmt::SetAttr(name, e) => {
                f.write_str("set_attr(")?;
                write_string_literal(f, name)?;
                write!(f, ", {e})")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ast::{BinOp, Builtin, Namespace};

    #[test]
    fn minimal_parentheses() {
        let a = Expr::var(Namespace::Param, "a");
        let b = Expr::var(Namespace::Param, "b");
        let c = Expr::var(Namespace::Param, "c");
        let e = Expr::bin(BinOp::And, Expr::negate(a.clone()), b.clone());
        assert_eq!(e.to_string(), "!a && b");
        let e = Expr::negate(Expr::bin(BinOp::And, a.clone(), b.clone()));
        assert_eq!(e.to_string(), "!(a && b)");
        let e = Expr::bin(BinOp::Sub, a.clone(), Expr::bin(BinOp::Sub, b.clone(), c.clone()));
        assert_eq!(e.to_string(), "a - (b - c)");
        let e = Expr::bin(BinOp::Sub, Expr::bin(BinOp::Sub, a.clone(), b.clone()), c);
        assert_eq!(e.to_string(), "a - b - c");
        let e = Expr::bin(
            BinOp::Ge,
            Expr::call(
                Builtin::CountWithin,
                vec![Expr::var(Namespace::Global, "sendTimes"), Expr::call(Builtin::Hours, vec![Expr::int(1)])],
            ),
            Expr::int(100),
        );
        assert_eq!(e.to_string(), "count_within(global.sendTimes, hours(1)) >= 100");
    }

    #[test]
    fn string_escapes() {
        let e = Expr::Lit(Value::Str("a\"b\\c".into()));
        assert_eq!(e.to_string(), r#""a\"b\\c""#);
    }
}
