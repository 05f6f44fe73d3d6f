//! The policy language: syntax tree, parser, printer and validation.

pub mod ast;
mod error;
mod lexer;
mod parser;
mod printer;
mod validate;

pub use ast::*;
pub use error::{ParseError, ValidationError};
pub use parser::{parse_expr, parse_policy};
pub use printer::{format_guard, pretty_print};
pub use validate::{rule_label, validate_policy, ValidatedPolicy};
