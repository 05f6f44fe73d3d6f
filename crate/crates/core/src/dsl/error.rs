use std::fmt;

use super::ast::Span;

/// Syntax error with position and the set of tokens that would have been
/// accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub span: Span,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    pub fn at(span: Span, message: impl Into<String>) -> Self {
        Self { span, message: message.into(), expected: Vec::new() }
    }

    pub fn expecting(mut self, expected: &[&str]) -> Self {
        self.expected = expected.iter().map(|s| s.to_string()).collect();
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: parse-error: {}", self.span, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

/// Name-resolution, side and typing problems found by validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationError {
    DuplicateName { span: Span, kind: &'static str, name: String },
    UnresolvedName { span: Span, name: String, context: String },
    SideViolation { span: Span, decl: String, detail: String },
    TypeError { span: Span, decl: String, detail: String },
    ReturnBindingOnBeforeEvent { span: Span, event: String },
    UnboundParameter { span: Span, event: String, param: String },
    BlockAfterReturn { span: Span, rule: String, action: String },
    UnknownApi { span: Span, event: String, api: String },
    ArityMismatch { span: Span, event: String, expected: usize, found: usize },
}

impl ValidationError {
    pub fn span(&self) -> Span {
        match self {
            ValidationError::DuplicateName { span, .. }
            | ValidationError::UnresolvedName { span, .. }
            | ValidationError::SideViolation { span, .. }
            | ValidationError::TypeError { span, .. }
            | ValidationError::ReturnBindingOnBeforeEvent { span, .. }
            | ValidationError::UnboundParameter { span, .. }
            | ValidationError::BlockAfterReturn { span, .. }
            | ValidationError::UnknownApi { span, .. }
            | ValidationError::ArityMismatch { span, .. } => *span,
        }
    }

    /// Stable diagnostic code.
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::DuplicateName { .. } => "duplicate-name",
            ValidationError::UnresolvedName { .. } => "unresolved-name",
            ValidationError::SideViolation { .. } => "side-violation",
            ValidationError::TypeError { .. } => "type-error",
            ValidationError::ReturnBindingOnBeforeEvent { .. } => "return-binding-on-before-event",
            ValidationError::UnboundParameter { .. } => "unbound-parameter",
            ValidationError::BlockAfterReturn { .. } => "block-after-return",
            ValidationError::UnknownApi { .. } => "unknown-api",
            ValidationError::ArityMismatch { .. } => "arity-mismatch",
        }
    }

    fn message(&self) -> String {
        match self {
            ValidationError::DuplicateName { kind, name, .. } => format!("{kind} `{name}` is declared more than once"),
            ValidationError::UnresolvedName { name, context, .. } => format!("`{name}` is not declared ({context})"),
            ValidationError::SideViolation { decl, detail, .. } => format!("in `{decl}`: {detail}"),
            ValidationError::TypeError { decl, detail, .. } => format!("in `{decl}`: {detail}"),
            ValidationError::ReturnBindingOnBeforeEvent { event, .. } => {
                format!("event `{event}` binds a return value but is not an `after` event")
            }
            ValidationError::UnboundParameter { event, param, .. } => {
                format!(
                    "parameter `{param}` of event `{event}` is bound neither by the call pattern nor by uponReturning"
                )
            }
            ValidationError::BlockAfterReturn { rule, action, .. } => {
                format!("rule `{rule}` runs blocking action `{action}` after the call has returned")
            }
            ValidationError::UnknownApi { event, api, .. } => format!("event `{event}` intercepts unknown API `{api}`"),
            ValidationError::ArityMismatch { event, expected, found, .. } => {
                format!("event `{event}` binds {found} argument(s) but the API takes {expected}")
            }
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.span(), self.code(), self.message())
    }
}

impl std::error::Error for ValidationError {}
