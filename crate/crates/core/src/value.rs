use std::fmt;

use serde::{Deserialize, Serialize};

/// Semantic types of the monitor language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ty {
    Bool,
    Int,
    Str,
    Timestamp,
    Duration,
    TimestampList,
    /// Only produced by read-only configuration values.
    StrList,
}

impl Ty {
    /// Keyword used in parameter declarations.
    pub fn keyword(self) -> &'static str {
        match self {
            Ty::Bool => "bool",
            Ty::Int => "int",
            Ty::Str => "string",
            Ty::Timestamp => "timestamp",
            Ty::Duration => "duration",
            Ty::TimestampList => "timestamp_list",
            Ty::StrList => "string_list",
        }
    }

    /// Parses a declared parameter type. Accepts the Java spellings used in
    /// hand-written policies (`boolean`, `String`).
    pub fn from_param_keyword(word: &str) -> Option<Ty> {
        match word {
            "bool" | "boolean" => Some(Ty::Bool),
            "int" | "long" => Some(Ty::Int),
            "string" | "String" => Some(Ty::Str),
            "timestamp" => Some(Ty::Timestamp),
            "duration" => Some(Ty::Duration),
            _ => None,
        }
    }

    /// Value read from a state variable that was never written.
    pub fn zero(self) -> Value {
        match self {
            Ty::Bool => Value::Bool(false),
            Ty::Int => Value::Int(0),
            Ty::Str => Value::Str(String::new()),
            Ty::Timestamp => Value::Timestamp(0),
            Ty::Duration => Value::Duration(0),
            Ty::TimestampList => Value::TimestampList(Vec::new()),
            Ty::StrList => Value::StrList(Vec::new()),
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Runtime values. Timestamps and durations are milliseconds; timestamp
/// lists are kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
    Timestamp(i64),
    Duration(i64),
    TimestampList(Vec<i64>),
    StrList(Vec<String>),
}

impl Value {
    pub fn ty(&self) -> Ty {
        match self {
            Value::Bool(_) => Ty::Bool,
            Value::Int(_) => Ty::Int,
            Value::Str(_) => Ty::Str,
            Value::Timestamp(_) => Ty::Timestamp,
            Value::Duration(_) => Ty::Duration,
            Value::TimestampList(_) => Ty::TimestampList,
            Value::StrList(_) => Ty::StrList,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Converts a trace argument into a value of the declared type.
    pub fn from_json(json: &serde_json::Value, ty: Ty) -> Option<Value> {
        match (ty, json) {
            (Ty::Bool, serde_json::Value::Bool(b)) => Some(Value::Bool(*b)),
            (Ty::Int, serde_json::Value::Number(n)) => n.as_i64().map(Value::Int),
            (Ty::Str, serde_json::Value::String(s)) => Some(Value::Str(s.clone())),
            (Ty::Timestamp, serde_json::Value::Number(n)) => n.as_i64().map(Value::Timestamp),
            (Ty::Duration, serde_json::Value::Number(n)) => n.as_i64().filter(|d| *d >= 0).map(Value::Duration),
            _ => None,
        }
    }

    /// Plain JSON rendering used for trace arguments.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Bool(b) => (*b).into(),
            Value::Int(i) | Value::Timestamp(i) | Value::Duration(i) => (*i).into(),
            Value::Str(s) => s.clone().into(),
            Value::TimestampList(l) => l.clone().into(),
            Value::StrList(l) => l.clone().into(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Timestamp(t) => write!(f, "@{t}ms"),
            Value::Duration(d) => write!(f, "{d}ms"),
            Value::TimestampList(l) => write!(f, "{l:?}"),
            Value::StrList(l) => write!(f, "{l:?}"),
        }
    }
}
