use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::{lookup_call, ApiSpec};
use crate::value::Value;

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub t_ms: i64,
    pub app: String,
    pub call: String,
    pub args: Vec<serde_json::Value>,
}

impl TraceEvent {
    pub fn new(t_ms: i64, app: &str, call: &str, args: Vec<serde_json::Value>) -> Self {
        Self { t_ms, app: app.to_string(), call: call.to_string(), args }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_value(self).expect("trace event serializes").to_string()
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: timestamp goes backwards")]
    Unsorted { line: usize },
}

/// Parses JSON Lines; blank lines are skipped. Timestamps must not decrease.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut out: Vec<TraceEvent> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let ev: TraceEvent =
            serde_json::from_str(raw).map_err(|e| TraceError::Format { line, message: e.to_string() })?;
        if out.last().is_some_and(|p| ev.t_ms < p.t_ms) {
            return Err(TraceError::Unsorted { line });
        }
        out.push(ev);
    }
    Ok(out)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceEvent>, TraceError> {
    parse_trace(&std::fs::read_to_string(path)?)
}

pub fn write_trace(trace: &[TraceEvent]) -> String {
    trace.iter().map(|e| e.to_json_line() + "\n").collect()
}

/// A trace event checked against the catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedEvent {
    pub index: usize,
    pub t: i64,
    pub app: String,
    pub api: &'static ApiSpec,
    pub args: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {index}: {message}")]
pub struct CatalogMismatch {
    pub index: usize,
    pub message: String,
}

pub fn resolve_trace(trace: &[TraceEvent]) -> Result<Vec<ResolvedEvent>, CatalogMismatch> {
    trace
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let fail = |message: String| CatalogMismatch { index, message };
            let api = lookup_call(&e.call).ok_or_else(|| fail(format!("unknown API `{}`", e.call)))?;
            if e.args.len() != api.params.len() {
                return Err(fail(format!("`{}` takes {} argument(s), got {}", e.call, api.params.len(), e.args.len())));
            }
            let args = e
                .args
                .iter()
                .zip(api.params)
                .map(|(a, (name, ty))| {
                    Value::from_json(a, *ty).ok_or_else(|| fail(format!("argument `{name}` must be {ty}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ResolvedEvent { index, t: e.t_ms, app: e.app.clone(), api, args })
        })
        .collect()
}
