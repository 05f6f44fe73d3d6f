//! Monitor state stores. Local state belongs to exactly one app's monitor;
//! global state is confined to the central monitor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::expr::ast::VarRef;
use crate::value::{Ty, Value};

/// Types of every state variable a policy touches, inferred at validation.
pub type StateTypes = BTreeMap<VarRef, Ty>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalState {
    pub vars: BTreeMap<String, Value>,
}

impl LocalState {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalState {
    pub attrs: BTreeMap<String, Value>,
    pub vars: BTreeMap<String, Value>,
}

impl GlobalState {
    pub fn new() -> Self {
        Self::default()
    }
}
