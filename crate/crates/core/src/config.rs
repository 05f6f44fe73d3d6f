//! Device configuration: the per-deployment data policies consult through
//! the read-only `config.` namespace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::time::MS_PER_MINUTE;
use crate::value::{Ty, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkHours {
    pub start_hour: i64,
    pub end_hour: i64,
}

/// Which send counts as "the previous request" for the message gap policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapAnchor {
    /// Only sends that were allowed restart the gap.
    Allowed,
    /// Every attempt restarts the gap, blocked or not.
    Attempt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    /// Dialling prefix of the home country, e.g. `+356`.
    pub home_country_code: String,
    /// Substrings that make a URL blocked.
    pub url_blocklist: Vec<String>,
    /// Path prefixes under access control.
    pub protected_paths: Vec<String>,
    /// Protected prefix -> app ids allowed under it.
    pub authorized_apps: BTreeMap<String, Vec<String>>,
    pub idle_threshold_ms: i64,
    pub work_hours: WorkHours,
    /// App names counted as games.
    pub game_apps: Vec<String>,
    pub msg_gap_anchor: GapAnchor,
    /// Synthetic service time of every catalog API, spun on the wall clock.
    pub service_cost_ns: u64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        let mut authorized_apps = BTreeMap::new();
        authorized_apps.insert("/sdcard/company/".to_string(), vec!["StockControl".to_string()]);
        Self {
            home_country_code: "+356".to_string(),
            url_blocklist: vec!["casino".into(), "gambling".into(), "adult".into()],
            protected_paths: vec!["/sdcard/company/".to_string()],
            authorized_apps,
            idle_threshold_ms: 15 * MS_PER_MINUTE,
            work_hours: WorkHours { start_hour: 9, end_hour: 17 },
            game_apps: vec!["1024".into(), "Puzzle".into()],
            msg_gap_anchor: GapAnchor::Allowed,
            service_cost_ns: 0,
        }
    }
}

/// Names and types visible under `config.`.
pub const CONFIG_VARS: &[(&str, Ty)] = &[
    ("home_country_code", Ty::Str),
    ("url_blocklist", Ty::StrList),
    ("protected_paths", Ty::StrList),
    ("game_apps", Ty::StrList),
    ("idle_threshold", Ty::Duration),
    ("work_start_hour", Ty::Int),
    ("work_end_hour", Ty::Int),
    ("msg_gap_anchor_attempts", Ty::Bool),
];

pub fn config_var_type(name: &str) -> Option<Ty> {
    CONFIG_VARS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

impl DeviceConfig {
    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn value(&self, name: &str) -> Option<Value> {
        Some(match name {
            "home_country_code" => Value::Str(self.home_country_code.clone()),
            "url_blocklist" => Value::StrList(self.url_blocklist.clone()),
            "protected_paths" => Value::StrList(self.protected_paths.clone()),
            "game_apps" => Value::StrList(self.game_apps.clone()),
            "idle_threshold" => Value::Duration(self.idle_threshold_ms),
            "work_start_hour" => Value::Int(self.work_hours.start_hour),
            "work_end_hour" => Value::Int(self.work_hours.end_hour),
            "msg_gap_anchor_attempts" => Value::Bool(self.msg_gap_anchor == GapAnchor::Attempt),
            _ => return None,
        })
    }

    /// True unless `path` lies under a protected prefix that does not list
    /// `app_id`. Every matching prefix must authorize the app.
    pub fn authorized(&self, path: &str, app_id: &str) -> bool {
        self.protected_paths
            .iter()
            .filter(|prefix| path.starts_with(prefix.as_str()))
            .all(|prefix| self.authorized_apps.get(prefix).is_some_and(|apps| apps.iter().any(|a| a == app_id)))
    }
}
