use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::catalog::Api;
use crate::value::Value;

/// State of the simulated handset that API calls act on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Device {
    /// Device attributes such as `wifi_enabled`.
    pub attrs: BTreeMap<String, Value>,
    pub messages_sent: BTreeMap<String, u64>,
    /// App and start time of the call on the line, if any.
    pub active_call: Option<(String, i64)>,
    pub call_ms_total: i64,
    pub foreground: Option<String>,
    pub pages_loaded: u64,
    pub files_opened: u64,
}

impl Device {
    pub fn new() -> Self {
        let mut d = Self::default();
        d.attrs.insert("wifi_enabled".into(), Value::Bool(false));
        d
    }

    pub fn total_messages(&self) -> u64 {
        self.messages_sent.values().sum()
    }

    /// Performs the call's effect and returns its result.
    pub fn execute(&mut self, api: Api, app: &str, args: &[Value], t: i64) -> Value {
        let str_arg = |i: usize| args.get(i).and_then(Value::as_str).unwrap_or("");
        let ok = match api {
            Api::SendTextMessage => {
                if str_arg(0).is_empty() {
                    false
                } else {
                    *self.messages_sent.entry(app.to_string()).or_default() += 1;
                    true
                }
            }
            Api::SetWifiEnabled => {
                let on = args.first().and_then(Value::as_bool).unwrap_or(false);
                self.attrs.insert("wifi_enabled".into(), Value::Bool(on));
                true
            }
            Api::DialCall => {
                if self.active_call.is_some() {
                    false
                } else {
                    self.active_call = Some((app.to_string(), t));
                    true
                }
            }
            Api::EndCall => match self.active_call.take() {
                Some((_, start)) => {
                    self.call_ms_total += t - start;
                    true
                }
                None => false,
            },
            Api::RequestUrl => {
                self.pages_loaded += 1;
                true
            }
            Api::OpenFile => {
                self.files_opened += 1;
                true
            }
            Api::LaunchApp => {
                self.foreground = Some(str_arg(0).to_string());
                true
            }
        };
        Value::Bool(ok)
    }

    pub fn apply_attr(&mut self, name: &str, value: Value) {
        self.attrs.insert(name.to_string(), value);
    }
}

/// Busy-waits for `ns` nanoseconds of wall time, standing in for the work
/// a real API call does.
pub fn spin_for(ns: u64) {
    if ns == 0 {
        return;
    }
    let start = Instant::now();
    let d = Duration::from_nanos(ns);
    while start.elapsed() < d {
        std::hint::spin_loop();
    }
}
