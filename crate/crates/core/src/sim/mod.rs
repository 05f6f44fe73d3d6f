//! The simulated device: API catalog, trace files, device effects and the
//! run loop that drives the monitors.

pub mod catalog;
pub mod device;
pub mod gen;
pub mod latency;
pub mod run;
pub mod trace;

pub use catalog::{check_policy, lookup_call, Api, ApiSpec, CATALOG};
pub use device::Device;
pub use gen::{generate, TraceProfile};
pub use latency::{probe_by_name, LatencyProbe};
pub use run::{
    channel_log_jsonl, run, run_unmonitored, usage_sessions, verdicts_jsonl, RunError, RunOptions, RunOutcome, Verdict,
    VerdictDecision,
};
pub use trace::{
    load_trace, parse_trace, resolve_trace, write_trace, CatalogMismatch, ResolvedEvent, TraceError, TraceEvent,
};
