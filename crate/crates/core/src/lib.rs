//! Device-wide runtime verification: a policy language compiled into per-app
//! local monitors coordinated by one central monitor.

pub mod bench;
pub mod central;
pub mod channel;
pub mod config;
pub mod corpus;
pub mod dsl;
pub mod expr;
pub mod local;
pub mod rules;
pub mod sim;
pub mod state;
pub mod time;
pub mod value;
