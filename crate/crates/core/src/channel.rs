//! Request/reply channels between application monitors and the central
//! monitor. Channels are looked up by name.

use std::sync::Mutex;

use thiserror::Error;

use crate::central::{handle_request, ChannelLogEntry, Direction, MonitorReply, MonitorRequest};
use crate::config::DeviceConfig;
use crate::rules::CompiledPolicy;
use crate::state::GlobalState;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("channel is disconnected")]
    Disconnected,
}

/// The only way an application reaches the central monitor. Calls are
/// synchronous: the caller waits for the reply.
pub trait ChannelPort: Send + Sync {
    fn name(&self) -> &'static str;
    fn is_connected(&self) -> bool;
    /// Sends `req` (its `seq` is assigned here) and waits for the reply.
    fn request(&self, req: MonitorRequest) -> Result<MonitorReply, ChannelError>;
}

struct Inner {
    state: GlobalState,
    next_seq: u64,
    log: Vec<ChannelLogEntry>,
}

/// Central monitor in the same process. One lock covers sequence
/// assignment, handling and logging, so requests are served one at a time
/// and logged in service order.
pub struct InProcessChannel<'a> {
    cp: &'a CompiledPolicy,
    config: &'a DeviceConfig,
    inner: Mutex<Inner>,
}

impl<'a> InProcessChannel<'a> {
    pub fn new(cp: &'a CompiledPolicy, config: &'a DeviceConfig) -> Self {
        Self { cp, config, inner: Mutex::new(Inner { state: GlobalState::new(), next_seq: 1, log: Vec::new() }) }
    }

    /// Final global state and the message log.
    pub fn into_parts(self) -> (GlobalState, Vec<ChannelLogEntry>) {
        let inner = self.inner.into_inner().unwrap_or_else(|e| e.into_inner());
        (inner.state, inner.log)
    }
}

impl ChannelPort for InProcessChannel<'_> {
    fn name(&self) -> &'static str {
        "in-process"
    }

    fn is_connected(&self) -> bool {
        true
    }

    fn request(&self, mut req: MonitorRequest) -> Result<MonitorReply, ChannelError> {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        req.seq = inner.next_seq;
        inner.next_seq += 1;
        let entry = |direction, payload| ChannelLogEntry {
            direction,
            seq: req.seq,
            t: req.t,
            app_id: req.app_id.clone(),
            rule_id: req.rule_id,
            payload,
        };
        let sent = entry(Direction::AppToCentral, serde_json::to_value(&req).expect("request serializes"));
        inner.log.push(sent);
        let reply = handle_request(&req, &mut inner.state, self.cp, self.config);
        let received = entry(Direction::CentralToApp, serde_json::to_value(&reply).expect("reply serializes"));
        inner.log.push(received);
        Ok(reply)
    }
}

/// A channel whose far end is gone. Every request fails.
pub struct DisconnectedChannel;

impl ChannelPort for DisconnectedChannel {
    fn name(&self) -> &'static str {
        "disconnected"
    }

    fn is_connected(&self) -> bool {
        false
    }

    fn request(&self, _req: MonitorRequest) -> Result<MonitorReply, ChannelError> {
        Err(ChannelError::Disconnected)
    }
}

/// Names accepted by [`channel_by_name`].
pub const CHANNELS: &[&str] = &["in-process", "disconnected"];

/// A channel constructed by name. The in-process variant also gives back
/// its state and log at the end of a run.
pub enum Channel<'a> {
    InProcess(InProcessChannel<'a>),
    Disconnected(DisconnectedChannel),
}

impl<'a> Channel<'a> {
    pub fn port(&self) -> &(dyn ChannelPort + 'a) {
        match self {
            Channel::InProcess(c) => c,
            Channel::Disconnected(c) => c,
        }
    }

    pub fn into_parts(self) -> (GlobalState, Vec<ChannelLogEntry>) {
        match self {
            Channel::InProcess(c) => c.into_parts(),
            Channel::Disconnected(_) => (GlobalState::new(), Vec::new()),
        }
    }
}

pub fn channel_by_name<'a>(name: &str, cp: &'a CompiledPolicy, config: &'a DeviceConfig) -> Option<Channel<'a>> {
    match name {
        "in-process" => Some(Channel::InProcess(InProcessChannel::new(cp, config))),
        "disconnected" => Some(Channel::Disconnected(DisconnectedChannel)),
        _ => None,
    }
}
