//! Topic-based publish/subscribe over TCP.
//!
//! Frames are a 4-byte big-endian length followed by a UTF-8 JSON object
//! `{"op", "topic", "ts", "body"}` where `op` is one of `sub`, `unsub`,
//! `pub`, `msg`, `ping` or `pong`. Delivery is in-memory and at-most-once.

pub mod broker;
pub mod client;
pub mod frame;
pub mod topic;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use broker::{broker_serve, BrokerHandle};
pub use client::{BusClient, Subscription};
pub use frame::{Frame, Op, MAX_FRAME_LEN};
pub use topic::{Pattern, Topic};

/// Default broker port.
pub const DEFAULT_PORT: u16 = 7878;
/// Environment variable overriding the broker address.
pub const ADDR_ENV: &str = "INCUBATOR_BUS_ADDR";

/// Broker address from `INCUBATOR_BUS_ADDR`, else `127.0.0.1:7878`.
pub fn default_addr() -> String {
    std::env::var(ADDR_ENV).unwrap_or_else(|_| format!("127.0.0.1:{DEFAULT_PORT}"))
}

#[derive(Debug, thiserror::Error)]
pub enum BusError {
    #[error("invalid topic '{0}'")]
    InvalidTopic(String),
    #[error("invalid pattern '{0}'")]
    InvalidPattern(String),
    #[error("frame of {0} bytes exceeds the 1 MiB limit")]
    FrameTooLarge(usize),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("cannot bind {0}: {1}")]
    Bind(String, std::io::Error),
    #[error("cannot connect to {0}: {1}")]
    Connect(String, std::io::Error),
    #[error("connection closed")]
    Closed,
    #[error("timed out waiting for the broker")]
    Timeout,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A routed message as seen by subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub topic: String,
    /// Seconds since the Unix epoch.
    pub ts: f64,
    pub body: Map<String, Value>,
}

impl Message {
    pub fn parse<T: serde::de::DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        serde_json::from_value(Value::Object(self.body.clone()))
    }
}

/// Wall-clock seconds since the Unix epoch.
pub fn now() -> f64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}
