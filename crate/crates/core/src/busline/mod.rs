//! Broker-based node network: naming, liveness, request/reply services and
//! publish/subscribe topics over length-prefixed JSON frames on TCP.

mod broker;
mod client;
mod frame;
mod name;

pub use broker::{Broker, BrokerConfig};
pub use client::{BusClient, ServiceFn, Subscription};
pub use frame::{decode_frame, encode_frame, write_frame, KNOWN_OPS, MAX_FRAME_BYTES};
pub use name::NodeName;

use thiserror::Error;

/// Errors surfaced by the bus layer.
#[derive(Debug, Error)]
pub enum BusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame body of {size} bytes exceeds the {limit}-byte limit")]
    Oversize { size: usize, limit: usize },
    #[error("stream ended inside a frame")]
    IncompleteFrame,
    #[error("connection closed")]
    ConnectionClosed,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("{code}: {message}")]
    Remote { code: String, message: String },
    #[error("service call timed out")]
    Timeout,
    #[error("peer disconnected before replying")]
    PeerGone,
    #[error("invalid node or topic name: {0}")]
    BadName(String),
}

impl BusError {
    /// Wire error code for ERROR frames.
    pub fn code(&self) -> &str {
        match self {
            BusError::Remote { code, .. } => code,
            BusError::Timeout => "TIMEOUT",
            BusError::PeerGone => "PEER_GONE",
            BusError::BadName(_) => "BAD_NAME",
            BusError::Oversize { .. } => "OVERSIZE",
            _ => "INTERNAL",
        }
    }

    /// True when the error is a remote ERROR reply with the given code.
    pub fn is_code(&self, want: &str) -> bool {
        match self {
            BusError::Remote { code, .. } => code == want,
            BusError::Timeout => want == "TIMEOUT",
            BusError::PeerGone => want == "PEER_GONE",
            _ => false,
        }
    }

    pub fn remote(code: impl Into<String>, message: impl Into<String>) -> Self {
        BusError::Remote {
            code: code.into(),
            message: message.into(),
        }
    }
}
