//! The three participants as message-driven state machines.
//!
//! [`OwnerSession`], [`CloudService`] and [`UserAgent`] only exchange
//! [`Message`](crate::wire::Message)s, so the same code runs in-process
//! (see [`run_simulation`]) or over TCP (see [`CloudServer`]).

mod accumulator;
mod cloud;
mod owner;
mod scenario;
mod server;
mod user;

use thiserror::Error;

use crate::abe::AbeError;
use crate::codec::CodecError;
use crate::policy::PolicyError;
use crate::wire::WireError;

pub use accumulator::{AccumulatorError, FlushedWindow, WindowAccumulator};
pub use cloud::{CloudService, CloudStateDump, CloudStats, Delivery, Handled};
pub use owner::{Negotiation, OwnerKeys, OwnerSession, TAG_OWNER_KEYS};
pub use scenario::{
    group_outputs, plaintext_oracle, run_simulation, FrameRecord, Generator, Party, PolicyConfig, Scenario,
    StreamConfig, Transcript, Transport, UserConfig,
};
pub use server::{CloudServer, FrameSink};
pub use user::{required_table_size, TableCache, UserAgent, UserClient, UserEvent, UserOutput};

/// Error codes carried by `Message::Error`.
pub mod error_code {
    pub const PROTOCOL: u16 = 1;
    pub const UNKNOWN_STREAM: u16 = 2;
    pub const POLICY: u16 = 3;
    pub const NOT_GRANTED: u16 = 4;
    pub const CRYPTO: u16 = 5;
    pub const WINDOW: u16 = 6;
}

#[derive(Debug, Error)]
pub enum RoleError {
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("encoding: {0}")]
    Codec(#[from] CodecError),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
    #[error("window: {0}")]
    Accumulator(#[from] AccumulatorError),
    #[error("stream {0:?} is not registered")]
    UnknownStream(String),
    #[error("stream {0:?} is already registered with different parameters")]
    StreamConflict(String),
    #[error("policy {0:?} is not known here")]
    UnknownPolicy(String),
    #[error("policy id {0:?} is already bound to a different policy")]
    PolicyConflict(String),
    #[error("window size {0} is not supported by the stream")]
    UnsupportedWindow(u32),
    #[error("user {user:?} holds no grant for policy {policy:?}")]
    NotGranted { user: String, policy: String },
    #[error("unexpected {0} message")]
    UnexpectedMessage(&'static str),
    #[error("inconsistent message: {0}")]
    Inconsistent(&'static str),
    #[error("configuration: {0}")]
    Config(String),
    #[error("peer reported error {code}: {text}")]
    Remote { code: u16, text: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RoleError {
    /// Code used when reporting this error to a peer.
    pub fn code(&self) -> u16 {
        match self {
            RoleError::UnknownStream(_) => error_code::UNKNOWN_STREAM,
            RoleError::Policy(_) | RoleError::UnknownPolicy(_) | RoleError::PolicyConflict(_) => error_code::POLICY,
            RoleError::NotGranted { .. } => error_code::NOT_GRANTED,
            RoleError::Abe(_) | RoleError::UnsupportedWindow(_) => error_code::CRYPTO,
            RoleError::Accumulator(_) => error_code::WINDOW,
            _ => error_code::PROTOCOL,
        }
    }
}
