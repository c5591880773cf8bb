//! Length-prefixed JSON request/reply protocol for driving an [`Env`](crate::env::Env) over TCP.

mod client;
mod frame;
mod message;
mod server;

use thiserror::Error;

pub use client::Client;
pub use frame::{encode_frame, FrameDecoder, MAX_FRAME};
pub use message::{
    decode, encode, Body, ConfigAck, ErrorCode, ErrorReply, Hello, Message, Obs, Reset, Step, StepReply,
};
pub use server::{EnvFactory, Phase, Server, ServerConfig, Session, SessionStats, DEFAULT_IDLE_TIMEOUT};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME}-byte limit")]
    Oversize(usize),
    #[error("zero-length frame")]
    EmptyFrame,
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("bad body for message {seq}: {reason}")]
    BadBody { seq: u64, reason: String },
    #[error("unknown message type {ty:?}")]
    UnknownType { seq: u64, ty: String },
    #[error("server error {code}: {message}", code = code.as_str())]
    Remote { code: ErrorCode, message: String },
    #[error("unexpected reply: {0}")]
    UnexpectedReply(String),
    #[error("connection closed")]
    Closed,
}
