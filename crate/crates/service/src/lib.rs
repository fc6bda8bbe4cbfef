//! Operational shell around `bioskin-core`: the NDJSON streaming service,
//! its command protocol, and the `bioskin` command-line verbs.

pub mod cli;
pub mod engine;
pub mod protocol;
pub mod server;

pub use engine::{Engine, EngineConfig};
pub use protocol::{Body, Command, ErrorReason, ServiceEvent, StreamMessage};
pub use server::{serve, ServerConfig, ServerHandle};
