//! Real-time host: wall-clock simulation loop, WebSocket wire protocol and
//! the command line.

pub mod cli;
pub mod clock;
pub mod protocol;
pub mod server;

pub use protocol::{Payload, WireMessage, PROTOCOL_VERSION};
pub use server::{Server, ServiceConfig, SessionReport};
