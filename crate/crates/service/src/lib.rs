//! Live control service: clients stream tilt, the service answers with the
//! five instrument gains, and serves the stem files the client plays.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ErrorCode, GainsFrame, ServerMessage};
pub use server::{router, serve, AppState};
pub use session::{replay, Session, SessionId, Sessions};
