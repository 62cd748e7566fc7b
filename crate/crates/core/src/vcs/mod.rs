//! Authoritative tick-based collaboration space: wire protocol, sessions,
//! modeled latency, append-only logs and deterministic replay.

mod hub;
mod latency;
mod log;
mod protocol;
mod session;

pub use hub::Hub;
pub use latency::{delay_ticks, LatencyError, LatencyModel, LatencySampler};
pub use log::{fnv1a, hash_hex, AppliedMessage, LogError, LogRecord, SessionLog};
pub use protocol::{
    decode, Command, Envelope, ErrorCode, Outbound, ProtocolError, Recipient, Request, Role,
    MAX_FRAME_BYTES, PROTOCOL_VERSION,
};
pub use session::{replay, ReplayError, Session, SessionError, Snapshot, SnapshotState, SPEED_SCALE_RANGE};
