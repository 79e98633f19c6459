//! Session server between environments and agents: wire protocol, sessions,
//! human override and artifact persistence.

mod persist;
mod protocol;
mod server;
mod session;

pub use persist::{file_name, persist, resolve, restore, write_atomic, Artifact, ArtifactKind};
pub use protocol::{
    decode_reply, decode_request, encode_reply, encode_request, ActionSource, Clock, Envelope, Mode, Reply, Request,
    StateMsg, KINDS, MAX_STATE_BYTES, PROTOCOL_VERSION,
};
pub use server::{serve, Client, ServeConfig, Server};
pub use session::{handle_override, OverrideEvent, Session, SessionConfig};
