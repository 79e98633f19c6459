//! Wire messages: one JSON object per line, `{"v": 1, "kind": ..., ...}`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::persist::ArtifactKind;
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::model::{Action, EpisodeMeta, State};

pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on a serialized `state` message, newline excluded.
pub const MAX_STATE_BYTES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// The attached model sequence (or the client) drives the environment.
    #[default]
    Agent,
    /// Override actions drive the environment.
    HumanOverride,
    /// The agent drives except inside demonstration segments.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clock {
    /// Steps on request.
    #[default]
    Fast,
    /// Steps on a wall-clock tick and pushes a `state` message per tick.
    Live,
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Request {
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        env: Option<EnvKind>,
        /// Environment configuration text (TOML).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<Mode>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clock: Option<Clock>,
    },
    /// Without an action the session's model sequence decides.
    Step {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<Action>,
    },
    State {},
    Override {
        action: Action,
    },
    DemoStart {},
    DemoEnd {},
    Competence {},
    Save {
        artifact: ArtifactKind,
        name: String,
    },
    Load {
        path: String,
    },
    Error {
        message: String,
    },
}

/// Who chose the action reported in a `state` message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSource {
    Ensemble,
    Fallback,
    Human,
    Client,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    /// Per-session message counter; increases on every `state` message.
    pub t: u64,
    pub tick: u64,
    pub state: State,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<ActionSource>,
    /// Index of the answering ensemble when `source` is `ensemble`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default)]
    pub rejected: bool,
    #[serde(default)]
    pub done: bool,
    #[serde(default)]
    pub demo: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<Value>,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reply {
    Reset {
        session: u64,
        seed: u64,
        env: EnvKind,
        mode: Mode,
        clock: Clock,
        meta: EpisodeMeta,
        scene: Value,
    },
    State(StateMsg),
    /// Live sessions acknowledge an override; it is applied on the next tick.
    Override {
        queued: bool,
    },
    DemoStart {
        segment: u32,
    },
    DemoEnd {
        segment: u32,
        steps: usize,
        ensembles: usize,
    },
    Competence {
        competence: Option<f64>,
        confidence: Option<f64>,
        window: usize,
        seen: u64,
    },
    Save {
        artifact: ArtifactKind,
        path: String,
    },
    Load {
        artifact: ArtifactKind,
        ensembles: usize,
    },
    Error {
        message: String,
    },
}

impl Reply {
    pub fn error(e: impl std::fmt::Display) -> Self {
        Reply::Error { message: e.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Reply::Reset { .. } => "reset",
            Reply::State(_) => "state",
            Reply::Override { .. } => "override",
            Reply::DemoStart { .. } => "demo-start",
            Reply::DemoEnd { .. } => "demo-end",
            Reply::Competence { .. } => "competence",
            Reply::Save { .. } => "save",
            Reply::Load { .. } => "load",
            Reply::Error { .. } => "error",
        }
    }
}

/// A decoded line with its optional correlation id.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<T> {
    /// Echoed verbatim in the reply.
    pub id: Option<Value>,
    pub body: T,
}

pub const KINDS: [&str; 10] = [
    "reset",
    "step",
    "state",
    "override",
    "demo-start",
    "demo-end",
    "competence",
    "save",
    "load",
    "error",
];

fn take_envelope(line: &str) -> Result<(Option<Value>, Map<String, Value>)> {
    let value: Value = serde_json::from_str(line.trim()).map_err(|e| Error::Protocol(format!("malformed JSON: {e}")))?;
    let Value::Object(mut map) = value else {
        return Err(Error::Protocol("message must be a JSON object".into()));
    };
    let id = map.remove("id");
    match map.remove("v") {
        Some(Value::Number(n)) if n.as_u64() == Some(PROTOCOL_VERSION as u64) => {}
        Some(v) => return Err(Error::Protocol(format!("unsupported protocol version {v}"))),
        None => return Err(Error::Protocol("missing protocol version field `v`".into())),
    }
    match map.get("kind") {
        Some(Value::String(k)) if KINDS.contains(&k.as_str()) => {}
        Some(Value::String(k)) => return Err(Error::Protocol(format!("unknown message kind `{k}`"))),
        _ => return Err(Error::Protocol("missing message kind".into())),
    }
    Ok((id, map))
}

/// Decodes a client line. On failure the id (if any could be read) is
/// returned with the error so the reply can still be correlated.
pub fn decode_request(line: &str) -> std::result::Result<Envelope<Request>, (Option<Value>, Error)> {
    let (id, map) = take_envelope(line).map_err(|e| (id_of(line), e))?;
    match serde_json::from_value(Value::Object(map)) {
        Ok(body) => Ok(Envelope { id, body }),
        Err(e) => Err((id, Error::Protocol(format!("invalid payload: {e}")))),
    }
}

pub fn decode_reply(line: &str) -> Result<Envelope<Reply>> {
    let (id, map) = take_envelope(line)?;
    let body = serde_json::from_value(Value::Object(map)).map_err(|e| Error::Protocol(format!("invalid payload: {e}")))?;
    Ok(Envelope { id, body })
}

fn id_of(line: &str) -> Option<Value> {
    serde_json::from_str::<Value>(line).ok()?.get("id").cloned()
}

fn encode<T: Serialize>(id: Option<&Value>, body: &T) -> String {
    let mut v = serde_json::to_value(body).expect("wire types serialize");
    if let Value::Object(map) = &mut v {
        map.insert("v".into(), Value::from(PROTOCOL_VERSION));
        if let Some(id) = id {
            map.insert("id".into(), id.clone());
        }
    }
    v.to_string()
}

/// One line without the trailing newline; keys are sorted.
pub fn encode_reply(id: Option<&Value>, reply: &Reply) -> String {
    encode(id, reply)
}

pub fn encode_request(id: Option<&Value>, req: &Request) -> String {
    encode(id, req)
}
