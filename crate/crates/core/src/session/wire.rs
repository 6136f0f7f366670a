//! Newline-delimited JSON envelopes.
//!
//! Every frame is one UTF-8 JSON object terminated by `\n`:
//!
//! ```text
//! {"v":1,"type":"pose","seq":12,"t_ms":1500,"from":"A","payload":{"x_mm":102.3,"y_mm":88.0,"theta_rad":0.0}}
//! ```
//!
//! Field order is irrelevant. `seq` increases strictly per sender, `t_ms` is
//! the server session clock (clients fill in their own estimate; the server
//! overwrites it when relaying).

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::activity::{ActivityState, Participant, RejectReason};
use crate::dynamics::DynamicsParams;
use crate::session::SessionConfig;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("protocol version mismatch: got {0}, expected {PROTOCOL_VERSION}")]
    VersionMismatch(u64),
    #[error("bad {kind} payload: {reason}")]
    BadPayload { kind: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sender {
    A,
    B,
    #[serde(rename = "server")]
    Server,
}

impl From<Participant> for Sender {
    fn from(p: Participant) -> Self {
        match p {
            Participant::A => Sender::A,
            Participant::B => Sender::B,
        }
    }
}

impl Sender {
    pub fn participant(self) -> Option<Participant> {
        match self {
            Sender::A => Some(Participant::A),
            Sender::B => Some(Participant::B),
            Sender::Server => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub map_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStart {
    pub session_id: String,
    pub role: Participant,
    pub config: SessionConfig,
    pub dynamics: DynamicsParams,
    /// Activity progress so far; lets a rejoining client rebuild its view.
    pub snapshot: ActivityState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x_mm: f64,
    pub y_mm: f64,
    pub theta_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneChange {
    pub zone_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Entered,
    Exited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusEdgeMsg {
    pub edge: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTick {
    pub task_id: String,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizNav {
    pub q_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneVote {
    pub q_id: String,
    pub zone_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub q_id: String,
    pub accepted: bool,
    pub correct: Option<bool>,
    pub reason: Option<RejectReason>,
    /// Set on the result that completes the quiz.
    #[serde(default)]
    pub quiz_finished: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Heartbeat {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bye {
    pub reason: String,
    /// For server notices about a participant (e.g. `peer_lost`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<Participant>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    SessionStart(Box<SessionStart>),
    Pose(Pose),
    Zone(ZoneChange),
    ConsensusEdge(ConsensusEdgeMsg),
    TaskTick(TaskTick),
    QuizNav(QuizNav),
    Propose(ZoneVote),
    Agree(ZoneVote),
    SubmitResult(SubmitResult),
    Heartbeat(Heartbeat),
    Bye(Bye),
}

pub const MESSAGE_KINDS: [&str; 12] = [
    "hello",
    "session_start",
    "pose",
    "zone",
    "consensus_edge",
    "task_tick",
    "quiz_nav",
    "propose",
    "agree",
    "submit_result",
    "heartbeat",
    "bye",
];

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::SessionStart(_) => "session_start",
            Message::Pose(_) => "pose",
            Message::Zone(_) => "zone",
            Message::ConsensusEdge(_) => "consensus_edge",
            Message::TaskTick(_) => "task_tick",
            Message::QuizNav(_) => "quiz_nav",
            Message::Propose(_) => "propose",
            Message::Agree(_) => "agree",
            Message::SubmitResult(_) => "submit_result",
            Message::Heartbeat(_) => "heartbeat",
            Message::Bye(_) => "bye",
        }
    }

    fn payload(&self) -> Value {
        let v = match self {
            Message::Hello(p) => serde_json::to_value(p),
            Message::SessionStart(p) => serde_json::to_value(p),
            Message::Pose(p) => serde_json::to_value(p),
            Message::Zone(p) => serde_json::to_value(p),
            Message::ConsensusEdge(p) => serde_json::to_value(p),
            Message::TaskTick(p) => serde_json::to_value(p),
            Message::QuizNav(p) => serde_json::to_value(p),
            Message::Propose(p) | Message::Agree(p) => serde_json::to_value(p),
            Message::SubmitResult(p) => serde_json::to_value(p),
            Message::Heartbeat(p) => serde_json::to_value(p),
            Message::Bye(p) => serde_json::to_value(p),
        };
        v.expect("payloads serialize")
    }

    fn from_parts(kind: &str, payload: Value) -> Result<Message, WireError> {
        fn parse<T: serde::de::DeserializeOwned>(kind: &str, payload: Value) -> Result<T, WireError> {
            serde_json::from_value(payload).map_err(|e| WireError::BadPayload {
                kind: kind.to_string(),
                reason: e.to_string(),
            })
        }
        Ok(match kind {
            "hello" => Message::Hello(parse(kind, payload)?),
            "session_start" => Message::SessionStart(Box::new(parse(kind, payload)?)),
            "pose" => Message::Pose(parse(kind, payload)?),
            "zone" => Message::Zone(parse(kind, payload)?),
            "consensus_edge" => Message::ConsensusEdge(parse(kind, payload)?),
            "task_tick" => Message::TaskTick(parse(kind, payload)?),
            "quiz_nav" => Message::QuizNav(parse(kind, payload)?),
            "propose" => Message::Propose(parse(kind, payload)?),
            "agree" => Message::Agree(parse(kind, payload)?),
            "submit_result" => Message::SubmitResult(parse(kind, payload)?),
            "heartbeat" => Message::Heartbeat(parse(kind, payload)?),
            "bye" => Message::Bye(parse(kind, payload)?),
            other => return Err(WireError::UnknownType(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    pub t_ms: u64,
    pub from: Sender,
    pub msg: Message,
}

impl Envelope {
    pub fn new(seq: u64, t_ms: u64, from: Sender, msg: Message) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            seq,
            t_ms,
            from,
            msg,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.msg.kind()
    }

    /// JSON object form (no trailing newline).
    pub fn to_json(&self) -> String {
        let raw = RawEnvelope {
            v: u64::from(self.v),
            kind: self.msg.kind().to_string(),
            seq: self.seq,
            t_ms: self.t_ms,
            from: self.from,
            payload: self.msg.payload(),
        };
        serde_json::to_string(&raw).expect("envelope serializes")
    }
}

impl Serialize for Envelope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawEnvelope {
            v: u64::from(self.v),
            kind: self.msg.kind().to_string(),
            seq: self.seq,
            t_ms: self.t_ms,
            from: self.from,
            payload: self.msg.payload(),
        }
        .serialize(serializer)
    }
}

#[derive(Serialize, Deserialize)]
struct RawEnvelope {
    v: u64,
    #[serde(rename = "type")]
    kind: String,
    seq: u64,
    t_ms: u64,
    from: Sender,
    #[serde(default)]
    payload: Value,
}

/// One frame: the envelope's JSON followed by `\n`.
pub fn encode(e: &Envelope) -> Vec<u8> {
    let mut out = e.to_json().into_bytes();
    out.push(b'\n');
    out
}

/// Decodes one complete frame. A trailing `\n` (and `\r`) is optional.
pub fn decode(frame: &[u8]) -> Result<Envelope, WireError> {
    let mut line = frame;
    while let [rest @ .., b'\n' | b'\r'] = line {
        line = rest;
    }
    let value: Value = serde_json::from_slice(line).map_err(|e| WireError::Malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| WireError::Malformed("frame is not a JSON object".into()))?;
    match obj.get("v").and_then(Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(v) => return Err(WireError::VersionMismatch(v)),
        None => return Err(WireError::Malformed("missing protocol version".into())),
    }
    let kind = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| WireError::Malformed("missing message type".into()))?;
    if !MESSAGE_KINDS.contains(&kind) {
        return Err(WireError::UnknownType(kind.to_string()));
    }
    let raw: RawEnvelope = serde_json::from_value(value.clone()).map_err(|e| WireError::Malformed(e.to_string()))?;
    let msg = Message::from_parts(&raw.kind, raw.payload)?;
    Ok(Envelope {
        v: PROTOCOL_VERSION,
        seq: raw.seq,
        t_ms: raw.t_ms,
        from: raw.from,
        msg,
    })
}

/// Splits a byte stream into frames. Bytes after the last `\n` are kept
/// until the rest of the line arrives.
#[derive(Debug, Default)]
pub struct LineDecoder {
    buf: Vec<u8>,
}

impl LineDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Number of buffered bytes belonging to an incomplete frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, or `None` if only a partial line is buffered.
    /// Blank lines are skipped.
    pub fn next_frame(&mut self) -> Option<Result<Envelope, WireError>> {
        loop {
            let end = self.buf.iter().position(|&b| b == b'\n')?;
            let line: Vec<u8> = self.buf.drain(..=end).collect();
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            return Some(decode(&line));
        }
    }
}
