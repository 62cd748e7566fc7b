//! Versioned JSON text-frame protocol.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::arbitration::AuthoritySource;
use crate::knowledge::KnowledgeTriple;
use crate::robot::Vec2;
use crate::scenario::Scenario;

use super::latency::LatencyModel;

pub const PROTOCOL_VERSION: u64 = 1;
/// Frames above this size are rejected unparsed.
pub const MAX_FRAME_BYTES: usize = 256 * 1024;
pub const MAX_TEXT_CHARS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u64,
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    pub sid: String,
    pub t: i64,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn new(kind: &str, seq: u64, sid: &str, t: i64, payload: Value) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            kind: kind.to_owned(),
            seq,
            sid: sid.to_owned(),
            t,
            payload,
        }
    }

    pub fn to_frame(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    UnknownType,
    InvalidPayload,
    StaleSeq,
    UnknownSession,
    NotJoined,
    NotOperator,
    OperatorTaken,
    /// Well-formed but refused by the current session state.
    Rejected,
    Frozen,
    /// A server-to-client type sent by a client.
    WrongDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, reason: impl Into<String>) -> Self {
        Self {
            code,
            reason: reason.into(),
            ref_seq: None,
            ref_type: None,
            details: None,
        }
    }

    pub fn referring(mut self, env: &Envelope) -> Self {
        self.ref_seq = Some(env.seq);
        self.ref_type = Some(env.kind.clone());
        self
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.reason)
    }
}

impl std::error::Error for ProtocolError {}

/// Parses a text frame into an envelope. Only the envelope is checked here;
/// payloads are checked by [`Request::parse`].
pub fn decode(frame: &str) -> Result<Envelope, ProtocolError> {
    use ErrorCode::*;
    if frame.len() > MAX_FRAME_BYTES {
        return Err(ProtocolError::new(Malformed, "frame too large"));
    }
    let value: Value = serde_json::from_str(frame)
        .map_err(|e| ProtocolError::new(Malformed, format!("not JSON: {e}")))?;
    let Value::Object(mut obj) = value else {
        return Err(ProtocolError::new(Malformed, "frame is not a JSON object"));
    };
    let field = |obj: &Map<String, Value>, name: &str| {
        obj.get(name)
            .cloned()
            .ok_or_else(|| ProtocolError::new(Malformed, format!("missing `{name}`")))
    };
    let v = field(&obj, "v")?;
    match v.as_u64() {
        Some(PROTOCOL_VERSION) => {}
        Some(other) => {
            return Err(ProtocolError::new(
                UnsupportedVersion,
                format!("version {other} unsupported, expected {PROTOCOL_VERSION}"),
            ))
        }
        None => return Err(ProtocolError::new(Malformed, "`v` must be an integer")),
    }
    let kind = field(&obj, "type")?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| ProtocolError::new(Malformed, "`type` must be a string"))?;
    let seq = field(&obj, "seq")?
        .as_u64()
        .ok_or_else(|| ProtocolError::new(Malformed, "`seq` must be a non-negative integer"))?;
    let sid = field(&obj, "sid")?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| ProtocolError::new(Malformed, "`sid` must be a string"))?;
    let t = field(&obj, "t")?
        .as_i64()
        .ok_or_else(|| ProtocolError::new(Malformed, "`t` must be an integer"))?;
    let payload = match obj.remove("payload") {
        None | Some(Value::Null) => Value::Object(Map::new()),
        Some(p @ Value::Object(_)) => p,
        Some(_) => {
            let env = Envelope::new(&kind, seq, &sid, t, Value::Null);
            return Err(ProtocolError::new(InvalidPayload, "payload must be an object").referring(&env));
        }
    };
    Ok(Envelope {
        v: PROTOCOL_VERSION,
        kind,
        seq,
        sid,
        t,
        payload,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Read-only telemetry consumer.
    #[default]
    Observer,
    /// The single client whose guidance force is u_h.
    Operator,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelloPayload {
    #[serde(default)]
    pub client: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinPayload {
    #[serde(default)]
    pub role: Role,
    /// Creates a fresh session from this scenario instead of joining `sid`.
    #[serde(default)]
    pub scenario: Option<Box<Scenario>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePayload {
    #[serde(default)]
    pub log: bool,
    #[serde(default)]
    pub report: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectLatencyPayload {
    /// Defaults to the sender.
    #[serde(default)]
    pub client: Option<String>,
    pub base_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub loss: f64,
    #[serde(default)]
    pub seed: u64,
}

impl InjectLatencyPayload {
    pub fn model(&self) -> LatencyModel {
        LatencyModel {
            base_ms: self.base_ms,
            jitter_ms: self.jitter_ms,
            loss: self.loss,
            seed: self.seed,
        }
    }
}

/// Messages that change the world; they are queued and applied at a tick
/// boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    SetLambda { lambda: f64 },
    SetMode { source: AuthoritySource },
    NlCommand { text: String },
    Wrench { force: Vec2 },
    Grasp { object: Option<String> },
    Release,
    AssertTriple(KnowledgeTriple),
    Goal { waypoint: Vec2, duration: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Hello(HelloPayload),
    Join(JoinPayload),
    State(StatePayload),
    InjectLatency(InjectLatencyPayload),
    Command(Command),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LambdaPayload {
    lambda: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModePayload {
    source: AuthoritySource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextPayload {
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WrenchPayload {
    force: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraspPayload {
    #[serde(default)]
    object: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyPayload {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TriplePayload {
    head: String,
    relation: String,
    tail: String,
    confidence: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalPayload {
    waypoint: Vec<f64>,
    duration: f64,
}

const SERVER_TYPES: [&str; 3] = ["snapshot", "ack", "error"];

fn payload<T: DeserializeOwned>(env: &Envelope) -> Result<T, ProtocolError> {
    serde_json::from_value(env.payload.clone()).map_err(|e| invalid(env, e.to_string()))
}

fn invalid(env: &Envelope, reason: impl Into<String>) -> ProtocolError {
    ProtocolError::new(ErrorCode::InvalidPayload, reason).referring(env)
}

fn finite(env: &Envelope, name: &str, x: f64) -> Result<f64, ProtocolError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(env, format!("`{name}` must be finite")))
    }
}

fn pair(env: &Envelope, name: &str, v: &[f64]) -> Result<Vec2, ProtocolError> {
    match v {
        [a, b] if a.is_finite() && b.is_finite() => Ok([*a, *b]),
        _ => Err(invalid(env, format!("`{name}` needs two finite components"))),
    }
}

impl Request {
    /// Type dispatch and payload checks that need no session state.
    pub fn parse(env: &Envelope) -> Result<Request, ProtocolError> {
        let req = match env.kind.as_str() {
            "hello" => Request::Hello(payload(env)?),
            "join" => Request::Join(payload(env)?),
            "state" => Request::State(payload(env)?),
            "inject_latency" => {
                let p: InjectLatencyPayload = payload(env)?;
                p.model().validate().map_err(|e| invalid(env, e.to_string()))?;
                Request::InjectLatency(p)
            }
            "set_lambda" => {
                let p: LambdaPayload = payload(env)?;
                Request::Command(Command::SetLambda {
                    lambda: finite(env, "lambda", p.lambda)?,
                })
            }
            "set_mode" => {
                let p: ModePayload = payload(env)?;
                Request::Command(Command::SetMode { source: p.source })
            }
            "nl_command" => {
                let p: TextPayload = payload(env)?;
                if p.text.trim().is_empty() {
                    return Err(invalid(env, "`text` must not be empty"));
                }
                if p.text.chars().count() > MAX_TEXT_CHARS {
                    return Err(invalid(env, "`text` too long"));
                }
                Request::Command(Command::NlCommand { text: p.text })
            }
            "wrench" => {
                let p: WrenchPayload = payload(env)?;
                Request::Command(Command::Wrench {
                    force: pair(env, "force", &p.force)?,
                })
            }
            "grasp" => {
                let p: GraspPayload = payload(env)?;
                Request::Command(Command::Grasp { object: p.object })
            }
            "release" => {
                let _: EmptyPayload = payload(env)?;
                Request::Command(Command::Release)
            }
            "assert_triple" => {
                let p: TriplePayload = payload(env)?;
                if p.head.is_empty() || p.relation.is_empty() || p.tail.is_empty() {
                    return Err(invalid(env, "identifiers must not be empty"));
                }
                if !(p.confidence > 0.0 && p.confidence <= 1.0) {
                    return Err(invalid(env, "`confidence` must lie in (0, 1]"));
                }
                Request::Command(Command::AssertTriple(KnowledgeTriple::new(
                    &p.head,
                    &p.relation,
                    &p.tail,
                    p.confidence,
                )))
            }
            "goal" => {
                let p: GoalPayload = payload(env)?;
                let waypoint = pair(env, "waypoint", &p.waypoint)?;
                if !(p.duration > 0.0 && p.duration.is_finite()) {
                    return Err(invalid(env, "`duration` must be positive"));
                }
                Request::Command(Command::Goal {
                    waypoint,
                    duration: p.duration,
                })
            }
            kind if SERVER_TYPES.contains(&kind) => {
                return Err(ProtocolError::new(
                    ErrorCode::WrongDirection,
                    format!("`{kind}` is sent by the server only"),
                )
                .referring(env))
            }
            kind => {
                return Err(ProtocolError::new(
                    ErrorCode::UnknownType,
                    format!("unknown message type `{kind}`"),
                )
                .referring(env))
            }
        };
        Ok(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recipient {
    Client(String),
    /// Every member of the session.
    Session,
}

/// A server message before the transport stamps its per-connection `seq`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: Recipient,
    pub sid: String,
    pub kind: &'static str,
    pub t: i64,
    pub payload: Value,
}

impl Outbound {
    pub fn error(client: &str, sid: &str, t: i64, err: ProtocolError) -> Self {
        Self {
            to: Recipient::Client(client.to_owned()),
            sid: sid.to_owned(),
            kind: "error",
            t,
            payload: serde_json::to_value(err).expect("error serializes"),
        }
    }

    pub fn ack(client: &str, sid: &str, t: i64, env: &Envelope, status: &str, detail: Value) -> Self {
        Self {
            to: Recipient::Client(client.to_owned()),
            sid: sid.to_owned(),
            kind: "ack",
            t,
            payload: json!({
                "ref_seq": env.seq,
                "ref_type": env.kind,
                "status": status,
                "detail": detail,
            }),
        }
    }

    pub fn into_envelope(self, seq: u64) -> Envelope {
        Envelope::new(self.kind, seq, &self.sid, self.t, self.payload)
    }

    pub fn is_error(&self) -> bool {
        self.kind == "error"
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        if !self.is_error() {
            return None;
        }
        serde_json::from_value(self.payload.get("code")?.clone()).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(v: Value) -> String {
        v.to_string()
    }

    #[test]
    fn decode_round_trip() {
        let env = Envelope::new("set_lambda", 3, "s1", 120, json!({"lambda": 0.5}));
        assert_eq!(decode(&env.to_frame()).unwrap(), env);
    }

    #[test]
    fn missing_payload_is_empty_object() {
        let env = decode(r#"{"v":1,"type":"release","seq":1,"sid":"s","t":0}"#).unwrap();
        assert_eq!(env.payload, json!({}));
        assert_eq!(Request::parse(&env).unwrap(), Request::Command(Command::Release));
    }

    #[test]
    fn envelope_errors_are_typed() {
        let cases = [
            ("nope", ErrorCode::Malformed),
            ("[1,2]", ErrorCode::Malformed),
            (r#"{"type":"hello","seq":1,"sid":"","t":0}"#, ErrorCode::Malformed),
            (r#"{"v":2,"type":"hello","seq":1,"sid":"","t":0}"#, ErrorCode::UnsupportedVersion),
            (r#"{"v":1,"type":"hello","seq":-1,"sid":"","t":0}"#, ErrorCode::Malformed),
            (r#"{"v":1,"type":"hello","seq":1,"sid":7,"t":0}"#, ErrorCode::Malformed),
            (r#"{"v":1,"type":"hello","seq":1,"sid":"","t":0,"payload":3}"#, ErrorCode::InvalidPayload),
        ];
        for (text, code) in cases {
            assert_eq!(decode(text).unwrap_err().code, code, "{text}");
        }
    }

    #[test]
    fn payload_errors_are_typed() {
        let cases = [
            (json!({"type": "dance"}), ErrorCode::UnknownType),
            (json!({"type": "ack"}), ErrorCode::WrongDirection),
            (json!({"type": "set_lambda", "payload": {"lambda": "high"}}), ErrorCode::InvalidPayload),
            (json!({"type": "set_lambda", "payload": {"lambda": 0.5, "x": 1}}), ErrorCode::InvalidPayload),
            (json!({"type": "wrench", "payload": {"force": [1.0]}}), ErrorCode::InvalidPayload),
            (json!({"type": "nl_command", "payload": {"text": "  "}}), ErrorCode::InvalidPayload),
            (json!({"type": "goal", "payload": {"waypoint": [0.5, 0.5], "duration": 0}}), ErrorCode::InvalidPayload),
            (json!({"type": "inject_latency", "payload": {"base_ms": 0, "loss": 1.0}}), ErrorCode::InvalidPayload),
            (json!({"type": "assert_triple", "payload": {"head": "a", "relation": "r", "tail": "b", "confidence": 1.5}}), ErrorCode::InvalidPayload),
        ];
        for (mut v, code) in cases {
            v["v"] = json!(1);
            v["seq"] = json!(9);
            v["sid"] = json!("s");
            v["t"] = json!(0);
            let env = decode(&frame(v.clone())).unwrap();
            let err = Request::parse(&env).unwrap_err();
            assert_eq!(err.code, code, "{v}");
            assert_eq!(err.ref_seq, Some(9));
        }
    }

    #[test]
    fn error_payload_shape() {
        let env = Envelope::new("wrench", 4, "s", 0, json!({}));
        let out = Outbound::error("c", "s", 0, ProtocolError::new(ErrorCode::StaleSeq, "old").referring(&env));
        assert_eq!(out.error_code(), Some(ErrorCode::StaleSeq));
        assert_eq!(out.payload, json!({"code": "stale_seq", "reason": "old", "ref_seq": 4, "ref_type": "wrench"}));
    }
}
