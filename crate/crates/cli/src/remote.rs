//! Drives a scenario against a live server over the wire protocol.

use std::net::TcpStream;
use std::time::Duration;

use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};
use workcell_core::report::MetricsReport;
use workcell_core::scenario::Scenario;
use workcell_core::vcs::{decode, Envelope, LogRecord, SessionLog};

const READ_TIMEOUT: Duration = Duration::from_secs(15);

#[derive(Debug, thiserror::Error)]
pub enum RemoteError {
    #[error("cannot reach {addr}: {reason}")]
    Connect { addr: String, reason: String },
    #[error("connection lost: {0}")]
    Io(String),
    #[error("server refused `{kind}`: {reason}")]
    Refused { kind: String, reason: String },
    #[error("unexpected server reply: {0}")]
    Protocol(String),
}

impl From<tungstenite::Error> for RemoteError {
    fn from(e: tungstenite::Error) -> Self {
        RemoteError::Io(e.to_string())
    }
}

pub struct RemoteRun {
    pub sid: String,
    pub report: MetricsReport,
    pub log: SessionLog,
}

struct Link {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
    seq: u64,
    sid: String,
}

impl Link {
    fn send(&mut self, kind: &str, payload: Value) -> Result<u64, RemoteError> {
        self.seq += 1;
        let env = Envelope::new(kind, self.seq, &self.sid, 0, payload);
        self.ws.send(Message::text(env.to_frame()))?;
        Ok(self.seq)
    }

    fn recv(&mut self) -> Result<Envelope, RemoteError> {
        loop {
            match self.ws.read()? {
                Message::Text(text) => {
                    return decode(text.as_str()).map_err(|e| RemoteError::Protocol(e.to_string()))
                }
                Message::Close(_) => return Err(RemoteError::Io("server closed the connection".into())),
                _ => continue,
            }
        }
    }

    /// Waits for the reply to `seq`, passing other traffic to `on_other`.
    fn reply_to(
        &mut self,
        seq: u64,
        kind: &str,
        mut on_other: impl FnMut(&Envelope),
    ) -> Result<Envelope, RemoteError> {
        loop {
            let env = self.recv()?;
            let refers = env.payload.get("ref_seq").and_then(Value::as_u64) == Some(seq);
            if env.kind == "error" && refers {
                return Err(refused(kind, &env));
            }
            if (env.kind == "ack" && refers) || (kind == "state" && env.kind == "state") {
                return Ok(env);
            }
            on_other(&env);
        }
    }
}

fn refused(kind: &str, env: &Envelope) -> RemoteError {
    let mut reason = env.payload.get("reason").and_then(Value::as_str).unwrap_or("").to_owned();
    if let Some(issues) = env.payload.pointer("/details/issues") {
        reason = format!("{reason}: {issues}");
    }
    RemoteError::Refused {
        kind: kind.to_owned(),
        reason,
    }
}

fn url_for(addr: &str) -> String {
    if addr.starts_with("ws://") || addr.starts_with("wss://") {
        addr.to_owned()
    } else {
        format!("ws://{addr}/ws")
    }
}

/// Creates a session from `scenario`, submits its timeline as the session
/// clock passes each event, then fetches the log and report.
pub fn run_remote(addr: &str, scenario: &Scenario) -> Result<RemoteRun, RemoteError> {
    let url = url_for(addr);
    let (ws, _) = tungstenite::connect(&url).map_err(|e| RemoteError::Connect {
        addr: url.clone(),
        reason: e.to_string(),
    })?;
    if let MaybeTlsStream::Plain(stream) = ws.get_ref() {
        stream
            .set_read_timeout(Some(READ_TIMEOUT))
            .map_err(|e| RemoteError::Io(e.to_string()))?;
    }
    let mut link = Link {
        ws,
        seq: 0,
        sid: String::new(),
    };
    let hello = link.send("hello", json!({ "client": "workcell-cli" }))?;
    link.reply_to(hello, "hello", |_| {})?;
    let join = link.send("join", json!({ "role": "operator", "scenario": scenario }))?;
    let ack = link.reply_to(join, "join", |_| {})?;
    link.sid = ack.sid.clone();

    let total = scenario.total_ticks();
    let mut events = scenario.timeline.iter().peekable();
    loop {
        let env = link.recv()?;
        match env.kind.as_str() {
            "snapshot" => {
                let tick = env.payload.pointer("/snapshot/tick").and_then(Value::as_u64).unwrap_or(0);
                while let Some(event) = events.next_if(|e| e.tick(&scenario.rates) <= tick) {
                    let (kind, payload) = event.to_message();
                    link.send(kind, payload)?;
                }
                if tick >= total {
                    break;
                }
            }
            "error" => {
                let code = env.payload.get("code").and_then(Value::as_str).unwrap_or("");
                if code == "frozen" {
                    return Err(refused("tick", &env));
                }
                // rejected commands are recorded in the report
            }
            _ => {}
        }
    }

    let state = link.send("state", json!({ "log": true, "report": true }))?;
    let reply = link.reply_to(state, "state", |_| {})?;
    let records: Vec<LogRecord> = serde_json::from_value(reply.payload["log"].clone())
        .map_err(|e| RemoteError::Protocol(format!("log: {e}")))?;
    let report: MetricsReport = serde_json::from_value(reply.payload["report"].clone())
        .map_err(|e| RemoteError::Protocol(format!("report: {e}")))?;
    let _ = link.ws.close(None);
    Ok(RemoteRun {
        sid: link.sid,
        report,
        log: SessionLog::from(records),
    })
}
