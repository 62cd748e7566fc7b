//! WebSocket front end for the collaboration-space hub.
//!
//! Each session is ticked by its own task at the scenario rate. Readers push
//! frames into the hub under a short lock; every connection has a writer
//! task that stamps its own outbound `seq`.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tracing::{info, warn};
use workcell_core::scenario::{Rates, Scenario};
use workcell_core::vcs::{ErrorCode, Hub, Outbound, ProtocolError, Recipient};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    /// Overrides the tick and broadcast rates of every scenario.
    pub rates: Option<Rates>,
    /// Session logs are written here when a session ends.
    pub log_dir: Option<PathBuf>,
    /// Session opened at start-up so that consoles can join it directly.
    pub scenario: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            rates: None,
            log_dir: None,
            scenario: None,
        }
    }
}

type Outbox = mpsc::UnboundedSender<Outbound>;

pub struct AppState {
    hub: Mutex<Hub>,
    conns: Mutex<BTreeMap<String, Outbox>>,
    ticking: Mutex<BTreeSet<String>>,
    next_conn: AtomicU64,
    config: ServerConfig,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Arc<Self> {
        Arc::new(Self {
            hub: Mutex::new(Hub::new()),
            conns: Mutex::new(BTreeMap::new()),
            ticking: Mutex::new(BTreeSet::new()),
            next_conn: AtomicU64::new(1),
            config,
        })
    }

    fn hub(&self) -> std::sync::MutexGuard<'_, Hub> {
        // a panic while holding the lock is a bug elsewhere; keep serving
        self.hub.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Creates a session outside the protocol, e.g. from the config file.
    pub fn open_session(self: &Arc<Self>, mut scenario: Scenario) -> anyhow::Result<String> {
        if let Some(rates) = self.config.rates {
            scenario.rates = rates;
        }
        let sid = self.hub().create_session(&scenario)?;
        self.start_ticking();
        Ok(sid)
    }

    fn deliver(&self, out: Vec<Outbound>) {
        if out.is_empty() {
            return;
        }
        let conns = self.conns.lock().unwrap_or_else(|p| p.into_inner());
        let hub = self.hub();
        for msg in out {
            match &msg.to {
                Recipient::Client(id) => {
                    if let Some(tx) = conns.get(id) {
                        let _ = tx.send(msg);
                    }
                }
                Recipient::Session => {
                    let Some(session) = hub.session(&msg.sid) else { continue };
                    for member in session.members() {
                        if let Some(tx) = conns.get(member) {
                            let _ = tx.send(msg.clone());
                        }
                    }
                }
            }
        }
    }

    /// Spawns a tick task for every session that lacks one.
    fn start_ticking(self: &Arc<Self>) {
        let ids: Vec<String> = self.hub().session_ids().map(str::to_owned).collect();
        let mut ticking = self.ticking.lock().unwrap_or_else(|p| p.into_inner());
        for sid in ids {
            if ticking.insert(sid.clone()) {
                tokio::spawn(tick_loop(self.clone(), sid));
            }
        }
    }

    fn handle_frame(self: &Arc<Self>, conn: &str, text: &str) {
        let mut frame = text.to_owned();
        if let Some(rates) = self.config.rates {
            frame = override_rates(&frame, rates).unwrap_or(frame);
        }
        let out = self.hub().handle_frame(conn, &frame);
        if out.iter().any(|o| o.kind == "ack") {
            self.start_ticking();
        }
        self.deliver(out);
    }
}

/// Rewrites the rates of a session-creating join.
fn override_rates(frame: &str, rates: Rates) -> Option<String> {
    let mut v: serde_json::Value = serde_json::from_str(frame).ok()?;
    if v.get("type")?.as_str()? != "join" {
        return None;
    }
    let scenario = v.get_mut("payload")?.get_mut("scenario")?.as_object_mut()?;
    scenario.insert("rates".into(), serde_json::to_value(rates).ok()?);
    Some(v.to_string())
}

async fn tick_loop(state: Arc<AppState>, sid: String) {
    let (dt, total) = {
        let hub = state.hub();
        let Some(s) = hub.session(&sid) else { return };
        (s.dt(), s.scenario().total_ticks())
    };
    let mut interval = tokio::time::interval(Duration::from_secs_f64(dt));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
    info!(session = %sid, ticks = total, "session started");
    loop {
        interval.tick().await;
        let (out, done) = {
            let mut hub = state.hub();
            let Some(session) = hub.session_mut(&sid) else { return };
            let out = session.tick();
            let done = session.frozen().is_some() || session.tick_count() >= total;
            (out, done)
        };
        state.deliver(out);
        if done {
            break;
        }
    }
    let hub = state.hub();
    if let Some(session) = hub.session(&sid) {
        match session.frozen() {
            Some(reason) => warn!(session = %sid, reason, "session frozen"),
            None => info!(session = %sid, "session complete"),
        }
        if let Some(dir) = &state.config.log_dir {
            if let Err(e) = write_session_files(dir, session) {
                warn!(session = %sid, error = %e, "could not write session log");
            }
        }
    }
}

fn write_session_files(dir: &Path, session: &workcell_core::vcs::Session) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let sid = session.id();
    let log = std::fs::File::create(dir.join(format!("{sid}.ndjson")))?;
    session.log().write_ndjson(std::io::BufWriter::new(log))?;
    let scenario = serde_json::to_string_pretty(session.scenario()).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(format!("{sid}.scenario.json")), scenario)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ws", get(ws_handler))
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", get(list_sessions))
        .with_state(state)
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let hub = state.hub();
    let sessions: Vec<serde_json::Value> = hub
        .session_ids()
        .filter_map(|id| hub.session(id))
        .map(|s| {
            serde_json::json!({
                "sid": s.id(),
                "name": s.scenario().name,
                "tick": s.tick_count(),
                "operator": s.operator(),
                "frozen": s.frozen().is_some(),
            })
        })
        .collect();
    Json(sessions)
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(socket: WebSocket, state: Arc<AppState>) {
    let conn = format!("c{}", state.next_conn.fetch_add(1, Ordering::Relaxed));
    let (tx, mut rx) = mpsc::unbounded_channel::<Outbound>();
    state
        .conns
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(conn.clone(), tx.clone());
    let (mut sink, mut stream) = socket.split();

    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some(out) = rx.recv().await {
            seq += 1;
            let frame = out.into_envelope(seq).to_frame();
            if sink.send(Message::Text(frame.into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(msg) = stream.next().await {
        match msg {
            Ok(Message::Text(text)) => state.handle_frame(&conn, text.as_str()),
            Ok(Message::Binary(_)) => {
                let err = ProtocolError::new(ErrorCode::Malformed, "binary frames are not supported");
                let _ = tx.send(Outbound::error(&conn, "", 0, err));
            }
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => {}
        }
    }

    state.hub().disconnect(&conn);
    state.conns.lock().unwrap_or_else(|p| p.into_inner()).remove(&conn);
    drop(tx);
    let _ = writer.await;
}

/// Serves on an already bound listener until the task is cancelled.
pub async fn serve_on(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let state = AppState::new(config.clone());
    if let Some(path) = &config.scenario {
        let text = std::fs::read_to_string(path)?;
        let scenario = workcell_core::scenario::validate(&text).map_err(|issues| {
            let lines: Vec<String> = issues.iter().map(ToString::to_string).collect();
            anyhow::anyhow!("{}: {}", path.display(), lines.join("; "))
        })?;
        let sid = state.open_session(scenario)?;
        info!(session = %sid, "opened start-up session");
    }
    let listener = TcpListener::bind(config.listen).await?;
    info!(addr = %listener.local_addr()?, "listening");
    serve_on(listener, state).await?;
    Ok(())
}
