//! Human-in-the-loop play: a message protocol, a transport-agnostic session
//! state machine, and a WebSocket server.
//!
//! The human commands blue one unit at a time; red is any `BehaviorModel`
//! run server-side. Messages are JSON documents, one per line.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::behaviors::BehaviorModel;
use crate::engine::{
    derive_seed, Action, Board, DecisionTrace, EpisodeHeader, EpisodeLog, Event, Faction, GameState, Objective,
    Scenario, StepRecord, Unit, UnitId, RED_STREAM,
};
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ProtocolMessage {
    Hello {
        v: u32,
        scenario: Scenario,
    },
    State {
        turn: u32,
        phase: Faction,
        score: i64,
        units: Vec<Unit>,
        objectives: Vec<Objective>,
        terrain_digest: String,
    },
    Prompt {
        unit: UnitId,
        legal: Vec<Action>,
    },
    Act {
        unit: UnitId,
        action: Action,
    },
    Result {
        unit: UnitId,
        faction: Faction,
        action: Action,
        events: Vec<Event>,
        reward: i64,
        score: i64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace: Option<DecisionTrace>,
    },
    Gameover {
        final_score: i64,
    },
    Error {
        code: String,
        msg: String,
    },
}

impl ProtocolMessage {
    /// Single-line JSON without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages serialize")
    }

    fn error(code: &str, msg: impl Into<String>) -> Self {
        Self::Error { code: code.into(), msg: msg.into() }
    }
}

/// SHA-256 (hex) of the terrain rows, one character per hex, rows ending in `\n`.
pub fn terrain_digest(board: &Board) -> String {
    let mut h = Sha256::new();
    for r in 0..board.height as i32 {
        let row: String = (0..board.width as i32)
            .map(|q| board.terrain(crate::hexgrid::HexCoord::new(q, r)).expect("in bounds").to_char())
            .collect();
        h.update(row.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn state_message(s: &GameState) -> ProtocolMessage {
    ProtocolMessage::State {
        turn: s.turn,
        phase: s.phase,
        score: s.score,
        units: s.units.clone(),
        objectives: s.board.objectives.clone(),
        terrain_digest: terrain_digest(&s.board),
    }
}

/// One game between a remote blue player and a server-side red policy.
pub struct Session {
    state: GameState,
    red: Box<dyn BehaviorModel>,
    log: EpisodeLog,
    pending: Option<UnitId>,
    finished: bool,
}

impl Session {
    pub fn new(scenario: &Scenario, mut red: Box<dyn BehaviorModel>, seed: u64) -> Self {
        red.begin_episode(derive_seed(seed, RED_STREAM));
        let log = EpisodeLog::new(EpisodeHeader {
            scenario: scenario.clone(),
            seed,
            blue: "human".into(),
            red: red.name().to_string(),
        });
        Self { state: GameState::new(scenario, seed), red, log, pending: None, finished: false }
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn pending(&self) -> Option<UnitId> {
        self.pending
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    /// Final log; marked truncated unless the game reached a terminal state.
    pub fn into_log(mut self) -> EpisodeLog {
        self.log.final_score = self.state.score;
        self.log.truncated = !self.finished;
        self.log
    }

    /// Greeting followed by everything up to the first prompt.
    pub fn start(&mut self) -> Result<Vec<ProtocolMessage>> {
        let mut out = vec![ProtocolMessage::Hello { v: PROTOCOL_VERSION, scenario: self.log.header.scenario.clone() }];
        self.advance(&mut out)?;
        Ok(out)
    }

    /// Processes one or more newline-separated client messages.
    pub fn handle(&mut self, text: &str) -> Result<Vec<ProtocolMessage>> {
        let mut out = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            self.handle_line(line, &mut out)?;
        }
        Ok(out)
    }

    fn reprompt(&self, out: &mut Vec<ProtocolMessage>) {
        if let Some(unit) = self.pending {
            let legal = self.state.legal_actions(unit).expect("pending unit is alive");
            out.push(ProtocolMessage::Prompt { unit, legal });
        }
    }

    fn handle_line(&mut self, line: &str, out: &mut Vec<ProtocolMessage>) -> Result<()> {
        if self.finished {
            out.push(ProtocolMessage::error("game_over", "the game is over"));
            return Ok(());
        }
        let (unit, action) = match serde_json::from_str::<ProtocolMessage>(line) {
            Ok(ProtocolMessage::Act { unit, action }) => (unit, action),
            Ok(other) => {
                out.push(ProtocolMessage::error("unexpected", format!("expected act, got {}", message_type(&other))));
                self.reprompt(out);
                return Ok(());
            }
            Err(e) => {
                out.push(ProtocolMessage::error("malformed", e.to_string()));
                self.reprompt(out);
                return Ok(());
            }
        };
        if self.pending != Some(unit) {
            out.push(ProtocolMessage::error("not_on_move", format!("unit {unit} is not on move")));
            self.reprompt(out);
            return Ok(());
        }
        if !self.state.is_legal(unit, action) {
            out.push(ProtocolMessage::error("illegal_action", format!("{action} is not legal for unit {unit}")));
            self.reprompt(out);
            return Ok(());
        }
        self.pending = None;
        self.apply(unit, action, None, out)?;
        self.advance(out)
    }

    fn apply(
        &mut self,
        unit: UnitId,
        action: Action,
        trace: Option<DecisionTrace>,
        out: &mut Vec<ProtocolMessage>,
    ) -> Result<()> {
        let pre = self.state.snapshot();
        let (turn, faction) = (self.state.turn, self.state.phase);
        let step = self.state.apply(unit, action)?;
        out.push(ProtocolMessage::Result {
            unit,
            faction,
            action,
            events: step.events.clone(),
            reward: step.reward,
            score: self.state.score,
            trace: trace.clone(),
        });
        self.log.records.push(StepRecord {
            turn,
            unit,
            faction,
            state: pre,
            action,
            reward: step.reward,
            events: step.events,
            trace,
        });
        Ok(())
    }

    /// Plays red until blue must act or the game ends.
    fn advance(&mut self, out: &mut Vec<ProtocolMessage>) -> Result<()> {
        loop {
            let Some(unit) = self.state.unit_on_move() else {
                self.finished = true;
                self.log.final_score = self.state.score;
                out.push(ProtocolMessage::Gameover { final_score: self.state.score });
                return Ok(());
            };
            match self.state.phase {
                Faction::Blue => {
                    self.pending = Some(unit);
                    out.push(state_message(&self.state));
                    self.reprompt(out);
                    return Ok(());
                }
                Faction::Red => {
                    let action = self.red.act(&self.state, unit)?;
                    let trace = self.red.take_trace();
                    if !self.state.is_legal(unit, action) {
                        return Err(Error::ModelFault {
                            model: self.red.name().to_string(),
                            msg: format!("illegal action {action} for unit {unit}"),
                        });
                    }
                    self.apply(unit, action, trace, out)?;
                }
            }
        }
    }
}

fn message_type(m: &ProtocolMessage) -> &'static str {
    match m {
        ProtocolMessage::Hello { .. } => "hello",
        ProtocolMessage::State { .. } => "state",
        ProtocolMessage::Prompt { .. } => "prompt",
        ProtocolMessage::Act { .. } => "act",
        ProtocolMessage::Result { .. } => "result",
        ProtocolMessage::Gameover { .. } => "gameover",
        ProtocolMessage::Error { .. } => "error",
    }
}

/// Ordered, reliable, bidirectional line channel.
pub trait Transport {
    fn send(&mut self, line: &str) -> Result<()>;
    /// `None` once the peer has disconnected.
    fn recv(&mut self) -> Result<Option<String>>;
}

/// Newline-delimited messages over any reader/writer pair.
pub struct LineTransport<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> LineTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader, writer }
    }
}

impl<R: BufRead, W: Write> Transport for LineTransport<R, W> {
    fn send(&mut self, line: &str) -> Result<()> {
        writeln!(self.writer, "{line}")?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Option<String>> {
        let mut line = String::new();
        Ok(match self.reader.read_line(&mut line)? {
            0 => None,
            _ => Some(line),
        })
    }
}

/// In-memory transport: replies come from a queue, sent lines are kept.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    pub incoming: VecDeque<String>,
    pub sent: Vec<String>,
}

impl Transport for ScriptedTransport {
    fn send(&mut self, line: &str) -> Result<()> {
        self.sent.push(line.to_string());
        Ok(())
    }

    fn recv(&mut self) -> Result<Option<String>> {
        Ok(self.incoming.pop_front())
    }
}

/// Runs one session to completion or disconnect and persists its log.
pub fn session_loop(
    scenario: &Scenario,
    red: Box<dyn BehaviorModel>,
    seed: u64,
    transport: &mut dyn Transport,
    log_path: Option<&Path>,
) -> Result<EpisodeLog> {
    let mut session = Session::new(scenario, red, seed);
    let result = drive(&mut session, transport);
    if let Err(e) = &result {
        let _ = transport.send(&ProtocolMessage::error("internal", e.to_string()).to_line());
    }
    let log = session.into_log();
    if let Some(p) = log_path {
        log.write_ndjson(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    result.map(|()| log)
}

fn drive(session: &mut Session, transport: &mut dyn Transport) -> Result<()> {
    let send_all = |t: &mut dyn Transport, msgs: Vec<ProtocolMessage>| -> bool {
        msgs.iter().all(|m| t.send(&m.to_line()).is_ok())
    };
    let first = session.start()?;
    if !send_all(transport, first) {
        return Ok(());
    }
    while !session.is_finished() {
        let Some(text) = transport.recv()? else { break };
        let replies = session.handle(&text)?;
        if !send_all(transport, replies) {
            break;
        }
    }
    Ok(())
}

/// Builds the red policy for a session from its seed.
pub type PolicyFactory = dyn Fn(u64) -> Result<Box<dyn BehaviorModel>> + Send + Sync;

pub struct ServerConfig {
    pub scenarios: BTreeMap<String, Scenario>,
    pub default_scenario: String,
    pub red: Box<PolicyFactory>,
    pub seed: u64,
    /// Where session logs are written, if anywhere.
    pub log_dir: Option<PathBuf>,
    sessions: AtomicU64,
}

impl ServerConfig {
    pub fn new(
        scenarios: BTreeMap<String, Scenario>,
        default_scenario: &str,
        red: Box<PolicyFactory>,
        seed: u64,
    ) -> Result<Self> {
        if !scenarios.contains_key(default_scenario) {
            return Err(Error::InvalidArgument(format!("unknown default scenario {default_scenario}")));
        }
        Ok(Self {
            scenarios,
            default_scenario: default_scenario.into(),
            red,
            seed,
            log_dir: None,
            sessions: AtomicU64::new(0),
        })
    }

    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.log_dir = Some(dir.into());
        self
    }
}

#[derive(Debug, Deserialize)]
struct PlayQuery {
    scenario: Option<String>,
    seed: Option<u64>,
}

/// `/health`, `/scenarios`, and the `/play` WebSocket endpoint.
pub fn router(cfg: Arc<ServerConfig>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/scenarios", get(list_scenarios))
        .route("/play", get(play))
        .with_state(cfg)
}

pub async fn serve(listener: tokio::net::TcpListener, cfg: Arc<ServerConfig>) -> Result<()> {
    axum::serve(listener, router(cfg)).await?;
    Ok(())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_scenarios(State(cfg): State<Arc<ServerConfig>>) -> Json<Vec<String>> {
    Json(cfg.scenarios.keys().cloned().collect())
}

async fn play(ws: WebSocketUpgrade, Query(q): Query<PlayQuery>, State(cfg): State<Arc<ServerConfig>>) -> Response {
    let name = q.scenario.unwrap_or_else(|| cfg.default_scenario.clone());
    if !cfg.scenarios.contains_key(&name) {
        return (StatusCode::NOT_FOUND, format!("unknown scenario {name}")).into_response();
    }
    let seed = q.seed.unwrap_or(cfg.seed);
    ws.on_upgrade(move |socket| ws_session(socket, cfg, name, seed))
}

async fn send_ws(socket: &mut WebSocket, msgs: &[ProtocolMessage]) -> bool {
    for m in msgs {
        if socket.send(Message::Text(format!("{}\n", m.to_line()).into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn ws_session(mut socket: WebSocket, cfg: Arc<ServerConfig>, name: String, seed: u64) {
    let scenario = &cfg.scenarios[&name];
    let red = match (cfg.red)(seed) {
        Ok(r) => r,
        Err(e) => {
            send_ws(&mut socket, &[ProtocolMessage::error("internal", e.to_string())]).await;
            return;
        }
    };
    let mut session = Session::new(scenario, red, seed);
    let mut step = session.start();
    loop {
        match step {
            Ok(msgs) => {
                if !send_ws(&mut socket, &msgs).await || session.is_finished() {
                    break;
                }
            }
            Err(e) => {
                log::error!("session on {name} failed: {e}");
                send_ws(&mut socket, &[ProtocolMessage::error("internal", e.to_string())]).await;
                break;
            }
        }
        step = match socket.recv().await {
            Some(Ok(Message::Text(t))) => session.handle(t.as_str()),
            Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            Some(Ok(_)) => Ok(Vec::new()),
        };
    }
    let log = session.into_log();
    if let Some(dir) = &cfg.log_dir {
        let n = cfg.sessions.fetch_add(1, Ordering::Relaxed);
        let path = dir.join(format!("session-{name}-{seed}-{n}.ndjson"));
        let written = std::fs::File::create(&path)
            .map_err(Error::from)
            .and_then(|f| log.write_ndjson(std::io::BufWriter::new(f)));
        if let Err(e) = written {
            log::error!("cannot write session log {}: {e}", path.display());
        }
    }
}
