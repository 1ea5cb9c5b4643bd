//! Episode loop, replayable logs, and their newline-delimited JSON form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::state::{GameState, Snapshot};
use super::types::{Action, Event, Faction, UnitId};
use crate::behaviors::BehaviorModel;
use crate::error::{Error, Result};
use crate::hierarchy::{Assignment, Subgoal};

/// Per-step explanation emitted by composite policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionTrace {
    MultiModel { scores: Vec<f64>, chosen: usize, model: String },
    Hierarchy { manager: usize, assignment: Assignment, subgoal: Subgoal, issued_turn: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub scenario: Scenario,
    pub seed: u64,
    pub blue: String,
    pub red: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub turn: u32,
    pub unit: UnitId,
    pub faction: Faction,
    /// State before the action.
    pub state: Snapshot,
    pub action: Action,
    /// Blue-positive score delta.
    pub reward: i64,
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<DecisionTrace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub records: Vec<StepRecord>,
    pub final_score: i64,
    /// Set when the episode stopped before reaching a terminal state.
    pub truncated: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LogLine {
    Header(EpisodeHeader),
    Step(StepRecord),
    End { final_score: i64, truncated: bool },
}

impl EpisodeLog {
    pub fn new(header: EpisodeHeader) -> EpisodeLog {
        EpisodeLog { header, records: Vec::new(), final_score: 0, truncated: false }
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &LogLine::Header(self.header.clone()))?;
        w.write_all(b"\n")?;
        for rec in &self.records {
            serde_json::to_writer(&mut w, &LogLine::Step(rec.clone()))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &LogLine::End { final_score: self.final_score, truncated: self.truncated })?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Reads one episode. A log without an end record is marked truncated.
    pub fn read_ndjson<R: BufRead>(r: R) -> Result<EpisodeLog> {
        let mut log: Option<EpisodeLog> = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(&line)? {
                LogLine::Header(h) => {
                    if log.is_some() {
                        return Err(Error::Format("second header in one episode log".into()));
                    }
                    log = Some(EpisodeLog::new(h));
                }
                LogLine::Step(rec) => {
                    log.as_mut().ok_or_else(|| Error::Format("step before header".into()))?.records.push(rec)
                }
                LogLine::End { final_score, truncated } => {
                    let l = log.as_mut().ok_or_else(|| Error::Format("end before header".into()))?;
                    l.final_score = final_score;
                    l.truncated = truncated;
                    return Ok(log.expect("checked"));
                }
            }
        }
        let mut log = log.ok_or_else(|| Error::Format("empty episode log".into()))?;
        log.truncated = true;
        log.final_score = log.records.iter().map(|r| r.reward).sum();
        Ok(log)
    }

    pub fn from_ndjson(s: &str) -> Result<EpisodeLog> {
        EpisodeLog::read_ndjson(s.as_bytes())
    }

    /// Re-executes the logged actions from scenario and seed, checking every
    /// snapshot, reward, and the final score.
    pub fn replay(&self) -> Result<GameState> {
        let mut state = GameState::new(&self.header.scenario, self.header.seed);
        for (i, rec) in self.records.iter().enumerate() {
            let mismatch = |what: &str| Error::Format(format!("replay diverged at record {i}: {what}"));
            if state.snapshot() != rec.state {
                return Err(mismatch("snapshot"));
            }
            if state.unit_on_move() != Some(rec.unit) {
                return Err(mismatch("unit on move"));
            }
            let out = state.apply(rec.unit, rec.action)?;
            if out.reward != rec.reward || out.events != rec.events {
                return Err(mismatch("reward/events"));
            }
        }
        if !self.truncated && (state.unit_on_move().is_some() || state.score != self.final_score) {
            return Err(Error::Format("replay did not end at the logged terminal score".into()));
        }
        Ok(state)
    }
}

/// Independent per-stream seed from an episode seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const BLUE_STREAM: u64 = 1;
pub const RED_STREAM: u64 = 2;

/// Plays one episode to terminal.
pub fn run_episode(
    scenario: &Scenario,
    blue: &mut dyn BehaviorModel,
    red: &mut dyn BehaviorModel,
    seed: u64,
) -> Result<EpisodeLog> {
    blue.begin_episode(derive_seed(seed, BLUE_STREAM));
    red.begin_episode(derive_seed(seed, RED_STREAM));
    let mut log = EpisodeLog::new(EpisodeHeader {
        scenario: scenario.clone(),
        seed,
        blue: blue.name().to_string(),
        red: red.name().to_string(),
    });
    let mut state = GameState::new(scenario, seed);
    while let Some(unit) = state.unit_on_move() {
        let faction = state.phase;
        let policy: &mut dyn BehaviorModel = match faction {
            Faction::Blue => &mut *blue,
            Faction::Red => &mut *red,
        };
        let action = policy.act(&state, unit)?;
        let trace = policy.take_trace();
        let pre = state.snapshot();
        let turn = state.turn;
        let out = state.apply(unit, action).map_err(|e| match e {
            Error::IllegalAction { .. } => Error::ModelFault {
                model: policy.name().to_string(),
                msg: format!("emitted illegal action {action} for unit {unit} at turn {turn}"),
            },
            other => other,
        })?;
        log.records.push(StepRecord {
            turn,
            unit,
            faction,
            state: pre,
            action,
            reward: out.reward,
            events: out.events,
            trace,
        });
    }
    log.final_score = state.score;
    Ok(log)
}
