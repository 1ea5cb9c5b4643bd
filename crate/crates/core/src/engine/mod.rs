//! Deterministic turn-based combat simulation.
//!
//! A game alternates blue and red phases. Within a phase each living unit of
//! the phase faction acts once, in ascending id order; every such prompt is an
//! action-selection step. When red's phase ends, occupied objectives score
//! (blue-positive) and the turn counter advances.

mod episode;
mod scenario;
mod state;
mod types;

pub use episode::{
    derive_seed, run_episode, DecisionTrace, EpisodeHeader, EpisodeLog, StepRecord, BLUE_STREAM, RED_STREAM,
};
pub use scenario::{CombatConfig, ObjectiveSpec, Scenario, UnitSpec};
pub use state::{load_scenario, Board, GameState, Snapshot, StepOutcome};
pub use types::{Action, Event, Faction, Objective, Terrain, Unit, UnitId, UnitKind, NUM_ACTIONS};
