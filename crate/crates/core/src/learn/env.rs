//! Single-agent view of a game: the learner's faction acts, a fixed adversary
//! model plays the other side inside the environment.

use serde::{Deserialize, Serialize};

use crate::behaviors::BehaviorModel;
use crate::engine::{derive_seed, Action, Faction, GameState, Scenario, UnitId, BLUE_STREAM, RED_STREAM};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Score delta, signed so the learner maximizes it.
    #[default]
    Score,
    /// +1 per enemy unit destroyed, -1 per own unit lost.
    KillOnly,
}

pub struct LearnerEnv<'a> {
    scenario: &'a Scenario,
    learner: Faction,
    adversary: &'a mut dyn BehaviorModel,
    mode: RewardMode,
    state: GameState,
}

impl<'a> LearnerEnv<'a> {
    pub fn new(
        scenario: &'a Scenario,
        learner: Faction,
        adversary: &'a mut dyn BehaviorModel,
        mode: RewardMode,
    ) -> Self {
        let state = GameState::new(scenario, 0);
        Self { scenario, learner, adversary, mode, state }
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn learner(&self) -> Faction {
        self.learner
    }

    /// Starts a fresh episode; returns the first learner unit on move.
    pub fn reset(&mut self, seed: u64) -> Result<Option<UnitId>> {
        self.state = GameState::new(self.scenario, seed);
        let stream = if self.learner == Faction::Blue { RED_STREAM } else { BLUE_STREAM };
        self.adversary.begin_episode(derive_seed(seed, stream));
        Ok(self.advance()?.1)
    }

    /// Applies the learner's action, then plays the adversary until the
    /// learner is on move again. Returns the learner-signed reward accrued in
    /// between and the next learner unit (`None` at terminal).
    pub fn step(&mut self, unit: UnitId, action: Action) -> Result<(f64, Option<UnitId>)> {
        let r0 = self.apply(unit, action)?;
        let (r1, next) = self.advance()?;
        Ok((r0 + r1, next))
    }

    fn apply(&mut self, unit: UnitId, action: Action) -> Result<f64> {
        let before = self.unit_counts();
        let out = self.state.apply(unit, action)?;
        Ok(match self.mode {
            RewardMode::Score => (out.reward * self.learner.sign()) as f64,
            RewardMode::KillOnly => {
                let after = self.unit_counts();
                ((before.1 - after.1) as f64) - ((before.0 - after.0) as f64)
            }
        })
    }

    /// (own units, enemy units)
    fn unit_counts(&self) -> (i64, i64) {
        let own = self.state.faction_units(self.learner).count() as i64;
        (own, self.state.units.len() as i64 - own)
    }

    fn advance(&mut self) -> Result<(f64, Option<UnitId>)> {
        let mut reward = 0.0;
        while let Some(unit) = self.state.unit_on_move() {
            if self.state.phase == self.learner {
                return Ok((reward, Some(unit)));
            }
            let a = self.adversary.act(&self.state, unit)?;
            reward += self
                .apply(unit, a)
                .map_err(|e| Error::ModelFault { model: self.adversary.name().to_string(), msg: e.to_string() })?;
        }
        Ok((reward, None))
    }
}
