//! Tabular one-step Q-learning for tiny, enumerable scenarios.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{LearnerEnv, RewardMode};
use crate::behaviors::BehaviorModel;
use crate::engine::{derive_seed, Action, Faction, GameState, Scenario, UnitId, NUM_ACTIONS};
use crate::error::{Error, Result};

/// Canonical key: turn, phase, then `(id, q, r, strength, acted)` per living unit.
pub type StateKey = Vec<i32>;

pub fn state_key(s: &GameState) -> StateKey {
    let mut key = Vec::with_capacity(2 + 5 * s.units.len());
    key.push(s.turn as i32);
    key.push(matches!(s.phase, Faction::Red) as i32);
    for u in &s.units {
        key.extend([u.id as i32, u.pos.q, u.pos.r, u.strength as i32, u.acted as i32]);
    }
    key
}

/// Missing entries read as zero.
#[derive(Clone, Debug, Default)]
pub struct QTable {
    values: HashMap<StateKey, [f64; NUM_ACTIONS]>,
}

impl QTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, key: &StateKey, a: Action) -> f64 {
        self.values.get(key).map_or(0.0, |row| row[a.index()])
    }

    pub fn set(&mut self, key: &StateKey, a: Action, v: f64) {
        self.values.entry(key.clone()).or_insert([0.0; NUM_ACTIONS])[a.index()] = v;
    }

    /// Best legal action; ties go to the lowest action index.
    pub fn greedy(&self, key: &StateKey, legal: &[Action]) -> Action {
        let mut sorted = legal.to_vec();
        sorted.sort_by_key(|a| a.index());
        let mut best = sorted[0];
        for &a in &sorted[1..] {
            if self.get(key, a) > self.get(key, best) {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, key: &StateKey, legal: &[Action]) -> f64 {
        legal.iter().map(|&a| self.get(key, a)).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    pub steps: u64,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub seed: u64,
    pub max_keys: usize,
    pub reward: RewardMode,
    pub learner: Faction,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            alpha: 0.5,
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_steps: 25_000,
            seed: 0,
            max_keys: 1_000_000,
            reward: RewardMode::Score,
            learner: Faction::Blue,
        }
    }
}

pub(crate) fn linear_epsilon(start: f64, end: f64, decay_steps: u64, step: u64) -> f64 {
    if decay_steps == 0 || step >= decay_steps {
        end
    } else {
        start + (end - start) * step as f64 / decay_steps as f64
    }
}

pub struct TabularOutcome {
    pub table: QTable,
    /// Every state key the learner acted in during training.
    pub visited: BTreeSet<StateKey>,
    pub episodes: u64,
}

impl TabularOutcome {
    pub fn policy(&self) -> TabularPolicy {
        TabularPolicy { table: self.table.clone() }
    }
}

pub fn tabular_q_learn(
    scenario: &Scenario,
    adversary: &mut dyn BehaviorModel,
    cfg: &TabularConfig,
) -> Result<TabularOutcome> {
    if !(0.0..1.0).contains(&cfg.gamma) || !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(Error::InvalidArgument("need 0 <= gamma < 1 and 0 < alpha <= 1".into()));
    }
    // Positions and turn/phase alone bound the key count from below.
    let cells = (scenario.width * scenario.height) as f64;
    let lower_bound = cells.powi(scenario.units.len() as i32) * scenario.max_turns as f64 * 2.0;
    if lower_bound > cfg.max_keys as f64 {
        return Err(Error::StateSpaceOverflow(format!(
            "{} units on {} hexes over {} turns gives at least {lower_bound:.0} keys (limit {})",
            scenario.units.len(),
            cells,
            scenario.max_turns,
            cfg.max_keys
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut env = LearnerEnv::new(scenario, cfg.learner, adversary, cfg.reward);
    let mut table = QTable::default();
    let mut visited = BTreeSet::new();
    let mut steps = 0u64;
    let mut episodes = 0u64;
    while steps < cfg.steps {
        let mut unit = env.reset(derive_seed(cfg.seed, episodes))?;
        episodes += 1;
        while let Some(u) = unit {
            if steps >= cfg.steps {
                break;
            }
            let key = state_key(env.state());
            let legal = env.state().legal_actions(u)?;
            let eps = linear_epsilon(cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_decay_steps, steps);
            let a = if rng.random::<f64>() < eps {
                legal[rng.random_range(0..legal.len())]
            } else {
                table.greedy(&key, &legal)
            };
            let (r, next) = env.step(u, a)?;
            let bootstrap = match next {
                Some(n) => {
                    let next_legal = env.state().legal_actions(n)?;
                    cfg.gamma * table.max_value(&state_key(env.state()), &next_legal)
                }
                None => 0.0,
            };
            let q = table.get(&key, a);
            table.set(&key, a, q + cfg.alpha * (r + bootstrap - q));
            visited.insert(key);
            if table.len() > cfg.max_keys {
                return Err(Error::StateSpaceOverflow(format!("table exceeded {} keys", cfg.max_keys)));
            }
            steps += 1;
            unit = next;
        }
    }
    Ok(TabularOutcome { table, visited, episodes })
}

/// Greedy policy read from a Q-table.
pub struct TabularPolicy {
    pub table: QTable,
}

impl BehaviorModel for TabularPolicy {
    fn name(&self) -> &str {
        "tabular"
    }

    fn act(&mut self, s: &GameState, unit: UnitId) -> Result<Action> {
        Ok(self.table.greedy(&state_key(s), &s.legal_actions(unit)?))
    }
}
