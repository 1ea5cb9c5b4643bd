//! Deep Q-learning with uniform experience replay and a periodically synced
//! target network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{LearnerEnv, RewardMode};
use super::mlp::{Approximator, ForwardCache, Gradients, Optimizer, OptimizerKind};
use super::replay::ReplayBuffer;
use super::tabular::linear_epsilon;
use crate::behaviors::BehaviorModel;
use crate::engine::{derive_seed, Action, Faction, GameState, Scenario, UnitId, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::observation::{EncoderParams, LocalEncoder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub target_sync: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub episodes: u64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Learner steps before the first update.
    pub warmup: usize,
    /// Learner steps between updates.
    pub train_every: u64,
    /// Multiplier applied to rewards before they enter the regression target.
    pub reward_scale: f64,
    pub reward: RewardMode,
    pub learner: Faction,
    pub encoder: EncoderParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-3,
            optimizer: OptimizerKind::Sgd,
            batch_size: 64,
            target_sync: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 50_000,
            episodes: 20_000,
            seed: 0,
            hidden: vec![128, 128],
            replay_capacity: 50_000,
            warmup: 1_000,
            train_every: 1,
            reward_scale: 0.01,
            reward: RewardMode::Score,
            learner: Faction::Blue,
            encoder: EncoderParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.target_sync == 0 || self.replay_capacity == 0 || self.train_every == 0 {
            return bad("batch size, target sync, replay capacity, train_every must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        self.encoder.validate()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.encoder.local_len()];
        s.extend(&self.hidden);
        s.push(NUM_ACTIONS);
        s
    }
}

/// Legal-action set as a bitmask over action indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ActionMask(pub u16);

impl ActionMask {
    pub fn from_actions(actions: &[Action]) -> Self {
        Self(actions.iter().fold(0u16, |m, a| m | (1 << a.index())))
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Legal actions in `next_obs`; the bootstrap max ranges over these.
    pub next_legal: ActionMask,
    pub terminal: bool,
}

fn masked_max(q: &[f64], mask: ActionMask) -> f64 {
    let m = q.iter().enumerate().filter(|(i, _)| mask.contains(*i)).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        m
    } else {
        q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Regression target `r` (terminal) or `r + gamma * max_a' target(next)[a']`.
pub fn td_target(target: &Approximator, t: &Transition, gamma: f64) -> Result<f64> {
    if t.terminal {
        return Ok(t.reward);
    }
    let q = target.forward(&t.next_obs)?;
    Ok(t.reward + gamma * masked_max(&q, t.next_legal))
}

/// Scratch space reused across updates.
pub struct UpdateScratch {
    cache: ForwardCache,
    grads: Gradients,
}

impl UpdateScratch {
    pub fn new(f: &Approximator) -> Self {
        Self { cache: ForwardCache::default(), grads: Gradients::zeros_like(f) }
    }
}

/// One gradient step on the batch mean squared TD error, where only the
/// taken action's output contributes. Returns the pre-update loss.
pub fn q_update(
    online: &mut Approximator,
    target: &Approximator,
    batch: &[&Transition],
    gamma: f64,
    opt: &mut Optimizer,
    scratch: &mut UpdateScratch,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("q_update needs a non-empty batch".into()));
    }
    scratch.grads.clear();
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut upstream = vec![0.0; online.output_len()];
    for t in batch {
        let y = td_target(target, t, gamma)?;
        online.forward_cached(&t.obs, &mut scratch.cache)?;
        let err = scratch.cache.output()[t.action] - y;
        loss += err * err / n;
        upstream.iter_mut().for_each(|u| *u = 0.0);
        upstream[t.action] = 2.0 * err / n;
        online.accumulate_gradient(&scratch.cache, &upstream, &mut scratch.grads)?;
    }
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite TD loss {loss}")));
    }
    opt.step(online, &scratch.grads);
    Ok(loss)
}

/// Convenience form of [`q_update`] with plain SGD.
pub fn q_update_sgd(
    online: &mut Approximator,
    target: &Approximator,
    batch: &[&Transition],
    gamma: f64,
    lr: f64,
) -> Result<f64> {
    let mut opt = Optimizer::new(OptimizerKind::Sgd, lr, online);
    let mut scratch = UpdateScratch::new(online);
    q_update(online, target, batch, gamma, &mut opt, &mut scratch)
}

/// Greedy policy over an online Q-network.
pub struct DqnPolicy {
    pub net: Approximator,
    pub encoder: EncoderParams,
    local: LocalEncoder,
    name: String,
}

impl DqnPolicy {
    pub fn new(net: Approximator, encoder: EncoderParams) -> Result<Self> {
        encoder.validate()?;
        if net.input_len() != encoder.local_len() || net.output_len() != NUM_ACTIONS {
            return Err(Error::Shape { expected: encoder.local_len(), got: net.input_len() });
        }
        Ok(Self { local: LocalEncoder::new(encoder.radius, encoder.horizon)?, net, encoder, name: "dqn".into() })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn q_values(&self, s: &GameState, unit: UnitId) -> Result<Vec<f64>> {
        self.net.forward(&self.local.encode(s, unit, None)?.values)
    }
}

/// Highest-valued legal action; ties go to the lowest index.
fn greedy_masked(q: &[f64], legal: &[Action]) -> Action {
    let mut best = legal[0];
    for &a in legal {
        let (qa, qb) = (q[a.index()], q[best.index()]);
        if qa > qb || (qa == qb && a.index() < best.index()) {
            best = a;
        }
    }
    best
}

impl BehaviorModel for DqnPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, s: &GameState, unit: UnitId) -> Result<Action> {
        let q = self.q_values(s, unit)?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelFault { model: self.name.clone(), msg: "non-finite Q-value".into() });
        }
        Ok(greedy_masked(&q, &s.legal_actions(unit)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Index of the last episode in the window, counting from 1.
    pub episode_window: u64,
    pub mean_score: f64,
}

pub struct DqnOutcome {
    pub policy: DqnPolicy,
    pub curve: Vec<CurvePoint>,
    pub updates: u64,
}

pub const CURVE_WINDOW: u64 = 100;

pub fn train_dqn(scenario: &Scenario, adversary: &mut dyn BehaviorModel, cfg: &TrainConfig) -> Result<DqnOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut online = Approximator::random(&cfg.layer_sizes(), &mut rng)?;
    let mut target = online.clone();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, &online);
    let mut scratch = UpdateScratch::new(&online);
    let encoder = LocalEncoder::new(cfg.encoder.radius, cfg.encoder.horizon)?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut env = LearnerEnv::new(scenario, cfg.learner, adversary, cfg.reward);

    let mut curve = Vec::new();
    let mut window_sum = 0.0;
    let mut steps = 0u64;
    let mut updates = 0u64;

    for episode in 0..cfg.episodes {
        let mut unit = env.reset(derive_seed(cfg.seed, episode))?;
        while let Some(u) = unit {
            let obs = encoder.encode(env.state(), u, None)?.values;
            let legal = env.state().legal_actions(u)?;
            let eps = linear_epsilon(cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_decay_steps, steps);
            let action = if rng.random::<f64>() < eps {
                legal[rng.random_range(0..legal.len())]
            } else {
                greedy_masked(&online.forward(&obs)?, &legal)
            };
            let (reward, next) = env.step(u, action)?;
            let (next_obs, next_legal) = match next {
                Some(n) => (
                    encoder.encode(env.state(), n, None)?.values,
                    ActionMask::from_actions(&env.state().legal_actions(n)?),
                ),
                None => (vec![0.0; obs.len()], ActionMask::default()),
            };
            replay.push(Transition {
                obs,
                action: action.index(),
                reward: reward * cfg.reward_scale,
                next_obs,
                next_legal,
                terminal: next.is_none(),
            });
            steps += 1;

            if replay.len() >= cfg.warmup.max(1) && steps.is_multiple_of(cfg.train_every) {
                let batch = replay.sample(&mut rng, cfg.batch_size);
                q_update(&mut online, &target, &batch, cfg.gamma, &mut opt, &mut scratch)?;
                updates += 1;
                if updates.is_multiple_of(cfg.target_sync) {
                    target = online.clone();
                }
            }
            unit = next;
        }
        if !online.is_finite() {
            return Err(Error::Divergence(format!("non-finite parameters after episode {episode}")));
        }
        window_sum += (env.state().score * cfg.learner.sign()) as f64;
        if (episode + 1) % CURVE_WINDOW == 0 {
            curve.push(CurvePoint { episode_window: episode + 1, mean_score: window_sum / CURVE_WINDOW as f64 });
            window_sum = 0.0;
        }
    }
    Ok(DqnOutcome { policy: DqnPolicy::new(online, cfg.encoder)?, curve, updates })
}
