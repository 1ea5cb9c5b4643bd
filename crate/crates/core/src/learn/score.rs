//! Supervised score predictors: regress an episode's final score from the
//! global abstraction of each logged state.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Approximator, ForwardCache, Gradients, Optimizer, OptimizerKind};
use crate::engine::{EpisodeLog, GameState};
use crate::error::{Error, Result};
use crate::observation::{encode_global, GlobalAbstraction};

/// Predicted final score (blue-positive) for a state, assuming blue keeps
/// playing `behavior` against `adversary`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorePredictor {
    pub behavior: String,
    pub adversary: String,
    pub grid: u32,
    pub net: Approximator,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl ScorePredictor {
    /// A predictor that always answers `value`.
    pub fn constant(behavior: &str, adversary: &str, grid: u32, value: f64) -> Self {
        let n_in = 4 * (grid * grid) as usize + 1;
        Self {
            behavior: behavior.into(),
            adversary: adversary.into(),
            grid,
            net: Approximator::zeros(&[n_in, 1]).expect("valid sizes"),
            target_mean: value,
            target_scale: 1.0,
        }
    }

    pub fn predict(&self, g: &GlobalAbstraction) -> Result<f64> {
        let out = self.net.forward(&g.values)?[0];
        Ok(self.target_mean + self.target_scale * out)
    }

    pub fn predict_state(&self, s: &GameState) -> Result<f64> {
        self.predict(&encode_global(s, self.grid))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub grid: u32,
    pub holdout_fraction: f64,
    pub min_episodes: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            epochs: 20,
            batch_size: 64,
            seed: 0,
            grid: 4,
            holdout_fraction: 0.2,
            min_episodes: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub epoch: usize,
    pub train_mse: f64,
    pub heldout_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub train_samples: usize,
    pub heldout_samples: usize,
    pub heldout_mse: f64,
    /// Held-out MSE of always predicting the training-set mean.
    pub baseline_mse: f64,
    pub curve: Vec<MsePoint>,
}

pub struct Sample {
    pub episode: usize,
    pub features: Vec<f64>,
    pub target: f64,
}

/// One sample per logged action-selection step. Truncated logs are skipped.
pub fn score_dataset(logs: &[EpisodeLog], grid: u32) -> Vec<Sample> {
    let mut out = Vec::new();
    for (i, log) in logs.iter().enumerate().filter(|(_, l)| !l.truncated) {
        let base = GameState::new(&log.header.scenario, log.header.seed);
        for rec in &log.records {
            let s = base.with_snapshot(&rec.state);
            out.push(Sample { episode: i, features: encode_global(&s, grid).values, target: log.final_score as f64 });
        }
    }
    out
}

fn mse(net: &Approximator, samples: &[&Sample], mean: f64, scale: f64) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for s in samples {
        let p = mean + scale * net.forward(&s.features)?[0];
        acc += (p - s.target).powi(2);
    }
    Ok(acc / samples.len() as f64)
}

pub fn train_score_model(logs: &[EpisodeLog], cfg: &ScoreConfig) -> Result<(ScorePredictor, ScoreReport)> {
    let complete = logs.iter().filter(|l| !l.truncated).count();
    if complete < cfg.min_episodes {
        return Err(Error::InsufficientData(format!(
            "{complete} complete episodes, need at least {}",
            cfg.min_episodes
        )));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) || cfg.batch_size == 0 || cfg.grid == 0 {
        return Err(Error::InvalidArgument("bad score-model config".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = score_dataset(logs, cfg.grid);

    let mut episodes: Vec<usize> = logs.iter().enumerate().filter(|(_, l)| !l.truncated).map(|(i, _)| i).collect();
    episodes.shuffle(&mut rng);
    let n_hold = ((episodes.len() as f64) * cfg.holdout_fraction).round() as usize;
    let held: std::collections::HashSet<usize> = episodes[..n_hold].iter().copied().collect();
    let (heldout, mut train): (Vec<&Sample>, Vec<&Sample>) = data.iter().partition(|s| held.contains(&s.episode));
    if train.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }

    let mean = train.iter().map(|s| s.target).sum::<f64>() / train.len() as f64;
    let var = train.iter().map(|s| (s.target - mean).powi(2)).sum::<f64>() / train.len() as f64;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };

    let mut sizes = vec![4 * (cfg.grid * cfg.grid) as usize + 1];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut net = Approximator::random(&sizes, &mut rng)?;
    // Start from the mean predictor.
    net.layers.last_mut().expect("output layer").weights.iter_mut().for_each(|w| *w *= 0.01);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, &net);
    let mut cache = ForwardCache::default();
    let mut grads = Gradients::zeros_like(&net);

    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        for batch in train.chunks(cfg.batch_size) {
            grads.clear();
            let n = batch.len() as f64;
            for s in batch {
                net.forward_cached(&s.features, &mut cache)?;
                let err = cache.output()[0] - (s.target - mean) / scale;
                net.accumulate_gradient(&cache, &[2.0 * err / n], &mut grads)?;
            }
            opt.step(&mut net, &grads);
        }
        if !net.is_finite() {
            return Err(Error::Divergence(format!("non-finite parameters in epoch {epoch}")));
        }
        curve.push(MsePoint {
            epoch: epoch + 1,
            train_mse: mse(&net, &train, mean, scale)?,
            heldout_mse: mse(&net, &heldout, mean, scale)?,
        });
    }
    let baseline_mse = if heldout.is_empty() {
        0.0
    } else {
        heldout.iter().map(|s| (s.target - mean).powi(2)).sum::<f64>() / heldout.len() as f64
    };
    let heldout_mse = mse(&net, &heldout, mean, scale)?;
    let first = &logs[episodes[0]].header;
    let predictor = ScorePredictor {
        behavior: first.blue.clone(),
        adversary: first.red.clone(),
        grid: cfg.grid,
        net,
        target_mean: mean,
        target_scale: scale,
    };
    let report =
        ScoreReport { train_samples: train.len(), heldout_samples: heldout.len(), heldout_mse, baseline_mse, curve };
    Ok((predictor, report))
}
