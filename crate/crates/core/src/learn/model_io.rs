//! Model files: a JSON header (schema version, kind, layer sizes, encoder
//! parameters) followed by the flat parameter array. Floats are written with
//! round-trip precision, so `load(save(m)) == m` bit for bit.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dqn::{CurvePoint, DqnPolicy};
use super::mlp::Approximator;
use super::score::{MsePoint, ScorePredictor};
use crate::error::{Error, Result};
use crate::observation::EncoderParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Dqn,
    Score { behavior: String, adversary: String, target_mean: f64, target_scale: f64 },
    Manager { templates: Vec<crate::hierarchy::OptionTemplate>, horizon: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model: ModelKind,
    pub layer_sizes: Vec<usize>,
    pub encoder: EncoderParams,
    pub params: Vec<f64>,
}

impl ModelFile {
    pub fn new(model: ModelKind, net: &Approximator, encoder: EncoderParams) -> Self {
        Self { schema_version: SCHEMA_VERSION, model, layer_sizes: net.sizes(), encoder, params: net.params() }
    }

    pub fn network(&self) -> Result<Approximator> {
        Approximator::from_params(&self.layer_sizes, &self.params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(doc)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported model schema version {}", f.schema_version)));
        }
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let doc = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("cannot read model {}: {e}", path.display())))?;
        Self::from_json(&doc)
    }

    pub fn from_dqn(p: &DqnPolicy) -> Self {
        Self::new(ModelKind::Dqn, &p.net, p.encoder)
    }

    pub fn into_dqn(self) -> Result<DqnPolicy> {
        match self.model {
            ModelKind::Dqn => DqnPolicy::new(self.network()?, self.encoder),
            _ => Err(Error::Format("not a dqn model file".into())),
        }
    }

    pub fn from_score(p: &ScorePredictor) -> Self {
        let encoder = EncoderParams { grid: p.grid, ..EncoderParams::default() };
        Self::new(
            ModelKind::Score {
                behavior: p.behavior.clone(),
                adversary: p.adversary.clone(),
                target_mean: p.target_mean,
                target_scale: p.target_scale,
            },
            &p.net,
            encoder,
        )
    }

    pub fn into_score(self) -> Result<ScorePredictor> {
        let net = self.network()?;
        match self.model {
            ModelKind::Score { behavior, adversary, target_mean, target_scale } => {
                let expected = 4 * (self.encoder.grid * self.encoder.grid) as usize + 1;
                if net.input_len() != expected || net.output_len() != 1 {
                    return Err(Error::Shape { expected, got: net.input_len() });
                }
                Ok(ScorePredictor { behavior, adversary, grid: self.encoder.grid, net, target_mean, target_scale })
            }
            _ => Err(Error::Format("not a score model file".into())),
        }
    }
}

pub fn write_score_curve(path: impl AsRef<Path>, curve: &[CurvePoint]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "episode_window,mean_score")?;
    for p in curve {
        writeln!(f, "{},{}", p.episode_window, p.mean_score)?;
    }
    Ok(())
}

pub fn write_mse_curve(path: impl AsRef<Path>, curve: &[MsePoint]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,train_mse,heldout_mse")?;
    for p in curve {
        writeln!(f, "{},{},{}", p.epoch, p.train_mse, p.heldout_mse)?;
    }
    Ok(())
}
