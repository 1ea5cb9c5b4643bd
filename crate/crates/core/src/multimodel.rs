//! Behavior arbitration by score prediction.
//!
//! A repository pairs behavior models with score predictors. At every
//! action-selection step each predictor scores the global abstraction and the
//! evaluation rule picks the pair whose behavior acts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::behaviors::BehaviorModel;
use crate::engine::{Action, DecisionTrace, Faction, GameState, UnitId};
use crate::error::{Error, Result};
use crate::learn::{ModelFile, ScorePredictor};
use crate::observation::{encode_global, GlobalAbstraction};

/// Argmax for blue, argmin for red; ties go to the lowest index.
pub fn select(faction: Faction, scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in scores.iter().enumerate().skip(1) {
        let better = match faction {
            Faction::Blue => x > scores[best],
            Faction::Red => x < scores[best],
        };
        if better {
            best = i;
        }
    }
    best
}

/// Evaluation rule hook.
pub trait SelectionRule: Send {
    fn select(&self, faction: Faction, scores: &[f64]) -> usize;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Extremum;

impl SelectionRule for Extremum {
    fn select(&self, faction: Faction, scores: &[f64]) -> usize {
        select(faction, scores)
    }
}

pub struct ModelPair {
    pub behavior: Box<dyn BehaviorModel>,
    pub predictor: ScorePredictor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub turn: u32,
    pub unit: UnitId,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

pub struct MultiModel {
    name: String,
    faction: Faction,
    repository: Vec<ModelPair>,
    rule: Box<dyn SelectionRule>,
    records: Vec<DecisionRecord>,
    trace: Option<DecisionTrace>,
}

impl MultiModel {
    pub fn new(faction: Faction, repository: Vec<ModelPair>) -> Result<Self> {
        if repository.is_empty() {
            return Err(Error::InvalidArgument("multi-model repository is empty".into()));
        }
        Ok(Self {
            name: "multimodel".into(),
            faction,
            repository,
            rule: Box::new(Extremum),
            records: Vec::new(),
            trace: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_rule(mut self, rule: Box<dyn SelectionRule>) -> Self {
        self.rule = rule;
        self
    }

    pub fn faction(&self) -> Faction {
        self.faction
    }

    pub fn len(&self) -> usize {
        self.repository.len()
    }

    pub fn is_empty(&self) -> bool {
        self.repository.is_empty()
    }

    /// Decision records since the last `begin_episode`.
    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    /// One predicted final score per pair, in repository order.
    pub fn predict_all(&self, s: &GameState) -> Result<Vec<f64>> {
        let mut abstractions: BTreeMap<u32, GlobalAbstraction> = BTreeMap::new();
        let mut out = Vec::with_capacity(self.repository.len());
        for pair in &self.repository {
            let p = &pair.predictor;
            let g = abstractions.entry(p.grid).or_insert_with(|| encode_global(s, p.grid));
            let v = p.predict(g)?;
            if !v.is_finite() {
                return Err(Error::ModelFault {
                    model: pair.behavior.name().to_string(),
                    msg: "score predictor returned a non-finite value".into(),
                });
            }
            out.push(v);
        }
        Ok(out)
    }
}

impl BehaviorModel for MultiModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, s: &GameState, unit: UnitId) -> Result<Action> {
        match s.unit(unit) {
            Some(u) if u.faction == self.faction => {}
            Some(_) => {
                return Err(Error::InvalidArgument(format!("unit {unit} is not controlled by {}", self.faction)))
            }
            None => return Err(Error::InvalidArgument(format!("unit {unit} does not exist or is destroyed"))),
        }
        let scores = self.predict_all(s)?;
        let chosen = self.rule.select(self.faction, &scores);
        let delegate = &mut self.repository[chosen].behavior;
        let action = delegate.act(s, unit)?;
        delegate.take_trace();
        if !s.is_legal(unit, action) {
            return Err(Error::ModelFault {
                model: delegate.name().to_string(),
                msg: format!("illegal action {action} for unit {unit}"),
            });
        }
        self.trace =
            Some(DecisionTrace::MultiModel { scores: scores.clone(), chosen, model: delegate.name().to_string() });
        self.records.push(DecisionRecord { turn: s.turn, unit, scores, chosen });
        Ok(action)
    }

    fn begin_episode(&mut self, seed: u64) {
        self.records.clear();
        for pair in &mut self.repository {
            pair.behavior.begin_episode(seed);
        }
    }

    fn take_trace(&mut self) -> Option<DecisionTrace> {
        self.trace.take()
    }

    fn is_deterministic(&self) -> bool {
        self.repository.iter().all(|p| p.behavior.is_deterministic())
    }
}

/// One repository entry of a multi-model manifest file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Scripted policy name, `hierarchy`, or a model file.
    pub behavior: String,
    /// Score-predictor model file.
    pub predictor: String,
    #[serde(default)]
    pub adversary: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiModelManifest {
    #[serde(default)]
    pub name: Option<String>,
    pub models: Vec<ManifestEntry>,
}

impl MultiModelManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let doc = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&doc)?;
        if m.models.is_empty() {
            return Err(Error::Format(format!("manifest {} lists no models", path.display())));
        }
        Ok(m)
    }
}

/// Relative file references in a manifest resolve against its directory.
pub fn resolve_relative(base: &Path, reference: &str) -> PathBuf {
    let p = Path::new(reference);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Builds a multi-model from a manifest file. `resolve` turns a behavior
/// reference (already joined to the manifest directory if it names a file)
/// into a model.
pub fn load_multimodel(
    path: impl AsRef<Path>,
    faction: Faction,
    resolve: &mut dyn FnMut(&str) -> Result<Box<dyn BehaviorModel>>,
) -> Result<MultiModel> {
    let path = path.as_ref();
    let manifest = MultiModelManifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut repository = Vec::with_capacity(manifest.models.len());
    for entry in &manifest.models {
        let behavior_ref = if entry.behavior.ends_with(".json") {
            resolve_relative(base, &entry.behavior).to_string_lossy().into_owned()
        } else {
            entry.behavior.clone()
        };
        let behavior = resolve(&behavior_ref)?;
        let predictor = ModelFile::load(resolve_relative(base, &entry.predictor))?.into_score()?;
        if let Some(adv) = &entry.adversary {
            if adv != &predictor.adversary {
                log::warn!(
                    "predictor {} was trained against {}, manifest says {adv}",
                    entry.predictor,
                    predictor.adversary
                );
            }
        }
        repository.push(ModelPair { behavior, predictor });
    }
    let name = manifest.name.unwrap_or_else(|| "multimodel".into());
    Ok(MultiModel::new(faction, repository)?.with_name(name))
}
