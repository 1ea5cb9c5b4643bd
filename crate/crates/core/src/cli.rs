//! `hexcommand` command line: simulate, train, eval, serve.
//!
//! Exit codes: 0 success, 2 configuration error (bad flags, missing or
//! unparsable files), 3 runtime fault (model fault, divergence, I/O during a
//! run, port in use).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::behaviors::{named_policy, BehaviorModel, SCRIPTED_NAMES};
use crate::engine::{run_episode, EpisodeLog, Faction, Scenario};
use crate::error::{Error, Result};
use crate::hierarchy::{train_manager_options, GoalSeek, HierarchicalPolicy, LearnedManager, ManagerTrainConfig};
use crate::learn::{
    train_dqn, train_score_model, write_mse_curve, write_score_curve, ModelFile, ModelKind, ScoreConfig, TrainConfig,
};
use crate::multimodel::load_multimodel;
use crate::playserver::{serve, ServerConfig};

#[derive(Debug, Parser)]
#[command(name = "hexcommand", version, about = "Hex combat simulator with hierarchical learning agents")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play episodes between two policies and summarize the scores.
    Simulate(SimulateArgs),
    /// Train a DQN, score predictor, or manager policy from a TOML config.
    Train(TrainArgs),
    /// Round-robin comparison of two or more policies.
    Eval(EvalArgs),
    /// Serve human-vs-AI play over WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file (a directory of them for `serve`).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Force deterministic combat (eta = 1).
    #[arg(long)]
    pub deterministic_combat: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Blue policy: scripted name, `hierarchy`, model file, or multi-model manifest.
    #[arg(long, default_value = "random")]
    pub blue: String,
    /// Red policy, same forms as --blue.
    #[arg(long, default_value = "pass")]
    pub red: String,
    /// Seed of the first episode; episode i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub episodes: u64,
    /// Output directory for episode logs and summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// TOML training config with a `kind` of dqn, score, or manager.
    #[arg(long)]
    pub config: PathBuf,
    /// Adversary policy.
    #[arg(long, default_value = "pass")]
    pub red: String,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config episode count.
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Output directory for model.json, curve.csv, and summary.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Policy to compare (repeatable, at least two in total with --blue/--red).
    #[arg(long = "policy")]
    pub policies: Vec<String>,
    /// Extra policy to compare.
    #[arg(long)]
    pub blue: Option<String>,
    /// Extra policy to compare.
    #[arg(long)]
    pub red: Option<String>,
    /// Seed of the first episode; episode i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Episodes per ordered pair.
    #[arg(long, default_value_t = 100)]
    pub episodes: u64,
    /// Also play every episode with colors swapped and report (s1 - s2) / 2.
    #[arg(long)]
    pub swap_seats: bool,
    /// Output directory for eval.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// AI policy for red.
    #[arg(long, default_value = "greedy")]
    pub red: String,
    /// Listen port; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Game seed when the client does not pass one.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for session logs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Runtime(e) => write!(f, "runtime fault: {e:#}"),
        }
    }
}

trait Stage<T> {
    fn config(self) -> std::result::Result<T, Failure>;
    fn runtime(self) -> std::result::Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for std::result::Result<T, E> {
    fn config(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Echo of the invocation, embedded in every summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: String,
    pub policies: Vec<String>,
    pub seed: u64,
    pub episodes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub deterministic_combat: bool,
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Resolves a policy spec: scripted name, `hierarchy`, a model file (DQN or
/// manager), or a multi-model manifest.
pub fn resolve_policy(spec: &str, faction: Faction, seed: u64) -> Result<Box<dyn BehaviorModel>> {
    if let Some(p) = named_policy(spec, seed) {
        return Ok(p);
    }
    if spec == "hierarchy" {
        return Ok(Box::new(HierarchicalPolicy::scripted()));
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!(
            "unknown policy {spec:?}: expected one of {}, hierarchy, or a model/manifest file",
            SCRIPTED_NAMES.join(", ")
        )));
    }
    let doc = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&doc)?;
    if value.get("models").is_some() {
        let m = load_multimodel(path, faction, &mut |r| resolve_policy(r, faction, seed))?;
        return Ok(Box::new(m));
    }
    let file = ModelFile::from_json(&doc)?;
    match file.model {
        ModelKind::Dqn => Ok(Box::new(file.into_dqn()?.with_name(spec))),
        ModelKind::Manager { .. } => {
            let m = LearnedManager::from_model_file(file)?;
            let h = HierarchicalPolicy::scripted().with_horizon(m.horizon).with_manager_policy(Box::new(m));
            Ok(Box::new(h.with_name(spec)))
        }
        ModelKind::Score { .. } => Err(Error::InvalidArgument(format!(
            "{spec} is a score predictor; list it in a multi-model manifest instead"
        ))),
    }
}

pub fn load_scenario_file(path: &Path, deterministic: bool) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if deterministic {
        s.combat.deterministic = true;
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn score_stats(xs: &[f64]) -> ScoreStats {
    if xs.is_empty() {
        return ScoreStats { mean: 0.0, std: 0.0 };
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    ScoreStats { mean, std: var.sqrt() }
}

/// Normal-approximation 95% interval; `None` when fewer than two samples.
pub fn confidence_interval(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let s = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let half = 1.96 * s / n.sqrt();
    Some((mean - half, mean + half))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub manifest: RunManifest,
    pub episodes: u64,
    pub mean: f64,
    pub std: f64,
    pub wins: u64,
    pub draws: u64,
    pub losses: u64,
    pub final_scores: Vec<i64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<SimulateSummary> {
    let scenario = load_scenario_file(&a.scenario.scenario, a.scenario.deterministic_combat).config()?;
    let mut blue = resolve_policy(&a.blue, Faction::Blue, a.seed).config()?;
    let mut red = resolve_policy(&a.red, Faction::Red, a.seed).config()?;
    let log_dir = a.out.as_ref().map(|o| o.join("logs"));
    if let Some(d) = &log_dir {
        std::fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display())).config()?;
    }
    let mut scores = Vec::with_capacity(a.episodes as usize);
    for i in 0..a.episodes {
        let log = run_episode(&scenario, blue.as_mut(), red.as_mut(), a.seed.wrapping_add(i)).runtime()?;
        if let Some(d) = &log_dir {
            let path = d.join(format!("episode-{i:06}.ndjson"));
            let f =
                std::fs::File::create(&path).with_context(|| format!("cannot create {}", path.display())).runtime()?;
            log.write_ndjson(std::io::BufWriter::new(f)).runtime()?;
        }
        scores.push(log.final_score);
    }
    let stats = score_stats(&scores.iter().map(|&s| s as f64).collect::<Vec<_>>());
    let summary = SimulateSummary {
        manifest: RunManifest {
            command: "simulate".into(),
            scenario: path_str(&a.scenario.scenario),
            policies: vec![a.blue.clone(), a.red.clone()],
            seed: a.seed,
            episodes: a.episodes,
            config: None,
            out: a.out.as_deref().map(path_str),
            deterministic_combat: a.scenario.deterministic_combat,
        },
        episodes: a.episodes,
        mean: stats.mean,
        std: stats.std,
        wins: scores.iter().filter(|&&s| s > 0).count() as u64,
        draws: scores.iter().filter(|&&s| s == 0).count() as u64,
        losses: scores.iter().filter(|&&s| s < 0).count() as u64,
        final_scores: scores,
    };
    if let Some(out) = &a.out {
        write_json(&out.join("summary.json"), &summary).runtime()?;
    }
    Ok(summary)
}

/// Score-predictor training: logs come from a directory or are simulated.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreTrainSpec {
    /// Behavior whose outcomes are predicted.
    pub behavior: String,
    /// Adversary name recorded in the predictor; defaults to `--red`.
    pub adversary: Option<String>,
    /// Episodes to simulate when `logs` is unset.
    pub episodes: u64,
    /// Directory of `.ndjson` episode logs to train on instead.
    pub logs: Option<PathBuf>,
    #[serde(flatten)]
    pub model: ScoreConfig,
}

impl Default for ScoreTrainSpec {
    fn default() -> Self {
        Self { behavior: "greedy".into(), adversary: None, episodes: 2000, logs: None, model: ScoreConfig::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainSpec {
    Dqn(TrainConfig),
    Score(ScoreTrainSpec),
    Manager(ManagerTrainConfig),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub manifest: RunManifest,
    pub kind: String,
    pub episodes: u64,
    pub updates: u64,
    pub curve_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_mse: Option<f64>,
}

fn read_log_dir(dir: &Path) -> Result<Vec<EpisodeLog>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    paths.sort();
    paths.iter().map(|p| EpisodeLog::read_ndjson(std::io::BufReader::new(std::fs::File::open(p)?))).collect()
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<TrainSummary> {
    let scenario = load_scenario_file(&a.scenario.scenario, a.scenario.deterministic_combat).config()?;
    let doc =
        std::fs::read_to_string(&a.config).with_context(|| format!("cannot read {}", a.config.display())).config()?;
    let mut spec: TrainSpec =
        toml::from_str(&doc).with_context(|| format!("invalid training config {}", a.config.display())).config()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display())).config()?;
    let model_path = a.out.join("model.json");
    let curve_path = a.out.join("curve.csv");

    let mut manifest = RunManifest {
        command: "train".into(),
        scenario: path_str(&a.scenario.scenario),
        policies: vec![a.red.clone()],
        seed: 0,
        episodes: 0,
        config: Some(path_str(&a.config)),
        out: Some(path_str(&a.out)),
        deterministic_combat: a.scenario.deterministic_combat,
    };
    let summary = match &mut spec {
        TrainSpec::Dqn(cfg) => {
            cfg.seed = a.seed.unwrap_or(cfg.seed);
            cfg.episodes = a.episodes.unwrap_or(cfg.episodes);
            cfg.validate().config()?;
            let mut adversary = resolve_policy(&a.red, cfg.learner.opponent(), cfg.seed).config()?;
            let out = train_dqn(&scenario, adversary.as_mut(), cfg).runtime()?;
            ModelFile::from_dqn(&out.policy).save(&model_path).runtime()?;
            write_score_curve(&curve_path, &out.curve).runtime()?;
            (manifest.seed, manifest.episodes) = (cfg.seed, cfg.episodes);
            TrainSummary {
                manifest: manifest.clone(),
                kind: "dqn".into(),
                episodes: cfg.episodes,
                updates: out.updates,
                curve_rows: out.curve.len(),
                heldout_mse: None,
                baseline_mse: None,
            }
        }
        TrainSpec::Score(s) => {
            s.model.seed = a.seed.unwrap_or(s.model.seed);
            s.episodes = a.episodes.unwrap_or(s.episodes);
            let adversary_spec = s.adversary.clone().unwrap_or_else(|| a.red.clone());
            let logs = match &s.logs {
                Some(dir) => {
                    read_log_dir(dir).with_context(|| format!("cannot read logs in {}", dir.display())).config()?
                }
                None => {
                    let mut behavior = resolve_policy(&s.behavior, Faction::Blue, s.model.seed).config()?;
                    let mut adversary = resolve_policy(&adversary_spec, Faction::Red, s.model.seed).config()?;
                    (0..s.episodes)
                        .map(|i| {
                            run_episode(&scenario, behavior.as_mut(), adversary.as_mut(), s.model.seed.wrapping_add(i))
                        })
                        .collect::<Result<Vec<_>>>()
                        .runtime()?
                }
            };
            let (mut predictor, report) = train_score_model(&logs, &s.model).runtime()?;
            if s.logs.is_none() {
                predictor.behavior = s.behavior.clone();
                predictor.adversary = adversary_spec.clone();
            }
            ModelFile::from_score(&predictor).save(&model_path).runtime()?;
            write_mse_curve(&curve_path, &report.curve).runtime()?;
            manifest.policies = vec![s.behavior.clone(), adversary_spec];
            (manifest.seed, manifest.episodes) = (s.model.seed, logs.len() as u64);
            TrainSummary {
                manifest: manifest.clone(),
                kind: "score".into(),
                episodes: logs.len() as u64,
                updates: (report.train_samples as u64).div_ceil(s.model.batch_size as u64) * s.model.epochs as u64,
                curve_rows: report.curve.len(),
                heldout_mse: Some(report.heldout_mse),
                baseline_mse: Some(report.baseline_mse),
            }
        }
        TrainSpec::Manager(cfg) => {
            cfg.seed = a.seed.unwrap_or(cfg.seed);
            cfg.episodes = a.episodes.unwrap_or(cfg.episodes);
            cfg.validate().config()?;
            let mut adversary = resolve_policy(&a.red, cfg.learner.opponent(), cfg.seed).config()?;
            let out = train_manager_options(&scenario, &mut GoalSeek, adversary.as_mut(), cfg).runtime()?;
            out.policy.to_model_file().save(&model_path).runtime()?;
            write_score_curve(&curve_path, &out.curve).runtime()?;
            (manifest.seed, manifest.episodes) = (cfg.seed, cfg.episodes);
            TrainSummary {
                manifest: manifest.clone(),
                kind: "manager".into(),
                episodes: cfg.episodes,
                updates: out.updates,
                curve_rows: out.curve.len(),
                heldout_mse: None,
                baseline_mse: None,
            }
        }
    };
    write_json(&a.out.join("summary.json"), &summary).runtime()?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub blue: String,
    pub red: String,
    pub episodes: u64,
    pub mean: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Set when the interval cannot be computed (fewer than two episodes).
    pub degenerate: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub manifest: RunManifest,
    pub swap_seats: bool,
    pub rows: Vec<EvalRow>,
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<EvalSummary> {
    let scenario = load_scenario_file(&a.scenario.scenario, a.scenario.deterministic_combat).config()?;
    let mut specs = a.policies.clone();
    specs.extend(a.blue.iter().cloned());
    specs.extend(a.red.iter().cloned());
    if specs.len() < 2 {
        return Err(Failure::Config(anyhow!("eval needs at least two policies")));
    }
    if a.episodes == 0 {
        return Err(Failure::Config(anyhow!("eval needs at least one episode per pair")));
    }
    for spec in &specs {
        for f in [Faction::Blue, Faction::Red] {
            resolve_policy(spec, f, a.seed).config()?;
        }
    }
    let mut rows = Vec::new();
    for (i, bi) in specs.iter().enumerate() {
        for (j, rj) in specs.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut blue = resolve_policy(bi, Faction::Blue, a.seed).runtime()?;
            let mut red = resolve_policy(rj, Faction::Red, a.seed).runtime()?;
            let mut swapped = if a.swap_seats {
                Some((
                    resolve_policy(rj, Faction::Blue, a.seed).runtime()?,
                    resolve_policy(bi, Faction::Red, a.seed).runtime()?,
                ))
            } else {
                None
            };
            let mut values = Vec::with_capacity(a.episodes as usize);
            for e in 0..a.episodes {
                let seed = a.seed.wrapping_add(e);
                let s1 = run_episode(&scenario, blue.as_mut(), red.as_mut(), seed).runtime()?.final_score as f64;
                let v = match &mut swapped {
                    Some((b2, r2)) => {
                        let s2 = run_episode(&scenario, b2.as_mut(), r2.as_mut(), seed).runtime()?.final_score as f64;
                        (s1 - s2) / 2.0
                    }
                    None => s1,
                };
                values.push(v);
            }
            let ci = confidence_interval(&values);
            rows.push(EvalRow {
                blue: bi.clone(),
                red: rj.clone(),
                episodes: a.episodes,
                mean: score_stats(&values).mean,
                ci_low: ci.map(|c| c.0),
                ci_high: ci.map(|c| c.1),
                degenerate: ci.is_none(),
            });
        }
    }
    let summary = EvalSummary {
        manifest: RunManifest {
            command: "eval".into(),
            scenario: path_str(&a.scenario.scenario),
            policies: specs,
            seed: a.seed,
            episodes: a.episodes,
            config: None,
            out: a.out.as_deref().map(path_str),
            deterministic_combat: a.scenario.deterministic_combat,
        },
        swap_seats: a.swap_seats,
        rows,
    };
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).config()?;
        write_json(&out.join("eval.json"), &summary).runtime()?;
    }
    Ok(summary)
}

/// Scenarios keyed by name from a file or every `.json` file in a directory.
pub fn load_scenarios(path: &Path, deterministic: bool) -> Result<BTreeMap<String, Scenario>> {
    let files = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = BTreeMap::new();
    for f in files {
        let s = load_scenario_file(&f, deterministic).map_err(|e| Error::Scenario(format!("{}: {e}", f.display())))?;
        out.insert(s.name.clone(), s);
    }
    if out.is_empty() {
        return Err(Error::Scenario(format!("no scenarios found in {}", path.display())));
    }
    Ok(out)
}

pub fn cmd_serve(a: &ServeArgs) -> CliResult<()> {
    let scenarios = load_scenarios(&a.scenario.scenario, a.scenario.deterministic_combat).config()?;
    resolve_policy(&a.red, Faction::Red, a.seed).config()?;
    let default = scenarios.keys().next().expect("non-empty").clone();
    let spec = a.red.clone();
    let mut cfg =
        ServerConfig::new(scenarios, &default, Box::new(move |seed| resolve_policy(&spec, Faction::Red, seed)), a.seed)
            .config()?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).config()?;
        cfg = cfg.with_log_dir(dir);
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().runtime()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .with_context(|| format!("cannot bind {}:{}", a.host, a.port))
            .runtime()?;
        let addr = listener.local_addr().runtime()?;
        eprintln!("listening on http://{addr}");
        serve(listener, Arc::new(cfg)).await.runtime()
    })
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => print_json(&cmd_simulate(a)?),
        Command::Train(a) => print_json(&cmd_train(a)?),
        Command::Eval(a) => print_json(&cmd_eval(a)?),
        Command::Serve(a) => cmd_serve(a)?,
    }
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hexcommand: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::DqnPolicy;

    #[test]
    fn policy_specs_resolve() {
        for name in SCRIPTED_NAMES {
            assert_eq!(resolve_policy(name, Faction::Blue, 0).unwrap().name(), name);
        }
        assert_eq!(resolve_policy("hierarchy", Faction::Red, 0).unwrap().name(), "hierarchy");
        assert!(matches!(resolve_policy("nope", Faction::Blue, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn model_files_resolve_by_kind() {
        let dir = tempfile::tempdir().unwrap();
        let enc = crate::observation::EncoderParams::default();
        let net = crate::learn::Approximator::zeros(&[enc.local_len(), 4, 13]).unwrap();
        let dqn = dir.path().join("dqn.json");
        ModelFile::from_dqn(&DqnPolicy::new(net, enc).unwrap()).save(&dqn).unwrap();
        assert!(resolve_policy(dqn.to_str().unwrap(), Faction::Blue, 0).is_ok());
        let score = dir.path().join("score.json");
        ModelFile::from_score(&crate::learn::ScorePredictor::constant("a", "b", 4, 0.0)).save(&score).unwrap();
        assert!(resolve_policy(score.to_str().unwrap(), Faction::Blue, 0).is_err());
    }

    #[test]
    fn stats_and_intervals() {
        assert_eq!(score_stats(&[0.0; 10]), ScoreStats { mean: 0.0, std: 0.0 });
        assert_eq!(score_stats(&[1.0, 3.0]), ScoreStats { mean: 2.0, std: 1.0 });
        assert!(confidence_interval(&[1.0]).is_none());
        let (lo, hi) = confidence_interval(&[1.0, 3.0]).unwrap();
        let half = 1.96 * 2f64.sqrt() / 2f64.sqrt();
        assert!((lo - (2.0 - half)).abs() < 1e-12 && (hi - (2.0 + half)).abs() < 1e-12);
    }

    #[test]
    fn train_config_kinds_parse() {
        let dqn: TrainSpec = toml::from_str("kind = \"dqn\"\nepisodes = 5\nhidden = [16]\n").unwrap();
        assert!(matches!(dqn, TrainSpec::Dqn(ref c) if c.episodes == 5 && c.hidden == vec![16]));
        let score: TrainSpec = toml::from_str("kind = \"score\"\nbehavior = \"hold\"\nepochs = 3\n").unwrap();
        assert!(matches!(score, TrainSpec::Score(ref s) if s.behavior == "hold" && s.model.epochs == 3));
        let mgr: TrainSpec = toml::from_str("kind = \"manager\"\nhorizon = 2\n").unwrap();
        assert!(matches!(mgr, TrainSpec::Manager(ref m) if m.horizon == 2));
        assert!(toml::from_str::<TrainSpec>("kind = \"bogus\"\n").is_err());
    }
}
