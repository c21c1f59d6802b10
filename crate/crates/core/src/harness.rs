//! Configuration-driven experiment runner.
//!
//! Configs are flat `key = value` text with `#` comments. Every run writes a
//! `manifest.txt` echoing the fully resolved configuration, defaults
//! included, followed by the artifacts of the experiment. Identical configs
//! produce byte-identical artifact trees.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agents::{build_agent, evaluate_agent, run_episode, AgentKind, AgentSettings, QLearningConfig};
use crate::dual::verify_duality;
use crate::error::{Error, Result};
use crate::generator::{train_generator, GeneratorConfig, GeneratorHistory, OptimizerKind};
use crate::grid::Direction;
use crate::hard_maze::{is_fork_free, render_ascii, shortest_path_length, MazeMap};
use crate::mdp::random_instance;
use crate::oracle::{brute_force_max_maze, configuration_count};
use crate::seed::{derive_indexed, derive_seed, rng_from_seed};
use crate::soft_maze::{
    corner_pair_blockage, heatmap_csv, heatmap_pgm, train_soft_env, BlockageSnapshot, GradientMode, SoftMazeConfig,
    SoftTrainConfig, MAX_BLOCKAGE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    VerifyDuality,
    TrainSoft,
    TrainHard,
    Evaluate,
    BruteForceOracle,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VerifyDuality => "verify-duality",
            ExperimentKind::TrainSoft => "train-soft",
            ExperimentKind::TrainHard => "train-hard",
            ExperimentKind::Evaluate => "evaluate",
            ExperimentKind::BruteForceOracle => "brute-force-oracle",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "verify-duality" => ExperimentKind::VerifyDuality,
            "train-soft" => ExperimentKind::TrainSoft,
            "train-hard" => ExperimentKind::TrainHard,
            "evaluate" => ExperimentKind::Evaluate,
            "brute-force-oracle" | "oracle" => ExperimentKind::BruteForceOracle,
            other => return Err(Error::Config(format!("unknown experiment kind {other:?}"))),
        })
    }
}

/// Every key a config may set.
pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "side",
    "agent",
    "agent.rhs_heading",
    "agent.q_episodes",
    "agent.q_learning_rate",
    "agent.q_epsilon",
    "agent.q_eval_epsilon",
    "agent.q_max_steps",
    "duality.instances",
    "duality.max_states",
    "duality.max_actions",
    "duality.tolerance",
    "soft.learning_rate",
    "soft.iterations",
    "soft.clip_norm",
    "soft.snapshot_every",
    "soft.stop_gradient_norm",
    "soft.discount",
    "soft.step_cap",
    "soft.step_reward",
    "soft.gradient",
    "soft.mc_episodes",
    "soft.q_warmup_episodes",
    "soft.q_episodes",
    "soft.q_learning_rate",
    "soft.q_epsilon",
    "soft.q_eval_epsilon",
    "gen.hidden",
    "gen.batch_size",
    "gen.rounds",
    "gen.learning_rate",
    "gen.optimizer",
    "gen.entropy_coef",
    "gen.baseline_decay",
    "gen.max_walls",
    "gen.eval_episodes",
    "gen.max_steps",
    "gen.snapshot_every",
    "evaluate.map",
    "evaluate.episodes",
    "evaluate.max_steps",
    "oracle.max_steps",
];

/// A requested experiment: kind, master seed, output directory and flat
/// settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    settings: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, output_dir: impl Into<PathBuf>) -> Self {
        Self { kind, seed: 0, output_dir: output_dir.into(), settings: BTreeMap::new() }
    }

    /// Applies config text; an `experiment` key must agree with `self.kind`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            let key = key.trim();
            if seen.insert(key.to_string(), ()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        match key {
            "experiment" => {
                let kind: ExperimentKind = value.parse()?;
                if kind != self.kind {
                    return Err(Error::Config(format!("config is for {kind}, but {} was requested", self.kind)));
                }
            }
            "seed" => {
                self.seed = value.parse().map_err(|_| Error::Config(format!("seed {value:?} is not an integer")))?;
            }
            _ => {
                self.settings.insert(key.to_string(), value.to_string());
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.settings.get(key).map(String::as_str)
    }
}

/// Reads typed settings with defaults and records every resolved value.
struct Resolver<'a> {
    settings: &'a BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    fn new(config: &'a ExperimentConfig) -> Self {
        let mut resolved = BTreeMap::new();
        resolved.insert("experiment".to_string(), config.kind.to_string());
        resolved.insert("seed".to_string(), config.seed.to_string());
        Self { settings: &config.settings, resolved }
    }

    fn get<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T> {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        let value = match self.settings.get(key) {
            Some(raw) => raw.parse().map_err(|_| Error::Config(format!("bad value {raw:?} for {key}")))?,
            None => default,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn agent(&mut self, default: AgentKind) -> Result<AgentKind> {
        let raw = self.settings.get("agent").cloned().unwrap_or_else(|| default.name().to_string());
        let agent: AgentKind = raw.parse()?;
        self.resolved.insert("agent".into(), agent.name().into());
        Ok(agent)
    }

    fn agent_settings(&mut self) -> Result<AgentSettings> {
        let defaults = AgentSettings::default();
        let heading_raw = self
            .settings
            .get("agent.rhs_heading")
            .cloned()
            .unwrap_or_else(|| defaults.rhs_heading.letter().to_string());
        let heading = Direction::parse(&heading_raw)
            .ok_or_else(|| Error::Config(format!("bad value {heading_raw:?} for agent.rhs_heading")))?;
        self.resolved.insert("agent.rhs_heading".into(), heading.letter().to_string());
        let q = QLearningConfig {
            episodes: self.get("agent.q_episodes", defaults.q.episodes)?,
            learning_rate: self.get("agent.q_learning_rate", defaults.q.learning_rate)?,
            epsilon: self.get("agent.q_epsilon", defaults.q.epsilon)?,
            eval_epsilon: self.get("agent.q_eval_epsilon", defaults.q.eval_epsilon)?,
            max_steps: self.get("agent.q_max_steps", defaults.q.max_steps)?,
            seed: 0,
        };
        for (name, p) in [("agent.q_epsilon", q.epsilon), ("agent.q_eval_epsilon", q.eval_epsilon)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(AgentSettings { rhs_heading: heading, q })
    }

    fn manifest(&self, status: &str, extra: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("status = {status}\n"));
        for (k, v) in extra {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// A harness failure, naming the stage it occurred in.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    /// False when a verification experiment found a violation.
    pub verification_passed: bool,
    /// Artifact paths relative to the output directory, sorted.
    pub artifacts: Vec<String>,
    pub summary: BTreeMap<String, String>,
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} has no file name", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One point of a generator training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub round: usize,
    pub mean_reward: f64,
    pub reward_variance: f64,
}

pub fn curve_points(history: &GeneratorHistory) -> Vec<CurvePoint> {
    history
        .rounds
        .iter()
        .map(|r| CurvePoint { round: r.round, mean_reward: r.mean_reward, reward_variance: r.reward_variance })
        .collect()
}

const CURVE_HEADER: &str = "round,mean_reward,reward_variance";

/// Writes a training curve as CSV (header only when empty).
pub fn export_curve(points: &[CurvePoint], path: &Path) -> Result<()> {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.round, p.mean_reward, p.reward_variance));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Parse(format!("{} lacks the curve header", path.display())));
    }
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("bad curve line {line:?}"));
            if fields.len() != 3 {
                return Err(bad());
            }
            Ok(CurvePoint {
                round: fields[0].parse().map_err(|_| bad())?,
                mean_reward: fields[1].parse().map_err(|_| bad())?,
                reward_variance: fields[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Writes `blockage_<update>.csv` and `.pgm` into `dir`; returns both paths.
pub fn export_heatmap(side: usize, snapshot: &BlockageSnapshot, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let stem = format!("blockage_{:05}", snapshot.iteration);
    let csv = dir.join(format!("{stem}.csv"));
    let pgm = dir.join(format!("{stem}.pgm"));
    write_atomic(&csv, heatmap_csv(side, &snapshot.blockage).as_bytes())?;
    write_atomic(&pgm, heatmap_pgm(side, &snapshot.blockage).as_bytes())?;
    Ok((csv, pgm))
}

/// Collects artifact writes relative to the output directory.
struct Artifacts<'a> {
    root: &'a Path,
    written: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn write(&mut self, relative: &str, contents: &str) -> Result<()> {
        write_atomic(&self.root.join(relative), contents.as_bytes())?;
        self.written.push(relative.to_string());
        Ok(())
    }

    fn record(&mut self, relative: String) {
        self.written.push(relative);
    }
}

fn summary_text(summary: &BTreeMap<String, String>) -> String {
    summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Runs one experiment, writing its artifacts under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> std::result::Result<RunOutcome, StageError> {
    let root = config.output_dir.as_path();
    let mut resolver = Resolver::new(config);
    let mut artifacts = Artifacts { root, written: Vec::new() };
    let result = match config.kind {
        ExperimentKind::VerifyDuality => run_duality(config, &mut resolver, &mut artifacts),
        ExperimentKind::TrainSoft => run_soft(config, &mut resolver, &mut artifacts),
        ExperimentKind::TrainHard => run_hard(config, &mut resolver, &mut artifacts),
        ExperimentKind::Evaluate => run_evaluate(config, &mut resolver, &mut artifacts),
        ExperimentKind::BruteForceOracle => run_oracle(&mut resolver, &mut artifacts),
    };
    match result {
        Ok((passed, summary)) => {
            let wrap = |e| StageError { stage: "export", source: e };
            artifacts.write("summary.txt", &summary_text(&summary)).map_err(wrap)?;
            let mut listed = artifacts.written.clone();
            listed.push("manifest.txt".into());
            listed.sort();
            let manifest = resolver.manifest("complete", &[("artifacts", listed.join(" "))]);
            write_atomic(&root.join("manifest.txt"), manifest.as_bytes()).map_err(wrap)?;
            Ok(RunOutcome { output_dir: root.to_path_buf(), verification_passed: passed, artifacts: listed, summary })
        }
        Err(err) => {
            let mut listed = artifacts.written.clone();
            listed.sort();
            let manifest = resolver.manifest(
                "failed",
                &[
                    ("failed_stage", err.stage.to_string()),
                    ("error", err.source.to_string().replace('\n', " ")),
                    ("partial_artifacts", listed.join(" ")),
                ],
            );
            // best effort: the original error matters more than a failed manifest write
            let _ = write_atomic(&root.join("manifest.txt"), manifest.as_bytes());
            Err(err)
        }
    }
}

type StageResult = std::result::Result<(bool, BTreeMap<String, String>), StageError>;

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|source| StageError { stage: name, source })
}

fn run_duality(config: &ExperimentConfig, r: &mut Resolver, out: &mut Artifacts) -> StageResult {
    let instances: usize = stage("config", r.get("duality.instances", 10))?;
    let max_states: usize = stage("config", r.get("duality.max_states", 5))?;
    let max_actions: usize = stage("config", r.get("duality.max_actions", 3))?;
    let tolerance: f64 = stage("config", r.get("duality.tolerance", 1e-9))?;
    if max_states < 2 || max_actions < 1 || instances == 0 {
        return Err(StageError {
            stage: "config",
            source: Error::Config("duality suite needs instances >= 1, max_states >= 2, max_actions >= 1".into()),
        });
    }
    let mut report = String::new();
    let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut passed = true;
    for i in 0..instances {
        let states = 2 + i % (max_states - 1);
        let actions = 1 + i % max_actions;
        let discount = if i % 2 == 0 { 0.9 } else { 1.0 };
        let seed = derive_indexed(config.seed, "duality-instance", i as u64);
        let (mdp, policy) = stage("duality", random_instance(seed, states, actions, discount))?;
        let result = stage("duality", verify_duality(&mdp, &policy, tolerance))?;
        let prefix = format!("instance.{i}.");
        report.push_str(&format!("{prefix}states = {states}\n{prefix}actions = {actions}\n{prefix}discount = {discount}\n"));
        report.push_str(&format!("{prefix}trajectories = {}\n", result.trajectories_checked));
        report.push_str(&result.to_record(&prefix));
        passed &= result.passed();
        for c in &result.checks {
            let w = worst.entry(c.name).or_insert(0.0);
            *w = w.max(c.max_deviation);
        }
    }
    stage("export", out.write("duality_report.txt", &report))?;
    let mut summary = BTreeMap::new();
    for (name, dev) in worst {
        summary.insert(format!("{name}.max_deviation"), format!("{dev:e}"));
    }
    summary.insert("instances".into(), instances.to_string());
    summary.insert("tolerance".into(), format!("{tolerance:e}"));
    summary.insert("status".into(), if passed { "pass" } else { "fail" }.into());
    Ok((passed, summary))
}

fn run_soft(config: &ExperimentConfig, r: &mut Resolver, out: &mut Artifacts) -> StageResult {
    let side: usize = stage("config", r.get("side", 5))?;
    let agent = stage("config", r.agent(AgentKind::Optimal))?;
    let defaults = SoftTrainConfig::default();
    let maze = SoftMazeConfig {
        side,
        step_cap: stage("config", r.get("soft.step_cap", 8 * side * side))?,
        discount: stage("config", r.get("soft.discount", 0.99))?,
        step_reward: stage("config", r.get("soft.step_reward", -1.0))?,
    };
    stage("config", maze.validate())?;
    let gradient_name: String = stage("config", r.get("soft.gradient", "exact".to_string()))?;
    let mc_episodes: usize = stage("config", r.get("soft.mc_episodes", 1000))?;
    let gradient = match gradient_name.as_str() {
        "exact" => GradientMode::Exact,
        "monte_carlo" => GradientMode::MonteCarlo { episodes: mc_episodes },
        other => {
            return Err(StageError { stage: "config", source: Error::Config(format!("bad value {other:?} for soft.gradient")) })
        }
    };
    let hyper = SoftTrainConfig {
        learning_rate: stage("config", r.get("soft.learning_rate", defaults.learning_rate))?,
        iterations: stage("config", r.get("soft.iterations", defaults.iterations))?,
        clip_norm: stage("config", r.get("soft.clip_norm", defaults.clip_norm))?,
        seed: derive_seed(config.seed, &["soft-training"]),
        snapshot_every: stage("config", r.get("soft.snapshot_every", defaults.snapshot_every))?,
        stop_gradient_norm: stage("config", r.get("soft.stop_gradient_norm", defaults.stop_gradient_norm))?,
        gradient,
        q_warmup_episodes: stage("config", r.get("soft.q_warmup_episodes", defaults.q_warmup_episodes))?,
        q: QLearningConfig {
            episodes: stage("config", r.get("soft.q_episodes", defaults.q.episodes))?,
            learning_rate: stage("config", r.get("soft.q_learning_rate", defaults.q.learning_rate))?,
            epsilon: stage("config", r.get("soft.q_epsilon", defaults.q.epsilon))?,
            eval_epsilon: stage("config", r.get("soft.q_eval_epsilon", defaults.q.eval_epsilon))?,
            max_steps: maze.step_cap,
            seed: 0,
        },
    };
    let history = stage("soft-training", train_soft_env(&maze, agent, &hyper))?;
    stage("export", out.write("soft_history.csv", &history.records_csv()))?;
    for snapshot in &history.snapshots {
        stage("export", export_heatmap(side, snapshot, &out.root.join("heatmaps")))?;
        out.record(format!("heatmaps/blockage_{:05}.csv", snapshot.iteration));
        out.record(format!("heatmaps/blockage_{:05}.pgm", snapshot.iteration));
    }
    let (start_pair, end_pair) = corner_pair_blockage(side, history.final_blockage());
    let endpoint = if end_pair >= 0.45 {
        "end-pair"
    } else if start_pair >= 0.45 {
        "start-pair"
    } else {
        "none"
    };
    let last = history.records.last();
    let mut summary = BTreeMap::new();
    summary.insert("updates".into(), history.updates.to_string());
    summary.insert("final.start_pair_min_blockage".into(), start_pair.to_string());
    summary.insert("final.end_pair_min_blockage".into(), end_pair.to_string());
    summary.insert("final.max_blockage".into(), history.final_blockage().iter().cloned().fold(0.0, f64::max).to_string());
    summary.insert("final.two_wall_corner".into(), endpoint.into());
    summary.insert("blockage_cap".into(), MAX_BLOCKAGE.to_string());
    if let Some(last) = last {
        summary.insert("final.expected_return".into(), last.expected_return.to_string());
        summary.insert("final.expected_steps".into(), last.expected_steps.to_string());
    }
    Ok((true, summary))
}

fn run_hard(config: &ExperimentConfig, r: &mut Resolver, out: &mut Artifacts) -> StageResult {
    let side: usize = stage("config", r.get("side", 5))?;
    let agent = stage("config", r.agent(AgentKind::Optimal))?;
    let settings = stage("config", r.agent_settings())?;
    let defaults = GeneratorConfig::new(side, agent);
    let optimizer_name: String = stage("config", r.get("gen.optimizer", "sgd".to_string()))?;
    let optimizer = match optimizer_name.as_str() {
        "sgd" => OptimizerKind::Sgd,
        "adam" => OptimizerKind::Adam,
        other => {
            return Err(StageError { stage: "config", source: Error::Config(format!("bad value {other:?} for gen.optimizer")) })
        }
    };
    let mut gen = GeneratorConfig {
        hidden: stage("config", r.get("gen.hidden", defaults.hidden))?,
        batch_size: stage("config", r.get("gen.batch_size", defaults.batch_size))?,
        rounds: stage("config", r.get("gen.rounds", defaults.rounds))?,
        learning_rate: stage("config", r.get("gen.learning_rate", defaults.learning_rate))?,
        optimizer,
        entropy_coef: stage("config", r.get("gen.entropy_coef", defaults.entropy_coef))?,
        baseline_decay: stage("config", r.get("gen.baseline_decay", defaults.baseline_decay))?,
        max_walls: stage("config", r.get("gen.max_walls", defaults.max_walls))?,
        eval_episodes: None,
        max_steps: stage("config", r.get("gen.max_steps", defaults.max_steps))?,
        snapshot_every: stage("config", r.get("gen.snapshot_every", defaults.snapshot_every))?,
        agent_settings: settings,
        seed: derive_seed(config.seed, &["generator-training"]),
        ..defaults
    };
    gen.eval_episodes = Some(stage("config", r.get("gen.eval_episodes", gen.episodes_per_map()))?);
    stage("config", gen.validate())?;
    let history = stage("generator-training", train_generator(&gen))?;
    stage("export", export_curve(&curve_points(&history), &out.root.join("generator_curve.csv")))?;
    out.record("generator_curve.csv".into());
    for snapshot in &history.snapshots {
        let name = format!("snapshots/round_{:05}.txt", snapshot.round);
        stage("export", out.write(&name, &snapshot.map.to_file_string()))?;
    }
    stage("export", out.write("best_map.txt", &history.best_map.to_file_string()))?;
    let (first, last) = history.first_and_last_tenth();
    let mut summary = BTreeMap::new();
    summary.insert("best.reward".into(), history.best_reward.to_string());
    summary.insert(
        "best.shortest_path".into(),
        shortest_path_length(&history.best_map).map_or("unreachable".into(), |d| d.to_string()),
    );
    summary.insert("best.walls".into(), history.best_map.wall_count().to_string());
    summary.insert("best.fork_free".into(), is_fork_free(&history.best_map).to_string());
    summary.insert("curve.first_tenth_mean".into(), first.to_string());
    summary.insert("curve.last_tenth_mean".into(), last.to_string());
    summary.insert("rounds".into(), history.rounds.len().to_string());
    Ok((true, summary))
}

fn run_evaluate(config: &ExperimentConfig, r: &mut Resolver, out: &mut Artifacts) -> StageResult {
    let agent = stage("config", r.agent(AgentKind::Optimal))?;
    let settings = stage("config", r.agent_settings())?;
    let map_path: String = stage("config", r.get("evaluate.map", String::new()))?;
    let map = if map_path.is_empty() {
        let side: usize = stage("config", r.get("side", 5))?;
        stage("config", MazeMap::empty(side))?
    } else {
        let text = stage("config", fs::read_to_string(&map_path).map_err(Error::from))?;
        let map = stage("config", MazeMap::from_file_str(&text))?;
        r.resolved.insert("side".into(), map.side().to_string());
        map
    };
    let side = map.side();
    let default_episodes = if agent.is_deterministic() { 1 } else { 100 };
    let episodes: usize = stage("config", r.get("evaluate.episodes", default_episodes))?;
    let max_steps: usize = stage("config", r.get("evaluate.max_steps", 8 * side * side))?;
    let shortest = shortest_path_length(&map).ok_or_else(|| StageError {
        stage: "config",
        source: Error::Config("evaluated map does not connect start and end".into()),
    })?;
    let agent_seed = derive_seed(config.seed, &["evaluate-agent"]);
    let mut runner = stage("evaluation", build_agent(agent, &map, &settings, agent_seed))?;
    let eval_seed = derive_seed(config.seed, &["evaluate-episodes"]);
    let mean = stage("evaluation", evaluate_agent(&map, runner.as_mut(), max_steps, eval_seed, episodes))?;
    let mut rng = rng_from_seed(derive_seed(config.seed, &["evaluate-path"]));
    let path = stage("evaluation", run_episode(&map, runner.as_mut(), max_steps, &mut rng))?;
    stage("export", out.write("path.txt", &format!("{}\n", render_ascii(&map, Some(&path)))))?;
    let mut summary = BTreeMap::new();
    summary.insert("mean_steps".into(), mean.to_string());
    summary.insert("episodes".into(), episodes.to_string());
    summary.insert("shortest_path".into(), shortest.to_string());
    summary.insert("ratio_to_shortest".into(), (mean / shortest.max(1) as f64).to_string());
    Ok((true, summary))
}

fn run_oracle(r: &mut Resolver, out: &mut Artifacts) -> StageResult {
    let side: usize = stage("config", r.get("side", 4))?;
    let agent = stage("config", r.agent(AgentKind::Optimal))?;
    let max_steps: usize = stage("config", r.get("oracle.max_steps", 8 * side * side))?;
    let (map, score) = brute_force_max_maze(side, agent, max_steps).map_err(|e| StageError {
        stage: if matches!(e, Error::Config(_)) { "config" } else { "oracle" },
        source: e,
    })?;
    stage("export", out.write("oracle_map.txt", &map.to_file_string()))?;
    let mut summary = BTreeMap::new();
    summary.insert("best_score".into(), score.to_string());
    summary.insert("configurations".into(), configuration_count(side).to_string());
    summary.insert(
        "best.shortest_path".into(),
        shortest_path_length(&map).map_or("unreachable".into(), |d| d.to_string()),
    );
    Ok((true, summary))
}
