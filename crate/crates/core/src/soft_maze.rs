//! Soft-wall mazes: every cell except the end carries a blockage
//! probability, and the environment learns those probabilities by descending
//! the agent's expected return along the exact transition gradient.

use rayon::prelude::*;

use crate::agents::{q_learning_continue, AgentKind, QLearningConfig, QTable};
use crate::dual::LearnableTransition;
use crate::error::{Error, Result};
use crate::grid::{Cell, Direction};
use crate::mdp::{
    exact_policy_value, expected_return, greedy_actions, optimal_values, sample_episode, state_occupancy,
    StochasticPolicy, TabularMdp,
};
use crate::seed::{derive_indexed, derive_seed, rng_from_seed};

/// Upper bound on any single cell's blockage probability.
pub const MAX_BLOCKAGE: f64 = 0.5;

/// Geometry and evaluation settings of a soft-wall maze.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMazeConfig {
    pub side: usize,
    pub step_cap: usize,
    pub discount: f64,
    pub step_reward: f64,
}

impl SoftMazeConfig {
    /// Defaults: discount 0.99, step cap `8 n^2`, reward -1 per step.
    pub fn new(side: usize) -> Result<Self> {
        let config = Self { side, step_cap: 8 * side * side, discount: 0.99, step_reward: -1.0 };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(Error::Config(format!("soft maze side must be at least 2, got {}", self.side)));
        }
        if self.step_cap < 2 * (self.side - 1) {
            return Err(Error::Config(format!(
                "step cap {} is below the shortest path length {}",
                self.step_cap,
                2 * (self.side - 1)
            )));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount {} outside (0, 1]", self.discount)));
        }
        if !self.step_reward.is_finite() {
            return Err(Error::Config("step reward must be finite".into()));
        }
        Ok(())
    }

    pub fn start(&self) -> Cell {
        Cell::new(0, 0)
    }

    pub fn end(&self) -> Cell {
        Cell::new(self.side - 1, self.side - 1)
    }

    /// Cells carrying a blockage entry; every cell but the end.
    pub fn num_params(&self) -> usize {
        self.side * self.side - 1
    }
}

/// Per-cell logits and the capped blockage distribution they induce.
/// Entry `i` belongs to the cell with row-major index `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftWallParams {
    logits: Vec<f64>,
    blockage: Vec<f64>,
}

impl SoftWallParams {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        let blockage = blockage_distribution(&logits)?;
        Ok(Self { logits, blockage })
    }

    /// All-zero logits: blockage spread evenly over the cells.
    pub fn uniform(config: &SoftMazeConfig) -> Result<Self> {
        Self::from_logits(vec![0.0; config.num_params()])
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn blockage(&self) -> &[f64] {
        &self.blockage
    }
}

/// Uncapped-set bookkeeping shared by the distribution and its Jacobian.
struct CappedSoftmax {
    probs: Vec<f64>,
    capped: Vec<bool>,
    /// Softmax over the uncapped entries (0 on capped ones).
    free_softmax: Vec<f64>,
    free_mass: f64,
}

fn capped_softmax(logits: &[f64]) -> Result<CappedSoftmax> {
    let m = logits.len();
    if m < 3 {
        return Err(Error::InfeasibleConstraint(format!(
            "{m} blockage entries cannot sum to 1 with each at most {MAX_BLOCKAGE}; at least 3 are needed"
        )));
    }
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(Error::InfeasibleConstraint(format!("logit {i} is not finite")));
    }
    let mut capped = vec![false; m];
    loop {
        let num_capped = capped.iter().filter(|&&c| c).count();
        let free_mass = 1.0 - MAX_BLOCKAGE * num_capped as f64;
        let max = (0..m).filter(|&i| !capped[i]).map(|i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
        let mut free_softmax = vec![0.0; m];
        let mut z = 0.0;
        for i in (0..m).filter(|&i| !capped[i]) {
            free_softmax[i] = (logits[i] - max).exp();
            z += free_softmax[i];
        }
        for s in free_softmax.iter_mut() {
            *s /= z;
        }
        let probs: Vec<f64> =
            (0..m).map(|i| if capped[i] { MAX_BLOCKAGE } else { free_mass * free_softmax[i] }).collect();
        let over: Vec<usize> = (0..m).filter(|&i| !capped[i] && probs[i] > MAX_BLOCKAGE).collect();
        if over.is_empty() {
            return Ok(CappedSoftmax { probs, capped, free_softmax, free_mass });
        }
        for i in over {
            capped[i] = true;
        }
    }
}

/// Softmax of `logits`, clamped at 0.5 with the excess redistributed
/// proportionally over the remaining entries until no entry exceeds the cap.
pub fn blockage_distribution(logits: &[f64]) -> Result<Vec<f64>> {
    Ok(capped_softmax(logits)?.probs)
}

/// The blockage distribution together with its Jacobian `d p_i / d theta_k`
/// (row-major, `m x m`). Capped entries are constants, so their rows and
/// columns are zero.
pub fn blockage_jacobian(logits: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let cs = capped_softmax(logits)?;
    let m = logits.len();
    let mut jac = vec![0.0; m * m];
    for i in (0..m).filter(|&i| !cs.capped[i]) {
        for k in (0..m).filter(|&k| !cs.capped[k]) {
            let delta = if i == k { cs.free_softmax[i] } else { 0.0 };
            jac[i * m + k] = cs.free_mass * (delta - cs.free_softmax[i] * cs.free_softmax[k]);
        }
    }
    Ok((cs.probs, jac))
}

fn check_blockage(config: &SoftMazeConfig, blockage: &[f64]) -> Result<()> {
    if blockage.len() != config.num_params() {
        return Err(Error::Config(format!(
            "blockage has {} entries, a side-{} maze needs {}",
            blockage.len(),
            config.side,
            config.num_params()
        )));
    }
    if blockage.iter().any(|&p| !(0.0..=MAX_BLOCKAGE).contains(&p)) {
        return Err(Error::Config(format!("blockage entries must lie in [0, {MAX_BLOCKAGE}]")));
    }
    let total: f64 = blockage.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Config(format!("blockage sums to {total}, expected 1")));
    }
    Ok(())
}

/// The cell an action tries to enter, when that cell carries blockage.
fn blockable_target(config: &SoftMazeConfig, state: usize, action: usize) -> Option<usize> {
    let dir = Direction::from_action(action)?;
    let target = Cell::from_index(state, config.side).step(dir, config.side)?;
    let index = target.index(config.side);
    (index != config.num_params()).then_some(index)
}

/// Tabular MDP of a soft-wall maze: cells are states, actions are
/// N, S, W, E; a move into cell `c` fails with probability `p(c)`.
pub fn soft_maze_mdp(config: &SoftMazeConfig, blockage: &[f64]) -> Result<TabularMdp> {
    config.validate()?;
    check_blockage(config, blockage)?;
    soft_maze_mdp_unchecked(config, blockage)
}

/// Builds the maze for any per-cell blockage in `[0, 1)`, without the
/// sum constraint.
fn soft_maze_mdp_unchecked(config: &SoftMazeConfig, blockage: &[f64]) -> Result<TabularMdp> {
    let n = config.side;
    let ns = n * n;
    let end = config.end().index(n);
    let mut transition = vec![0.0; ns * 4 * ns];
    for s in 0..ns {
        let cell = Cell::from_index(s, n);
        for dir in Direction::ALL {
            let row = (s * 4 + dir.action()) * ns;
            if s == end {
                transition[row + s] = 1.0;
                continue;
            }
            match cell.step(dir, n) {
                None => transition[row + s] = 1.0,
                Some(target) => {
                    let t = target.index(n);
                    let p = if t == end { 0.0 } else { blockage[t] };
                    transition[row + t] += 1.0 - p;
                    transition[row + s] += p;
                }
            }
        }
    }
    let mut start = vec![0.0; ns];
    start[config.start().index(n)] = 1.0;
    TabularMdp::new(ns, 4, transition, vec![config.step_reward; ns * 4], config.discount, start, &[end])
}

/// Action order used to break value ties.
pub const TIE_ORDER: [usize; 4] = [0, 1, 2, 3];

const VALUE_RESIDUAL: f64 = 1e-10;
const TIE_TOLERANCE: f64 = 1e-9;

/// Deterministic optimal policy by value iteration (residual 1e-10), ties
/// broken in the order N, S, W, E.
pub fn optimal_agent_policy(mdp: &TabularMdp) -> Result<StochasticPolicy> {
    Ok(optimal_agent_policy_warm(mdp, None)?.0)
}

/// As [`optimal_agent_policy`], warm-started from earlier values; also
/// returns the optimal values.
pub fn optimal_agent_policy_warm(mdp: &TabularMdp, warm: Option<&[f64]>) -> Result<(StochasticPolicy, Vec<f64>)> {
    let values = optimal_values(mdp, VALUE_RESIDUAL, warm, 1_000_000)?;
    let actions = greedy_actions(mdp, &values, &TIE_ORDER, TIE_TOLERANCE);
    Ok((StochasticPolicy::deterministic(&actions, mdp.num_actions())?, values))
}

/// Expected number of steps before reaching the end, counting at most
/// `cap` steps per episode.
pub fn expected_steps(mdp: &TabularMdp, policy: &StochasticPolicy, cap: usize) -> f64 {
    let n = mdp.num_states();
    let na = mdp.num_actions();
    let mut mass: Vec<f64> = mdp.start_dist().to_vec();
    let mut total = 0.0;
    for _ in 0..cap {
        let mut next = vec![0.0; n];
        let mut alive = 0.0;
        for s in (0..n).filter(|&s| !mdp.is_terminal(s) && mass[s] > 0.0) {
            alive += mass[s];
            for a in 0..na {
                let w = mass[s] * policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (t, p) in mdp.transition_row(s, a).iter().enumerate() {
                    next[t] += w * p;
                }
            }
        }
        if alive == 0.0 {
            break;
        }
        total += alive;
        mass = next;
    }
    total
}

/// Gradient of the expected return with respect to the blockage entries.
fn blockage_gradient(config: &SoftMazeConfig, mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<Vec<f64>> {
    let values = exact_policy_value(mdp, policy)?;
    let occupancy = state_occupancy(mdp, policy)?;
    let gamma = mdp.discount();
    let mut grad = vec![0.0; config.num_params()];
    for (s, &d) in occupancy.iter().enumerate() {
        if d == 0.0 || mdp.is_terminal(s) {
            continue;
        }
        for a in 0..4 {
            let pi = policy.prob(s, a);
            if pi == 0.0 {
                continue;
            }
            // dP(s,a,c)/dp(c) = -1 and dP(s,a,s)/dp(c) = +1
            if let Some(c) = blockable_target(config, s, a) {
                grad[c] += d * pi * gamma * (values[s] - values[c]);
            }
        }
    }
    Ok(grad)
}

fn chain_to_logits(grad_p: &[f64], jac: &[f64]) -> Vec<f64> {
    let m = grad_p.len();
    (0..m).map(|k| (0..m).map(|i| grad_p[i] * jac[i * m + k]).sum()).collect()
}

/// Exact gradient of the agent's expected return with respect to the
/// logits: occupancy-weighted transition scores times successor values.
pub fn transition_gradient(
    config: &SoftMazeConfig,
    params: &SoftWallParams,
    agent_policy: &StochasticPolicy,
) -> Result<Vec<f64>> {
    let (blockage, jac) = blockage_jacobian(params.logits())?;
    let mdp = soft_maze_mdp(config, &blockage)?;
    let grad_p = blockage_gradient(config, &mdp, agent_policy)?;
    Ok(chain_to_logits(&grad_p, &jac))
}

/// Monte-Carlo gradient estimate with its per-coordinate standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Score-function estimate of the same gradient from sampled episodes:
/// each sampled transition's log-probability score is weighted by the
/// discounted rewards that follow it.
pub fn transition_gradient_monte_carlo(
    config: &SoftMazeConfig,
    params: &SoftWallParams,
    agent_policy: &StochasticPolicy,
    episodes: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    if episodes < 2 {
        return Err(Error::Config("Monte-Carlo gradient needs at least two episodes".into()));
    }
    let (blockage, jac) = blockage_jacobian(params.logits())?;
    let mdp = soft_maze_mdp(config, &blockage)?;
    let m = config.num_params();
    let gamma = mdp.discount();
    let samples: Vec<Vec<f64>> = (0..episodes as u64)
        .into_par_iter()
        .map(|e| -> Result<Vec<f64>> {
            let mut rng = rng_from_seed(derive_indexed(seed, "soft-gradient-episode", e));
            let traj = sample_episode(&mdp, agent_policy, &mut rng, config.step_cap)?;
            let states = traj.states();
            // discounted reward after step t, measured from the episode start
            let mut tail = vec![0.0; traj.len() + 1];
            let mut discount = gamma.powi(traj.len() as i32 - 1);
            for t in (0..traj.len()).rev() {
                tail[t] = tail[t + 1] + discount * traj.steps[t].reward;
                discount /= gamma;
            }
            let mut grad_p = vec![0.0; m];
            for (t, step) in traj.steps.iter().enumerate() {
                let next = states[t + 1];
                if let Some(c) = blockable_target(config, step.state, step.action) {
                    let score = if next == c {
                        -1.0 / (1.0 - blockage[c])
                    } else {
                        1.0 / blockage[c]
                    };
                    grad_p[c] += score * tail[t + 1];
                }
            }
            Ok(chain_to_logits(&grad_p, &jac))
        })
        .collect::<Result<_>>()?;
    let count = episodes as f64;
    let mut mean = vec![0.0; m];
    for sample in &samples {
        for (acc, x) in mean.iter_mut().zip(sample) {
            *acc += x / count;
        }
    }
    let mut std_error = vec![0.0; m];
    for sample in &samples {
        for ((acc, x), mu) in std_error.iter_mut().zip(sample).zip(&mean) {
            *acc += (x - mu).powi(2) / (count - 1.0);
        }
    }
    for v in std_error.iter_mut() {
        *v = (*v / count).sqrt();
    }
    Ok(GradientEstimate { mean, std_error })
}

/// A soft maze as a differentiable transition model over its logits.
pub struct SoftMazeModel {
    config: SoftMazeConfig,
    mdp: TabularMdp,
    jacobian: Vec<f64>,
}

impl SoftMazeModel {
    pub fn new(config: &SoftMazeConfig, params: &SoftWallParams) -> Result<Self> {
        let (blockage, jacobian) = blockage_jacobian(params.logits())?;
        let mdp = soft_maze_mdp(config, &blockage)?;
        Ok(Self { config: config.clone(), mdp, jacobian })
    }
}

impl LearnableTransition for SoftMazeModel {
    fn num_params(&self) -> usize {
        self.config.num_params()
    }

    fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    fn row_jacobian(&self, state: usize, action: usize) -> Option<Vec<f64>> {
        let m = self.config.num_params();
        let ns = self.mdp.num_states();
        let mut block = vec![0.0; ns * m];
        if self.mdp.is_terminal(state) {
            return Some(block);
        }
        if let Some(c) = blockable_target(&self.config, state, action) {
            for k in 0..m {
                let d = self.jacobian[c * m + k];
                block[c * m + k] -= d;
                block[state * m + k] += d;
            }
        }
        Some(block)
    }
}

/// How the environment's gradient is computed during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    Exact,
    MonteCarlo { episodes: usize },
}

/// Hyperparameters of the environment/agent loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Blockage snapshots are kept every this many iterations (and at the end).
    pub snapshot_every: usize,
    /// Training stops early once the gradient norm falls to this value.
    pub stop_gradient_norm: f64,
    pub gradient: GradientMode,
    /// Q-learning episodes before the first environment update.
    pub q_warmup_episodes: usize,
    /// Q-learning settings; `episodes` is the per-iteration budget.
    pub q: QLearningConfig,
}

impl Default for SoftTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            iterations: 5000,
            clip_norm: 10.0,
            seed: 0,
            snapshot_every: 100,
            stop_gradient_norm: 1e-12,
            gradient: GradientMode::Exact,
            q_warmup_episodes: 2000,
            q: QLearningConfig {
                episodes: 20,
                learning_rate: 0.1,
                epsilon: 0.2,
                eval_epsilon: 0.05,
                max_steps: 200,
                seed: 0,
            },
        }
    }
}

/// Agent performance at one iteration, before that iteration's update.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftIterationRecord {
    pub iteration: usize,
    /// Discounted expected return of the agent.
    pub expected_return: f64,
    /// Undiscounted expected steps, capped at the step cap.
    pub expected_steps: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockageSnapshot {
    pub iteration: usize,
    pub logits: Vec<f64>,
    pub blockage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftTrainingHistory {
    pub side: usize,
    pub records: Vec<SoftIterationRecord>,
    pub snapshots: Vec<BlockageSnapshot>,
    /// Environment updates actually applied.
    pub updates: usize,
}

impl SoftTrainingHistory {
    pub fn final_blockage(&self) -> &[f64] {
        &self.snapshots.last().expect("history always holds the initial snapshot").blockage
    }

    /// Per-iteration records as CSV.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("iteration,expected_return,expected_steps,gradient_norm\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.iteration, r.expected_return, r.expected_steps, r.gradient_norm));
        }
        out
    }
}

/// Smallest blockage on the two cells next to the start and on the two
/// cells next to the end.
pub fn corner_pair_blockage(side: usize, blockage: &[f64]) -> (f64, f64) {
    let at = |r: usize, c: usize| blockage[Cell::new(r, c).index(side)];
    let start = at(0, 1).min(at(1, 0));
    let end = at(side - 2, side - 1).min(at(side - 1, side - 2));
    (start, end)
}

/// The agent side of the loop.
enum SoftAgent {
    Optimal { values: Option<Vec<f64>> },
    QLearning { table: QTable, config: QLearningConfig, rng: crate::seed::StreamRng, warm: bool },
}

impl SoftAgent {
    fn new(kind: AgentKind, config: &SoftMazeConfig, hyper: &SoftTrainConfig) -> Result<Self> {
        match kind {
            AgentKind::Optimal => Ok(SoftAgent::Optimal { values: None }),
            AgentKind::QLearning => {
                let n = config.side * config.side;
                let q = QLearningConfig { max_steps: config.step_cap, ..hyper.q.clone() };
                Ok(SoftAgent::QLearning {
                    table: QTable::zeros(n, 4),
                    config: q,
                    rng: rng_from_seed(derive_seed(hyper.seed, &["soft-q-agent"])),
                    warm: false,
                })
            }
            other => Err(Error::Config(format!("soft mazes support optimal and q_learning agents, not {other}"))),
        }
    }

    fn adapt(&mut self, mdp: &TabularMdp, warmup: usize) -> Result<StochasticPolicy> {
        match self {
            SoftAgent::Optimal { values } => {
                let (policy, v) = optimal_agent_policy_warm(mdp, values.as_deref())?;
                *values = Some(v);
                Ok(policy)
            }
            SoftAgent::QLearning { table, config, rng, warm } => {
                let budget = if *warm { config.clone() } else { QLearningConfig { episodes: warmup, ..config.clone() } };
                *warm = true;
                q_learning_continue(mdp, table, &budget, rng);
                if table.values.iter().any(|q| !q.is_finite()) {
                    return Err(Error::Agent("Q-learning produced non-finite values".into()));
                }
                table.epsilon_greedy(config.eval_epsilon)
            }
        }
    }
}

fn validate_hyper(hyper: &SoftTrainConfig) -> Result<()> {
    if !(hyper.learning_rate.is_finite() && hyper.learning_rate > 0.0) {
        return Err(Error::Config(format!("learning rate {} must be positive", hyper.learning_rate)));
    }
    if !(hyper.clip_norm > 0.0) {
        return Err(Error::Config("gradient clip norm must be positive".into()));
    }
    if hyper.snapshot_every == 0 {
        return Err(Error::Config("snapshot interval must be positive".into()));
    }
    if let GradientMode::MonteCarlo { episodes } = hyper.gradient {
        if episodes < 2 {
            return Err(Error::Config("Monte-Carlo gradient needs at least two episodes".into()));
        }
    }
    Ok(())
}

/// Alternates agent adaptation and environment gradient steps, starting
/// from uniform blockage.
pub fn train_soft_env(config: &SoftMazeConfig, agent_kind: AgentKind, hyper: &SoftTrainConfig) -> Result<SoftTrainingHistory> {
    config.validate()?;
    validate_hyper(hyper)?;
    let mut agent = SoftAgent::new(agent_kind, config, hyper)?;
    let mut params = SoftWallParams::uniform(config)?;
    let mut history = SoftTrainingHistory { side: config.side, records: Vec::new(), snapshots: Vec::new(), updates: 0 };
    let snapshot = |iteration, params: &SoftWallParams| BlockageSnapshot {
        iteration,
        logits: params.logits().to_vec(),
        blockage: params.blockage().to_vec(),
    };
    history.snapshots.push(snapshot(0, &params));
    if hyper.iterations == 0 {
        return Ok(history);
    }

    for iteration in 0..=hyper.iterations {
        let diverged = |detail: String| Error::Diverged { iteration, detail };
        let mdp = soft_maze_mdp(config, params.blockage())?;
        let policy = agent.adapt(&mdp, hyper.q_warmup_episodes)?;
        let value = expected_return(&mdp, &policy)?;
        let steps = expected_steps(&mdp, &policy, config.step_cap);
        if !value.is_finite() || !steps.is_finite() {
            return Err(diverged(format!("agent return {value}, expected steps {steps}")));
        }
        if iteration == hyper.iterations {
            history.records.push(SoftIterationRecord { iteration, expected_return: value, expected_steps: steps, gradient_norm: 0.0 });
            break;
        }
        let mut grad = match hyper.gradient {
            GradientMode::Exact => transition_gradient(config, &params, &policy)?,
            GradientMode::MonteCarlo { episodes } => {
                let seed = derive_indexed(hyper.seed, "soft-gradient", iteration as u64);
                transition_gradient_monte_carlo(config, &params, &policy, episodes, seed)?.mean
            }
        };
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(diverged(format!("gradient norm {norm}")));
        }
        history.records.push(SoftIterationRecord { iteration, expected_return: value, expected_steps: steps, gradient_norm: norm });
        if norm <= hyper.stop_gradient_norm {
            break;
        }
        if norm > hyper.clip_norm {
            for g in grad.iter_mut() {
                *g *= hyper.clip_norm / norm;
            }
        }
        let logits: Vec<f64> = params.logits().iter().zip(&grad).map(|(x, g)| x - hyper.learning_rate * g).collect();
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(diverged("logits became non-finite".into()));
        }
        params = SoftWallParams::from_logits(logits).map_err(|e| diverged(e.to_string()))?;
        history.updates += 1;
        if history.updates.is_multiple_of(hyper.snapshot_every) {
            history.snapshots.push(snapshot(history.updates, &params));
        }
    }
    if history.snapshots.last().map(|s| s.iteration) != Some(history.updates) {
        history.snapshots.push(snapshot(history.updates, &params));
    }
    Ok(history)
}

/// `side x side` grid of blockage values with the end cell set to 0.
pub fn blockage_grid(side: usize, blockage: &[f64]) -> Vec<Vec<f64>> {
    (0..side)
        .map(|r| (0..side).map(|c| blockage.get(r * side + c).copied().unwrap_or(0.0)).collect())
        .collect()
}

/// Heatmap as CSV, one grid row per line.
pub fn heatmap_csv(side: usize, blockage: &[f64]) -> String {
    let mut out = String::new();
    for row in blockage_grid(side, blockage) {
        let cells: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Heatmap as an ASCII portable graymap scaled so blockage 0.5 maps to 255.
pub fn heatmap_pgm(side: usize, blockage: &[f64]) -> String {
    let mut out = format!("P2\n{side} {side}\n255\n");
    for row in blockage_grid(side, blockage) {
        let cells: Vec<String> =
            row.iter().map(|p| ((255.0 * p / MAX_BLOCKAGE).round().clamp(0.0, 255.0) as u32).to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::dual_policy_gradient;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exact projection: `p_i = min(0.5, c * exp(theta_i))` with `c` found by
    /// bisection so the entries sum to 1.
    fn water_filling(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
        let total = |c: f64| w.iter().map(|wi| (c * wi).min(0.5)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, 1.0);
        while total(hi) < 1.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        w.iter().map(|wi| (hi * wi).min(0.5)).collect()
    }

    fn random_logits(seed: u64, m: usize, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    fn relative_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn equal_logits_give_uniform_blockage() {
        let p = blockage_distribution(&[0.0; 24]).unwrap();
        for x in p {
            assert!((x - 1.0 / 24.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_large_logit_is_capped() {
        let mut logits = vec![0.0; 24];
        logits[5] = 50.0;
        let p = blockage_distribution(&logits).unwrap();
        assert_eq!(p[5], 0.5);
        let rest: f64 = p.iter().enumerate().filter(|(i, _)| *i != 5).map(|(_, x)| x).sum();
        assert!((rest - 0.5).abs() < 1e-12);
        for (i, x) in p.iter().enumerate().filter(|(i, _)| *i != 5) {
            assert!((x - 0.5 / 23.0).abs() < 1e-15, "entry {i}");
        }
    }

    #[test]
    fn matches_water_filling_oracle() {
        for seed in 0..20 {
            let logits = random_logits(seed, 6, 4.0);
            let p = blockage_distribution(&logits).unwrap();
            let oracle = water_filling(&logits);
            for (a, b) in p.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-10, "seed {seed}: {p:?} vs {oracle:?}");
            }
        }
    }

    #[test]
    fn too_few_entries_is_infeasible() {
        assert!(matches!(blockage_distribution(&[0.0, 1.0]), Err(Error::InfeasibleConstraint(_))));
        assert!(matches!(blockage_distribution(&[0.0, f64::NAN, 1.0]), Err(Error::InfeasibleConstraint(_))));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for seed in 0..10 {
            let logits = random_logits(100 + seed, 8, 3.0);
            let (p, jac) = blockage_jacobian(&logits).unwrap();
            let m = logits.len();
            let h = 1e-6;
            for k in 0..m {
                let mut plus = logits.clone();
                plus[k] += h;
                let mut minus = logits.clone();
                minus[k] -= h;
                let pp = blockage_distribution(&plus).unwrap();
                let pm = blockage_distribution(&minus).unwrap();
                for i in 0..m {
                    if p[i] == MAX_BLOCKAGE {
                        continue;
                    }
                    let fd = (pp[i] - pm[i]) / (2.0 * h);
                    assert!((fd - jac[i * m + k]).abs() < 1e-7, "seed {seed} ({i},{k}): {fd} vs {}", jac[i * m + k]);
                }
            }
        }
    }

    #[test]
    fn transition_rows_follow_blockage() {
        let config = SoftMazeConfig::new(3).unwrap();
        let mut blockage = vec![0.0; 8];
        blockage[1] = 0.5;
        blockage[4] = 0.5;
        let mdp = soft_maze_mdp(&config, &blockage).unwrap();
        // from (0,0) east into (0,1): half success, half stay
        let east = mdp.transition_row(0, Direction::East.action());
        assert_eq!(east[1], 0.5);
        assert_eq!(east[0], 0.5);
        // south into (1,0) with no blockage is deterministic
        assert_eq!(mdp.transition(0, Direction::South.action(), 3), 1.0);
        // off-grid stays put
        assert_eq!(mdp.transition(0, Direction::North.action(), 0), 1.0);
        // moving into the end cell never fails
        assert_eq!(mdp.transition(5, Direction::South.action(), 8), 1.0);
        assert!(mdp.is_terminal(8));
        assert_eq!(mdp.reward(3, 2), -1.0);
    }

    #[test]
    fn rejects_invalid_blockage_and_config() {
        let config = SoftMazeConfig::new(3).unwrap();
        assert!(soft_maze_mdp(&config, &[0.125; 7]).is_err());
        let mut over = vec![0.0; 8];
        over[0] = 0.6;
        over[1] = 0.4;
        assert!(soft_maze_mdp(&config, &over).is_err());
        assert!(SoftMazeConfig::new(1).is_err());
        let short = SoftMazeConfig { step_cap: 3, ..SoftMazeConfig::new(3).unwrap() };
        assert!(short.validate().is_err());
    }

    #[test]
    fn two_by_two_geometric_retry() {
        let config = SoftMazeConfig { step_cap: 400, ..SoftMazeConfig::new(2).unwrap() };
        for blockage in [[0.2, 0.5, 0.3], [0.0, 0.5, 0.5], [0.5, 0.25, 0.25], [0.4, 0.1, 0.5]] {
            let mdp = soft_maze_mdp(&config, &blockage).unwrap();
            let policy = optimal_agent_policy(&mdp).unwrap();
            let steps = expected_steps(&mdp, &policy, config.step_cap);
            let closed_form = 1.0 / (1.0 - blockage[1].min(blockage[2])) + 1.0;
            assert!((steps - closed_form).abs() < 1e-10, "{blockage:?}: {steps} vs {closed_form}");
        }
    }

    #[test]
    fn optimal_policy_beats_every_deterministic_policy_on_2x2() {
        let config = SoftMazeConfig::new(2).unwrap();
        let mdp = soft_maze_mdp(&config, &[0.3, 0.45, 0.25]).unwrap();
        let best = expected_return(&mdp, &optimal_agent_policy(&mdp).unwrap()).unwrap();
        let mut enumerated = f64::NEG_INFINITY;
        for code in 0..4usize.pow(4) {
            let actions: Vec<usize> = (0..4).map(|s| (code / 4usize.pow(s as u32)) % 4).collect();
            let policy = StochasticPolicy::deterministic(&actions, 4).unwrap();
            enumerated = enumerated.max(expected_return(&mdp, &policy).unwrap());
        }
        assert!((best - enumerated).abs() < 1e-9, "{best} vs {enumerated}");
    }

    #[test]
    fn unobstructed_path_is_shortest() {
        let config = SoftMazeConfig::new(4).unwrap();
        // all blockage on cells no monotone path needs when moving east first
        let mut blockage = vec![0.0; 15];
        blockage[Cell::new(3, 0).index(4)] = 0.5;
        blockage[Cell::new(2, 0).index(4)] = 0.5;
        let mdp = soft_maze_mdp(&config, &blockage).unwrap();
        let policy = optimal_agent_policy(&mdp).unwrap();
        assert!((expected_steps(&mdp, &policy, config.step_cap) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_policy_avoids_blocked_equal_length_path() {
        let config = SoftMazeConfig::new(3).unwrap();
        let mut blockage = vec![0.0; 8];
        blockage[Cell::new(1, 0).index(3)] = 0.5;
        blockage[Cell::new(0, 2).index(3)] = 0.5;
        let mdp = soft_maze_mdp(&config, &blockage).unwrap();
        let policy = optimal_agent_policy(&mdp).unwrap();
        // South is preferred on ties, so choosing East shows the avoidance.
        assert_eq!(policy.greedy_actions()[0], Direction::East.action());
        let q = crate::mdp::action_values(&mdp, &exact_policy_value(&mdp, &policy).unwrap());
        assert!(q[Direction::East.action()] > q[Direction::South.action()]);
    }

    #[test]
    fn start_pair_costs_one_retry() {
        let config = SoftMazeConfig::new(3).unwrap();
        let mut blockage = vec![0.0; 8];
        blockage[1] = 0.5;
        blockage[3] = 0.5;
        let mdp = soft_maze_mdp(&config, &blockage).unwrap();
        let policy = optimal_agent_policy(&mdp).unwrap();
        // one retry on average at the start, then unobstructed
        assert!((expected_steps(&mdp, &policy, config.step_cap) - 5.0).abs() < 1e-10);
    }

    fn three_by_three_instances() -> Vec<SoftWallParams> {
        (0..5).map(|seed| SoftWallParams::from_logits(random_logits(900 + seed, 8, 1.0)).unwrap()).collect()
    }

    fn finite_difference(config: &SoftMazeConfig, params: &SoftWallParams, policy: &StochasticPolicy, k: usize) -> f64 {
        let h = 1e-5;
        let eval = |delta: f64| {
            let mut logits = params.logits().to_vec();
            logits[k] += delta;
            let blockage = blockage_distribution(&logits).unwrap();
            expected_return(&soft_maze_mdp(config, &blockage).unwrap(), policy).unwrap()
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    }

    #[test]
    fn gradient_matches_finite_differences_and_dual() {
        let config = SoftMazeConfig::new(3).unwrap();
        for params in three_by_three_instances() {
            let mdp = soft_maze_mdp(&config, params.blockage()).unwrap();
            for policy in [optimal_agent_policy(&mdp).unwrap(), StochasticPolicy::uniform(9, 4)] {
                let grad = transition_gradient(&config, &params, &policy).unwrap();
                let dual = dual_policy_gradient(&SoftMazeModel::new(&config, &params).unwrap(), &policy).unwrap();
                for k in 0..8 {
                    let fd = finite_difference(&config, &params, &policy, k);
                    assert!(relative_close(grad[k], fd, 1e-4), "coord {k}: {} vs fd {fd}", grad[k]);
                    assert!((grad[k] - dual[k]).abs() <= 1e-8, "coord {k}: {} vs dual {}", grad[k], dual[k]);
                }
            }
        }
    }

    #[test]
    fn gradient_is_transpose_symmetric() {
        let config = SoftMazeConfig::new(4).unwrap();
        let policy = StochasticPolicy::uniform(16, 4);
        let mut logits = vec![0.0; 15];
        for r in 0..4 {
            for c in 0..4 {
                let i = Cell::new(r, c).index(4);
                if i < 15 {
                    logits[i] = ((r * c) as f64 * 0.3).sin() + 0.1 * (r + c) as f64;
                }
            }
        }
        let params = SoftWallParams::from_logits(logits).unwrap();
        let grad = transition_gradient(&config, &params, &policy).unwrap();
        for i in 0..15 {
            let t = Cell::from_index(i, 4).transposed().index(4);
            assert!((grad[i] - grad[t]).abs() <= 1e-10, "{i} vs {t}");
        }
    }

    #[test]
    fn blocking_the_only_optimal_route_lowers_return() {
        let config = SoftMazeConfig::new(3).unwrap();
        let mut logits = vec![0.0; 8];
        logits[Cell::new(1, 0).index(3)] = 1.8;
        let params = SoftWallParams::from_logits(logits).unwrap();
        assert!(params.blockage()[3] < 0.5);
        let mdp = soft_maze_mdp(&config, params.blockage()).unwrap();
        let policy = optimal_agent_policy(&mdp).unwrap();
        assert_eq!(policy.greedy_actions()[0], Direction::East.action());
        let k = Cell::new(0, 1).index(3);
        let grad = transition_gradient(&config, &params, &policy).unwrap();
        let fd = finite_difference(&config, &params, &policy, k);
        assert!(grad[k] < 0.0 && fd < 0.0, "{} / {fd}", grad[k]);
    }

    #[test]
    fn capped_coordinates_have_one_sided_agreement() {
        // with one capped entry, moving its logit down (into the interior)
        // is matched by the stop-gradient derivative only from above
        let config = SoftMazeConfig::new(3).unwrap();
        let mut logits = vec![0.0; 8];
        logits[2] = 5.0;
        let params = SoftWallParams::from_logits(logits.clone()).unwrap();
        assert_eq!(params.blockage()[2], 0.5);
        let policy = StochasticPolicy::uniform(9, 4);
        let grad = transition_gradient(&config, &params, &policy).unwrap();
        assert_eq!(grad[2], 0.0);
        let h = 1e-5;
        let base = expected_return(&soft_maze_mdp(&config, params.blockage()).unwrap(), &policy).unwrap();
        logits[2] += h;
        let up = expected_return(&soft_maze_mdp(&config, &blockage_distribution(&logits).unwrap()).unwrap(), &policy).unwrap();
        assert!(((up - base) / h).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_gradient_agrees_with_exact() {
        let config = SoftMazeConfig::new(3).unwrap();
        let params = &three_by_three_instances()[0];
        let policy = StochasticPolicy::epsilon_greedy(&[3, 1, 1, 3, 1, 1, 3, 3, 0], 4, 0.3).unwrap();
        let exact = transition_gradient(&config, params, &policy).unwrap();
        let estimate = transition_gradient_monte_carlo(&config, params, &policy, 40_000, 11).unwrap();
        for k in 0..8 {
            let z = (estimate.mean[k] - exact[k]).abs() / estimate.std_error[k].max(1e-12);
            assert!(z < 4.5, "coord {k}: {} vs {} (se {})", estimate.mean[k], exact[k], estimate.std_error[k]);
        }
    }

    #[test]
    fn zero_iterations_keep_uniform_blockage() {
        let config = SoftMazeConfig::new(5).unwrap();
        let hyper = SoftTrainConfig { iterations: 0, ..Default::default() };
        let history = train_soft_env(&config, AgentKind::Optimal, &hyper).unwrap();
        assert_eq!(history.snapshots.len(), 1);
        assert_eq!(history.updates, 0);
        assert!(history.final_blockage().iter().all(|p| (p - 1.0 / 24.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_search_agents() {
        let config = SoftMazeConfig::new(3).unwrap();
        assert!(matches!(train_soft_env(&config, AgentKind::Dfs, &SoftTrainConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn optimal_agent_objective_is_monotone() {
        let config = SoftMazeConfig::new(5).unwrap();
        let lr = 1e-2;
        let hyper = SoftTrainConfig { learning_rate: lr, iterations: 100, ..Default::default() };
        let history = train_soft_env(&config, AgentKind::Optimal, &hyper).unwrap();
        assert_eq!(history.records.len(), 101);
        // a step may not undo more than its own first-order progress
        let violations = history
            .records
            .windows(2)
            .filter(|w| w[1].expected_return - w[0].expected_return > lr * w[0].gradient_norm.powi(2))
            .count();
        assert!(violations * 50 <= 100, "{violations} increases");
        assert!(history.records[100].expected_return < history.records[0].expected_return);
        for r in &history.records {
            assert!(r.expected_steps <= config.step_cap as f64);
        }
    }

    #[test]
    fn each_step_lowers_the_return_of_the_policy_it_was_taken_against() {
        let config = SoftMazeConfig::new(5).unwrap();
        let mut params = SoftWallParams::uniform(&config).unwrap();
        for _ in 0..50 {
            let mdp = soft_maze_mdp(&config, params.blockage()).unwrap();
            let policy = optimal_agent_policy(&mdp).unwrap();
            let before = expected_return(&mdp, &policy).unwrap();
            let grad = transition_gradient(&config, &params, &policy).unwrap();
            let logits = params.logits().iter().zip(&grad).map(|(x, g)| x - 1e-2 * g).collect();
            params = SoftWallParams::from_logits(logits).unwrap();
            let after = expected_return(&soft_maze_mdp(&config, params.blockage()).unwrap(), &policy).unwrap();
            assert!(after < before, "{after} >= {before}");
        }
    }

    #[test]
    fn heatmap_exports() {
        let mut blockage = vec![0.0; 8];
        blockage[1] = 0.5;
        blockage[3] = 0.25;
        blockage[7] = 0.25;
        assert_eq!(heatmap_csv(3, &blockage), "0,0.5,0\n0.25,0,0\n0,0.25,0\n");
        assert_eq!(heatmap_pgm(3, &blockage), "P2\n3 3\n255\n0 255 0\n128 0 0\n0 128 0\n");
    }

    #[test]
    fn corner_pairs() {
        let mut blockage = vec![0.0; 24];
        blockage[Cell::new(3, 4).index(5)] = 0.5;
        blockage[Cell::new(4, 3).index(5)] = 0.5;
        assert_eq!(corner_pair_blockage(5, &blockage), (0.0, 0.5));
    }

    proptest! {
        #[test]
        fn blockage_stays_on_the_capped_simplex(logits in proptest::collection::vec(-30.0f64..30.0, 3..40)) {
            let p = blockage_distribution(&logits).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
            prop_assert!(p.iter().all(|&x| (0.0..=0.5).contains(&x)));
        }

        #[test]
        fn more_blockage_never_helps_the_optimal_agent(
            base in proptest::collection::vec(0.0f64..0.5, 8),
            cell in 0usize..8,
            extra in 0.0f64..0.5,
        ) {
            let config = SoftMazeConfig::new(3).unwrap();
            let mut heavier = base.clone();
            heavier[cell] = (heavier[cell] + extra).min(MAX_BLOCKAGE);
            let light = soft_maze_mdp_unchecked(&config, &base).unwrap();
            let heavy = soft_maze_mdp_unchecked(&config, &heavier).unwrap();
            let v_light = expected_return(&light, &optimal_agent_policy(&light).unwrap()).unwrap();
            let v_heavy = expected_return(&heavy, &optimal_agent_policy(&heavy).unwrap()).unwrap();
            prop_assert!(v_heavy <= v_light + 1e-9);
        }
    }
}
