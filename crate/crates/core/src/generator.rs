//! Sequential maze generator trained with REINFORCE.
//!
//! A generation episode starts from the empty map and, at every step, either
//! places one wall or terminates. Actions that would make the map invalid are
//! masked out, so every partial map is valid. The finished map is scored by
//! running an agent on it, and the generator is rewarded with the agent's
//! mean path length.

use rand::Rng;
use rayon::prelude::*;

use crate::agents::{build_agent, evaluate_agent, AgentKind, AgentSettings};
use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::hard_maze::MazeMap;
use crate::seed::{derive_indexed, derive_seed, rng_from_seed};

/// Action mask over the `n^2` cells followed by terminate. A cell is valid
/// iff a wall may be placed there.
pub fn valid_actions(partial: &MazeMap) -> Vec<bool> {
    let n = partial.side();
    let mut mask: Vec<bool> = (0..n * n).map(|i| partial.place_wall(Cell::from_index(i, n)).is_ok()).collect();
    mask.push(true);
    mask
}

/// One-hidden-layer tanh network from the occupancy grid to action scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorPolicyParams {
    side: usize,
    hidden: usize,
    /// `W1 (h x n^2) | b1 (h) | W2 ((n^2+1) x h) | b2 (n^2+1)`
    weights: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct Forward {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl GeneratorPolicyParams {
    /// Uniform initialisation with scale `1/sqrt(fan_in)` for the hidden
    /// layer and a tenth of that for the output layer; biases start at 0.
    pub fn new(side: usize, hidden: usize, seed: u64) -> Result<Self> {
        if side < 2 || hidden == 0 {
            return Err(Error::Config(format!("generator needs side >= 2 and hidden >= 1, got {side}, {hidden}")));
        }
        let inputs = side * side;
        let outputs = inputs + 1;
        let mut rng = rng_from_seed(seed);
        let mut weights = Vec::with_capacity(Self::len_for(side, hidden));
        let s1 = 1.0 / (inputs as f64).sqrt();
        weights.extend((0..hidden * inputs).map(|_| rng.gen_range(-s1..s1)));
        weights.extend(std::iter::repeat_n(0.0, hidden));
        let s2 = 0.1 / (hidden as f64).sqrt();
        weights.extend((0..outputs * hidden).map(|_| rng.gen_range(-s2..s2)));
        weights.extend(std::iter::repeat_n(0.0, outputs));
        Ok(Self { side, hidden, weights })
    }

    pub fn from_weights(side: usize, hidden: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != Self::len_for(side, hidden) {
            return Err(Error::Config(format!(
                "expected {} weights, got {}",
                Self::len_for(side, hidden),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("generator weights must be finite".into()));
        }
        Ok(Self { side, hidden, weights })
    }

    fn len_for(side: usize, hidden: usize) -> usize {
        let inputs = side * side;
        hidden * inputs + hidden + (inputs + 1) * hidden + inputs + 1
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_actions(&self) -> usize {
        self.side * self.side + 1
    }

    /// Index of the terminate action.
    pub fn terminate_action(&self) -> usize {
        self.side * self.side
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let inputs = self.side * self.side;
        let b1 = self.hidden * inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + (inputs + 1) * self.hidden;
        (b1, w2, b2)
    }

    fn forward(&self, map: &MazeMap, mask: &[bool]) -> Forward {
        let inputs = self.side * self.side;
        let outputs = inputs + 1;
        let (b1, w2, b2) = self.offsets();
        let walls = map.walls();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.weights[j * inputs..(j + 1) * inputs];
                let pre = self.weights[b1 + j] + row.iter().zip(walls).filter(|(_, w)| **w).map(|(x, _)| x).sum::<f64>();
                pre.tanh()
            })
            .collect();
        let scores: Vec<f64> = (0..outputs)
            .map(|k| {
                let row = &self.weights[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
                self.weights[b2 + k] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        let (probs, log_probs) = masked_softmax(&scores, mask);
        Forward { hidden, probs, log_probs }
    }

    /// Masked action probabilities at `map`.
    pub fn action_probs(&self, map: &MazeMap) -> Vec<f64> {
        self.forward(map, &valid_actions(map)).probs
    }

    /// `log pi(action | map)`; `-inf` for masked actions.
    pub fn log_prob(&self, map: &MazeMap, action: usize) -> f64 {
        self.forward(map, &valid_actions(map)).log_probs[action]
    }

    /// Accumulates `scale * d log pi(action) + entropy_scale * d H` into `grad`.
    fn accumulate_gradient(
        &self,
        map: &MazeMap,
        mask: &[bool],
        action: usize,
        scale: f64,
        entropy_scale: f64,
        grad: &mut [f64],
    ) {
        let inputs = self.side * self.side;
        let outputs = inputs + 1;
        let (b1, w2, b2) = self.offsets();
        let fwd = self.forward(map, mask);
        let entropy: f64 = (0..outputs).filter(|&k| mask[k] && fwd.probs[k] > 0.0).map(|k| -fwd.probs[k] * fwd.log_probs[k]).sum();
        // gradient with respect to the scores, zero on masked entries
        let mut g_scores = vec![0.0; outputs];
        for k in (0..outputs).filter(|&k| mask[k]) {
            let indicator = if k == action { 1.0 } else { 0.0 };
            let mut g = scale * (indicator - fwd.probs[k]);
            if entropy_scale != 0.0 && fwd.probs[k] > 0.0 {
                g -= entropy_scale * fwd.probs[k] * (fwd.log_probs[k] + entropy);
            }
            g_scores[k] = g;
        }
        let mut g_hidden = vec![0.0; self.hidden];
        for k in (0..outputs).filter(|&k| g_scores[k] != 0.0) {
            grad[b2 + k] += g_scores[k];
            let row = w2 + k * self.hidden;
            for j in 0..self.hidden {
                grad[row + j] += g_scores[k] * fwd.hidden[j];
                g_hidden[j] += g_scores[k] * self.weights[row + j];
            }
        }
        let walls = map.walls();
        for j in 0..self.hidden {
            let g_pre = g_hidden[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
            grad[b1 + j] += g_pre;
            let row = j * inputs;
            for (i, _) in walls.iter().enumerate().filter(|(_, w)| **w) {
                grad[row + i] += g_pre;
            }
        }
    }

    /// Analytic gradient of `log pi(action | map)` with respect to the weights.
    pub fn log_prob_gradient(&self, map: &MazeMap, action: usize) -> Vec<f64> {
        let mut grad = vec![0.0; self.weights.len()];
        self.accumulate_gradient(map, &valid_actions(map), action, 1.0, 0.0, &mut grad);
        grad
    }
}

/// Softmax restricted to `mask`; masked entries get probability 0 and
/// log-probability `-inf`.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let max = scores.iter().zip(mask).filter(|(_, m)| **m).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().zip(mask).filter(|(_, m)| **m).map(|(s, _)| (s - max).exp()).sum();
    let log_z = max + z.ln();
    let log_probs: Vec<f64> =
        scores.iter().zip(mask).map(|(s, m)| if *m { s - log_z } else { f64::NEG_INFINITY }).collect();
    let probs = log_probs.iter().map(|l| l.exp()).collect();
    (probs, log_probs)
}

/// A finished generation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorEpisode {
    pub side: usize,
    /// Sampled actions: cell indices, possibly ending with terminate.
    pub actions: Vec<usize>,
    pub final_map: MazeMap,
    /// Set once the map has been scored; 0 before.
    pub reward: f64,
}

impl GeneratorEpisode {
    /// The partial maps `v_0, ..., v_K` (one per wall placed, starting empty).
    pub fn partial_maps(&self) -> Vec<MazeMap> {
        let mut map = MazeMap::empty(self.side).expect("episode side is valid");
        let mut maps = vec![map.clone()];
        for &a in &self.actions {
            if a < self.side * self.side {
                map = map.place_wall(Cell::from_index(a, self.side)).expect("recorded actions are valid");
                maps.push(map.clone());
            }
        }
        maps
    }

    pub fn wall_count(&self) -> usize {
        self.final_map.wall_count()
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Samples one maze. The episode ends when terminate is drawn or after
/// `max_walls` placements.
pub fn generate_maze(params: &GeneratorPolicyParams, seed: u64, max_walls: usize) -> GeneratorEpisode {
    let side = params.side();
    let mut rng = rng_from_seed(seed);
    let mut map = MazeMap::empty(side).expect("params side is valid");
    let mut actions = Vec::new();
    let terminate = params.terminate_action();
    while map.wall_count() < max_walls {
        let mask = valid_actions(&map);
        let fwd = params.forward(&map, &mask);
        let action = sample_index(&fwd.probs, &mut rng);
        actions.push(action);
        if action == terminate {
            break;
        }
        map = map.place_wall(Cell::from_index(action, side)).expect("masked actions are valid");
    }
    GeneratorEpisode { side, actions, final_map: map, reward: 0.0 }
}

/// Scores a map by the agent's mean realized steps.
pub fn generator_reward(
    map: &MazeMap,
    agent_kind: AgentKind,
    eval_episodes: usize,
    max_steps: usize,
    settings: &AgentSettings,
    seed: u64,
) -> Result<f64> {
    let mut agent = build_agent(agent_kind, map, settings, derive_seed(seed, &["agent-train"]))?;
    evaluate_agent(map, agent.as_mut(), max_steps, derive_seed(seed, &["agent-eval"]), eval_episodes)
}

/// Exponential moving average of batch rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub value: Option<f64>,
    pub decay: f64,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Self { value: None, decay }
    }

    /// The baseline for a batch with mean reward `mean`; the first batch
    /// initialises it to its own mean.
    pub fn current(&self, mean: f64) -> f64 {
        self.value.unwrap_or(mean)
    }

    pub fn update(&mut self, mean: f64) {
        self.value = Some(match self.value {
            None => mean,
            Some(v) => self.decay * v + (1.0 - self.decay) * mean,
        });
    }
}

/// Mean over the batch of `(reward - baseline) * sum_t d log pi` plus the
/// entropy bonus gradient; the ascent direction of the generator objective.
pub fn reinforce_gradient(
    params: &GeneratorPolicyParams,
    batch: &[GeneratorEpisode],
    baseline: f64,
    entropy_coef: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Config("REINFORCE needs a non-empty batch".into()));
    }
    let per_episode: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|episode| {
            let mut grad = vec![0.0; params.weights.len()];
            let advantage = episode.reward - baseline;
            let mut map = MazeMap::empty(params.side).expect("params side is valid");
            for &action in &episode.actions {
                let mask = valid_actions(&map);
                params.accumulate_gradient(&map, &mask, action, advantage, entropy_coef, &mut grad);
                if action < params.terminate_action() {
                    map = map.place_wall(Cell::from_index(action, params.side)).expect("recorded actions are valid");
                }
            }
            grad
        })
        .collect();
    let mut total = vec![0.0; params.weights.len()];
    for grad in &per_episode {
        for (t, g) in total.iter_mut().zip(grad) {
            *t += g;
        }
    }
    let count = batch.len() as f64;
    for t in total.iter_mut() {
        *t /= count;
    }
    if let Some(i) = total.iter().position(|g| !g.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite generator gradient at weight {i}")));
    }
    Ok(total)
}

/// First-order update rule for the generator weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64, m: Vec<f64>, v: Vec<f64>, t: u32 },
}

impl Optimizer {
    pub fn adam(len: usize) -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// Moves `weights` along the ascent direction `grad`.
    fn ascend(&mut self, weights: &mut [f64], grad: &[f64], learning_rate: f64) {
        match self {
            Optimizer::Sgd => {
                for (w, g) in weights.iter_mut().zip(grad) {
                    *w += learning_rate * g;
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon, m, v, t } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t as i32);
                let c2 = 1.0 - beta2.powi(*t as i32);
                for i in 0..weights.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    weights[i] += learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + *epsilon);
                }
            }
        }
    }
}

/// One REINFORCE step with plain gradient ascent; updates the baseline
/// with the batch mean afterwards.
pub fn reinforce_update(
    params: &GeneratorPolicyParams,
    batch: &[GeneratorEpisode],
    baseline: &mut Baseline,
    learning_rate: f64,
    entropy_coef: f64,
) -> Result<GeneratorPolicyParams> {
    reinforce_step(params, batch, baseline, learning_rate, entropy_coef, &mut Optimizer::Sgd)
}

fn reinforce_step(
    params: &GeneratorPolicyParams,
    batch: &[GeneratorEpisode],
    baseline: &mut Baseline,
    learning_rate: f64,
    entropy_coef: f64,
    optimizer: &mut Optimizer,
) -> Result<GeneratorPolicyParams> {
    let mean = batch.iter().map(|e| e.reward).sum::<f64>() / batch.len().max(1) as f64;
    let grad = reinforce_gradient(params, batch, baseline.current(mean), entropy_coef)?;
    let mut next = params.clone();
    optimizer.ascend(&mut next.weights, &grad, learning_rate);
    if next.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Evaluation("generator weights became non-finite".into()));
    }
    baseline.update(mean);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Generator training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub side: usize,
    pub agent: AgentKind,
    pub hidden: usize,
    pub batch_size: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Entropy bonus at round 0, decayed linearly to 0 at the last round.
    pub entropy_coef: f64,
    pub baseline_decay: f64,
    pub max_walls: usize,
    /// Agent episodes per scored map; `None` picks 1 for deterministic
    /// agents and 32 for the Q agent.
    pub eval_episodes: Option<usize>,
    pub max_steps: usize,
    pub snapshot_every: usize,
    pub agent_settings: AgentSettings,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(side: usize, agent: AgentKind) -> Self {
        Self {
            side,
            agent,
            hidden: 128,
            batch_size: 32,
            rounds: 300,
            learning_rate: 0.1,
            optimizer: OptimizerKind::Sgd,
            entropy_coef: 0.01,
            baseline_decay: 0.9,
            max_walls: side * side - 2,
            eval_episodes: None,
            max_steps: 8 * side * side,
            snapshot_every: 10,
            agent_settings: AgentSettings::default(),
            seed: 0,
        }
    }

    pub fn episodes_per_map(&self) -> usize {
        self.eval_episodes.unwrap_or(if self.agent.is_deterministic() { 1 } else { 32 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 2 || self.side > 8 {
            return Err(Error::Config(format!("generator side must be in 2..=8, got {}", self.side)));
        }
        if self.hidden == 0 || self.batch_size == 0 || self.snapshot_every == 0 {
            return Err(Error::Config("hidden width, batch size and snapshot interval must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("generator learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::Config("baseline decay must lie in [0, 1)".into()));
        }
        if self.entropy_coef < 0.0 {
            return Err(Error::Config("entropy coefficient must be non-negative".into()));
        }
        if self.max_walls > self.side * self.side - 2 {
            return Err(Error::Config(format!("max_walls exceeds the {} placeable cells", self.side * self.side - 2)));
        }
        if self.max_steps < 2 * (self.side - 1) {
            return Err(Error::Config("max_steps is below the shortest possible path".into()));
        }
        if self.episodes_per_map() == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub mean_reward: f64,
    pub reward_variance: f64,
    pub best_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSnapshot {
    pub round: usize,
    pub map: MazeMap,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorHistory {
    pub rounds: Vec<RoundRecord>,
    /// Best map of the round, every `snapshot_every` rounds and at the end.
    pub snapshots: Vec<MapSnapshot>,
    pub best_map: MazeMap,
    pub best_reward: f64,
    pub params: GeneratorPolicyParams,
}

impl GeneratorHistory {
    /// Round records as CSV.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("round,mean_reward,reward_variance\n");
        for r in &self.rounds {
            out.push_str(&format!("{},{},{}\n", r.round, r.mean_reward, r.reward_variance));
        }
        out
    }

    /// Mean of `mean_reward` over the first and the last tenth of the rounds.
    pub fn first_and_last_tenth(&self) -> (f64, f64) {
        let n = self.rounds.len();
        let k = (n / 10).max(1);
        let mean = |rs: &[RoundRecord]| rs.iter().map(|r| r.mean_reward).sum::<f64>() / rs.len() as f64;
        (mean(&self.rounds[..k.min(n)]), mean(&self.rounds[n - k.min(n)..]))
    }
}

/// Rounds of batch generation, agent scoring and REINFORCE updates.
pub fn train_generator(config: &GeneratorConfig) -> Result<GeneratorHistory> {
    config.validate()?;
    let mut params = GeneratorPolicyParams::new(config.side, config.hidden, derive_seed(config.seed, &["generator-init"]))?;
    let mut optimizer = match config.optimizer {
        OptimizerKind::Sgd => Optimizer::Sgd,
        OptimizerKind::Adam => Optimizer::adam(params.weights.len()),
    };
    let mut baseline = Baseline::new(config.baseline_decay);
    let episodes = config.episodes_per_map();
    let mut history = GeneratorHistory {
        rounds: Vec::with_capacity(config.rounds),
        snapshots: Vec::new(),
        best_map: MazeMap::empty(config.side)?,
        best_reward: f64::NEG_INFINITY,
        params: params.clone(),
    };
    for round in 0..config.rounds {
        let stage = |e: Error| match e {
            Error::Evaluation(detail) | Error::Agent(detail) => Error::Diverged { iteration: round, detail },
            other => other,
        };
        let batch: Vec<GeneratorEpisode> = (0..config.batch_size)
            .into_par_iter()
            .map(|i| -> Result<GeneratorEpisode> {
                let index = (round * config.batch_size + i) as u64;
                let mut episode = generate_maze(&params, derive_indexed(config.seed, "generator-episode", index), config.max_walls);
                episode.reward = generator_reward(
                    &episode.final_map,
                    config.agent,
                    episodes,
                    config.max_steps,
                    &config.agent_settings,
                    derive_indexed(config.seed, "generator-score", index),
                )?;
                Ok(episode)
            })
            .collect::<Result<_>>()
            .map_err(stage)?;
        let count = batch.len() as f64;
        let mean = batch.iter().map(|e| e.reward).sum::<f64>() / count;
        let variance = batch.iter().map(|e| (e.reward - mean).powi(2)).sum::<f64>() / count;
        // first maximum wins, so ties resolve by batch order
        let round_best = batch.iter().fold(&batch[0], |best, e| if e.reward > best.reward { e } else { best });
        if round_best.reward > history.best_reward {
            history.best_reward = round_best.reward;
            history.best_map = round_best.final_map.clone();
        }
        history.rounds.push(RoundRecord { round, mean_reward: mean, reward_variance: variance, best_reward: history.best_reward });
        if round % config.snapshot_every == 0 || round + 1 == config.rounds {
            history.snapshots.push(MapSnapshot { round, map: round_best.final_map.clone(), reward: round_best.reward });
        }
        let progress = if config.rounds > 1 { round as f64 / (config.rounds - 1) as f64 } else { 0.0 };
        let entropy = config.entropy_coef * (1.0 - progress);
        params = reinforce_step(&params, &batch, &mut baseline, config.learning_rate, entropy, &mut optimizer).map_err(stage)?;
    }
    history.params = params;
    Ok(history)
}
