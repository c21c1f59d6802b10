//! Finite MDPs, stochastic policies, episode simulation and exact evaluation.
//!
//! Tensors are stored flat and row-major: `transition[(s * A + a) * S + s']`,
//! `reward[s * A + a]`, `policy[s * A + a]`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::{rng_from_seed, StreamRng};

const ROW_SUM_TOL: f64 = 1e-12;
const SOLVE_RESIDUAL_TOL: f64 = 1e-10;
const ABSORPTION_TOL: f64 = 1e-8;

/// An explicit finite MDP with start distribution and terminal set.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    start_dist: Vec<f64>,
    terminal: Vec<bool>,
}

fn check_distribution(row: &[f64], what: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{}: entry {p} outside [0, 1]", what())));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::Config(format!("{}: sums to {sum}, not 1", what())));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        start_dist: Vec<f64>,
        terminal_states: &[usize],
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Config("an MDP needs at least one state and one action".into()));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::Config(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        if reward.len() != num_states * num_actions {
            return Err(Error::Config(format!(
                "reward tensor has {} entries, expected {}",
                reward.len(),
                num_states * num_actions
            )));
        }
        if start_dist.len() != num_states {
            return Err(Error::Config("start distribution length mismatch".into()));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::Config(format!("discount {discount} outside (0, 1]")));
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::Config(format!("non-finite reward {r}")));
        }
        for (i, row) in transition.chunks(num_states).enumerate() {
            check_distribution(row, || {
                format!("transition row (s={}, a={})", i / num_actions, i % num_actions)
            })?;
        }
        check_distribution(&start_dist, || "start distribution".to_string())?;
        let mut terminal = vec![false; num_states];
        for &t in terminal_states {
            if t >= num_states {
                return Err(Error::Config(format!("terminal state {t} out of range")));
            }
            terminal[t] = true;
        }
        Ok(Self { num_states, num_actions, transition, reward, discount, start_dist, terminal })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition[(state * self.num_actions + action) * self.num_states + next]
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// The full flat transition tensor.
    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    pub fn reward_tensor(&self) -> &[f64] {
        &self.reward
    }

    pub fn start_dist(&self) -> &[f64] {
        &self.start_dist
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.num_states).filter(|&s| self.terminal[s]).collect()
    }

    /// Same MDP with a different discount.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::Config(format!("discount {discount} outside (0, 1]")));
        }
        Ok(Self { discount, ..self.clone() })
    }

    /// Same dynamics with every reward replaced.
    pub fn with_rewards(&self, reward: Vec<f64>) -> Result<Self> {
        if reward.len() != self.reward.len() {
            return Err(Error::Config("reward tensor length mismatch".into()));
        }
        Ok(Self { reward, ..self.clone() })
    }

    /// Same dynamics with a different start distribution.
    pub fn with_start_dist(&self, start_dist: Vec<f64>) -> Result<Self> {
        if start_dist.len() != self.num_states {
            return Err(Error::Config("start distribution length mismatch".into()));
        }
        check_distribution(&start_dist, || "start distribution".to_string())?;
        Ok(Self { start_dist, ..self.clone() })
    }

    fn check_policy(&self, policy: &StochasticPolicy) -> Result<()> {
        if policy.num_states() != self.num_states || policy.num_actions() != self.num_actions {
            return Err(Error::Config(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.num_states(),
                policy.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    /// Policy-induced state-to-state matrix (dense, row-major) and reward vector.
    fn induced_chain(&self, policy: &StochasticPolicy) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_states;
        let mut chain = vec![0.0; n * n];
        let mut reward = vec![0.0; n];
        for s in 0..n {
            for a in 0..self.num_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                reward[s] += pa * self.reward(s, a);
                for (next, &p) in self.transition_row(s, a).iter().enumerate() {
                    chain[s * n + next] += pa * p;
                }
            }
        }
        (chain, reward)
    }
}

/// A stochastic policy as a row-stochastic (state, action) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || probs.len() != num_states * num_actions {
            return Err(Error::Config(format!(
                "policy table has {} entries, expected {}x{}",
                probs.len(),
                num_states,
                num_actions
            )));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            check_distribution(row, || format!("policy row {s}"))?;
        }
        Ok(Self { num_states, num_actions, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self { num_states, num_actions, probs: vec![p; num_states * num_actions] }
    }

    /// One-hot policy taking `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::Config(format!("action {a} out of range in state {s}")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Self::new(actions.len(), num_actions, probs)
    }

    /// Mixes a one-hot policy with the uniform distribution.
    pub fn epsilon_greedy(actions: &[usize], num_actions: usize, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
        }
        let explore = epsilon / num_actions as f64;
        let mut probs = vec![explore; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::Config(format!("action {a} out of range in state {s}")));
            }
            probs[s * num_actions + a] += 1.0 - epsilon;
        }
        Self::new(actions.len(), num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.num_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Most probable action per state, lowest index on ties.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.num_states)
            .map(|s| {
                let row = self.row(s);
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A recorded episode.
///
/// `final_state` is the state reached after the last step (the start state
/// for an empty episode). `None` means the final successor was not recorded,
/// so probabilities are marginal over it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub final_state: Option<usize>,
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }

    /// Visited states including the final one, when recorded.
    pub fn states(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.steps.iter().map(|s| s.state).collect();
        out.extend(self.final_state);
        out
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Samples one episode, stopping at a terminal state or after `max_steps` steps.
pub fn sample_episode<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    rng: &mut R,
    max_steps: usize,
) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    let mut state = sample_index(mdp.start_dist(), rng);
    let mut steps = Vec::new();
    while !mdp.is_terminal(state) && steps.len() < max_steps {
        let action = sample_index(policy.row(state), rng);
        let reward = mdp.reward(state, action);
        steps.push(Step { state, action, reward });
        state = sample_index(mdp.transition_row(state, action), rng);
    }
    Ok(Trajectory { steps, final_state: Some(state), terminated: mdp.is_terminal(state) })
}

/// Discounted sum of the realized rewards.
pub fn episode_return(traj: &Trajectory, discount: f64) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for r in traj.rewards() {
        total += weight * r;
        weight *= discount;
    }
    total
}

/// Probability of the recorded trajectory under `mdp` and `policy`.
pub fn trajectory_probability(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    traj: &Trajectory,
) -> f64 {
    let n = mdp.num_states();
    let in_range = |s: usize| s < n;
    let first = match (traj.steps.first(), traj.final_state) {
        (Some(step), _) => step.state,
        (None, Some(s)) => s,
        (None, None) => return 1.0,
    };
    if !in_range(first) {
        return 0.0;
    }
    let mut prob = mdp.start_dist()[first];
    for (t, step) in traj.steps.iter().enumerate() {
        if !in_range(step.state) || step.action >= mdp.num_actions() {
            return 0.0;
        }
        prob *= policy.prob(step.state, step.action);
        let next = match traj.steps.get(t + 1) {
            Some(next) => Some(next.state),
            None => traj.final_state,
        };
        if let Some(next) = next {
            if !in_range(next) {
                return 0.0;
            }
            prob *= mdp.transition(step.state, step.action, next);
        }
        if prob == 0.0 {
            return 0.0;
        }
    }
    prob
}

/// States that can reach a terminal state along positive-probability edges.
fn can_reach_terminal(n: usize, chain: &[f64], terminal: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut reach = vec![false; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        if terminal(s) {
            reach[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(t) = queue.pop_front() {
        for s in 0..n {
            if !reach[s] && chain[s * n + t] > 0.0 {
                reach[s] = true;
                queue.push_back(s);
            }
        }
    }
    reach
}

/// States reachable from the start distribution under the chain.
fn reachable_from_start(mdp: &TabularMdp, chain: &[f64]) -> Vec<bool> {
    let n = mdp.num_states();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        if mdp.start_dist()[s] > 0.0 {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        if mdp.is_terminal(s) {
            continue;
        }
        for t in 0..n {
            if !seen[t] && chain[s * n + t] > 0.0 {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

/// Power iteration on the substochastic block: true once `Q^k 1` drops
/// below `1 - ABSORPTION_TOL` everywhere.
fn substochastic_contracts(n: usize, chain: &[f64], active: &[usize]) -> bool {
    let m = active.len();
    if m == 0 {
        return true;
    }
    let mut v = vec![1.0; m];
    let limit = 1000.max(20 * m);
    for _ in 0..limit {
        let mut next = vec![0.0; m];
        for (i, &s) in active.iter().enumerate() {
            next[i] = active.iter().enumerate().map(|(j, &t)| chain[s * n + t] * v[j]).sum();
        }
        v = next;
        if v.iter().all(|&x| x <= 1.0 - ABSORPTION_TOL) {
            return true;
        }
    }
    false
}

/// Non-terminal states whose value is well defined, i.e. all of them for
/// discount < 1, and at discount 1 the states reachable from the start.
fn evaluated_states(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    mdp.check_policy(policy)?;
    let n = mdp.num_states();
    let (chain, reward) = mdp.induced_chain(policy);
    if mdp.discount() < 1.0 {
        let active = (0..n).filter(|&s| !mdp.is_terminal(s)).collect();
        return Ok((active, chain, reward));
    }
    let relevant = reachable_from_start(mdp, &chain);
    let reach = can_reach_terminal(n, &chain, |s| mdp.is_terminal(s));
    let recurrent: Vec<usize> = (0..n).filter(|&s| relevant[s] && !reach[s]).collect();
    if !recurrent.is_empty() {
        return Err(Error::Evaluation(format!(
            "policy-induced chain is not absorbing at discount 1; recurrent states {recurrent:?} never reach a terminal state"
        )));
    }
    let active: Vec<usize> = (0..n).filter(|&s| relevant[s] && !mdp.is_terminal(s)).collect();
    if !substochastic_contracts(n, &chain, &active) {
        return Err(Error::Evaluation(format!(
            "spectral radius of the non-terminal block over {active:?} is within {ABSORPTION_TOL} of 1"
        )));
    }
    Ok((active, chain, reward))
}

fn solve_with_refinement(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = matrix.clone().lu();
    let mut x = lu
        .solve(rhs)
        .ok_or_else(|| Error::Evaluation("singular evaluation system".into()))?;
    for _ in 0..3 {
        let residual = rhs - matrix * &x;
        let scale = 1.0 + x.amax();
        if residual.amax() <= SOLVE_RESIDUAL_TOL * scale {
            return Ok(x);
        }
        let correction = lu
            .solve(&residual)
            .ok_or_else(|| Error::Evaluation("singular evaluation system".into()))?;
        x += correction;
    }
    let residual = (rhs - matrix * &x).amax();
    if residual > SOLVE_RESIDUAL_TOL * (1.0 + x.amax()) {
        return Err(Error::Evaluation(format!("linear solve residual {residual} too large")));
    }
    Ok(x)
}

/// Exact state values of `policy`, zero on terminal states.
///
/// At discount 1, states that are neither reachable from the start
/// distribution nor terminal are left out of the solve and hold `NaN`.
pub fn exact_policy_value(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let (active, chain, reward) = evaluated_states(mdp, policy)?;
    let gamma = mdp.discount();
    let m = active.len();
    let mut values = vec![0.0; n];
    if gamma >= 1.0 {
        for s in 0..n {
            if !mdp.is_terminal(s) && !active.contains(&s) {
                values[s] = f64::NAN;
            }
        }
    }
    if m == 0 {
        return Ok(values);
    }
    let matrix = DMatrix::from_fn(m, m, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - gamma * chain[active[i] * n + active[j]]
    });
    let rhs = DVector::from_fn(m, |i, _| reward[active[i]]);
    let solution = solve_with_refinement(&matrix, &rhs)?;
    for (i, &s) in active.iter().enumerate() {
        values[s] = solution[i];
    }
    Ok(values)
}

/// Expected return from the start distribution.
pub fn expected_return(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<f64> {
    let values = exact_policy_value(mdp, policy)?;
    Ok(mdp
        .start_dist()
        .iter()
        .zip(&values)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, v)| p * v)
        .sum())
}

/// Discounted expected visitation of each non-terminal state,
/// `d(s) = sum_t gamma^(t-1) P[S_t = s]`. Terminal states get 0.
pub fn state_occupancy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let (active, chain, _) = evaluated_states(mdp, policy)?;
    let gamma = mdp.discount();
    let m = active.len();
    let mut occupancy = vec![0.0; n];
    if m == 0 {
        return Ok(occupancy);
    }
    // d^T (I - gamma Q) = p1^T  <=>  (I - gamma Q)^T d = p1
    let matrix = DMatrix::from_fn(m, m, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - gamma * chain[active[j] * n + active[i]]
    });
    let rhs = DVector::from_fn(m, |i, _| mdp.start_dist()[active[i]]);
    let solution = solve_with_refinement(&matrix, &rhs)?;
    for (i, &s) in active.iter().enumerate() {
        occupancy[s] = solution[i];
    }
    Ok(occupancy)
}

/// Action values `R(s,a) + gamma * sum_s' P(s,a,s') V(s')` for given state values.
pub fn action_values(mdp: &TabularMdp, values: &[f64]) -> Vec<f64> {
    let n = mdp.num_states();
    let na = mdp.num_actions();
    let gamma = mdp.discount();
    let mut q = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            let future: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(values)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, v)| p * v)
                .sum();
            q[s * na + a] = mdp.reward(s, a) + gamma * future;
        }
    }
    q
}

/// Optimal state values by value iteration, run until the Bellman residual
/// is at most `tolerance`. Optionally warm-started.
pub fn optimal_values(
    mdp: &TabularMdp,
    tolerance: f64,
    warm_start: Option<&[f64]>,
    max_iterations: usize,
) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let na = mdp.num_actions();
    let gamma = mdp.discount();

    // a proper policy exists iff some action sequence reaches a terminal state
    let mut any_action = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..na {
            for (t, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p > 0.0 {
                    any_action[s * n + t] = 1.0;
                }
            }
        }
    }
    let reach = can_reach_terminal(n, &any_action, |s| mdp.is_terminal(s));
    if let Some(s) = (0..n).find(|&s| mdp.start_dist()[s] > 0.0 && !reach[s]) {
        return Err(Error::NoProperPolicy(format!("no terminal state is reachable from start state {s}")));
    }

    let mut values = match warm_start {
        Some(v) if v.len() == n => v.iter().map(|x| if x.is_finite() { *x } else { 0.0 }).collect(),
        _ => vec![0.0; n],
    };
    for s in 0..n {
        if mdp.is_terminal(s) {
            values[s] = 0.0;
        }
    }
    for _ in 0..max_iterations {
        let mut residual: f64 = 0.0;
        let mut next = values.clone();
        for s in 0..n {
            if mdp.is_terminal(s) || !reach[s] {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let future: f64 = mdp
                    .transition_row(s, a)
                    .iter()
                    .zip(&values)
                    .filter(|(p, _)| **p > 0.0)
                    .map(|(p, v)| p * v)
                    .sum();
                best = best.max(mdp.reward(s, a) + gamma * future);
            }
            residual = residual.max((best - values[s]).abs());
            next[s] = best;
        }
        values = next;
        if !residual.is_finite() {
            return Err(Error::Evaluation("value iteration diverged".into()));
        }
        if residual <= tolerance {
            return Ok(values);
        }
    }
    Err(Error::Evaluation(format!(
        "value iteration did not reach residual {tolerance} within {max_iterations} sweeps"
    )))
}

/// Greedy deterministic actions from action values, breaking ties (within
/// `tie_tolerance`) by the first action in `preference`.
pub fn greedy_actions(mdp: &TabularMdp, values: &[f64], preference: &[usize], tie_tolerance: f64) -> Vec<usize> {
    let q = action_values(mdp, values);
    let na = mdp.num_actions();
    (0..mdp.num_states())
        .map(|s| {
            let row = &q[s * na..(s + 1) * na];
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            preference
                .iter()
                .copied()
                .find(|&a| row[a] >= best - tie_tolerance)
                .unwrap_or(preference[0])
        })
        .collect()
}

fn random_simplex(rng: &mut StreamRng, len: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..len)
            .map(|_| if rng.gen::<f64>() < sparsity { 0.0 } else { rng.gen::<f64>() + 0.05 })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // absorb rounding so the row sums to 1 to machine precision
            let drift: f64 = 1.0 - row.iter().sum::<f64>();
            let idx = row.iter().position(|&x| x > 0.0).unwrap();
            row[idx] += drift;
            return row;
        }
    }
}

/// Seeded random MDP and policy: the last state is terminal, every
/// transition row leaks at least 0.1 to it, and start mass sits on the
/// other states.
pub fn random_instance(
    seed: u64,
    states: usize,
    actions: usize,
    discount: f64,
) -> Result<(TabularMdp, StochasticPolicy)> {
    if states < 2 || actions == 0 {
        return Err(Error::Config(format!("random instance needs at least 2 states and 1 action, got {states}, {actions}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut transition = Vec::new();
    for _ in 0..states * actions {
        transition.extend(random_simplex(&mut rng, states, 0.3));
    }
    // every state leaks to the terminal so discount 1 is also well posed
    for s in 0..states {
        for a in 0..actions {
            let row = &mut transition[(s * actions + a) * states..(s * actions + a + 1) * states];
            if row[states - 1] == 0.0 {
                let give = 0.1;
                for x in row.iter_mut() {
                    *x *= 1.0 - give;
                }
                row[states - 1] += give;
                let drift: f64 = 1.0 - row.iter().sum::<f64>();
                row[states - 1] += drift;
            }
        }
    }
    let reward: Vec<f64> = (0..states * actions).map(|_| rng.gen_range(-2.0..1.0)).collect();
    let mut start = random_simplex(&mut rng, states - 1, 0.0);
    start.push(0.0);
    let mdp = TabularMdp::new(states, actions, transition, reward, discount, start, &[states - 1])?;
    let mut probs = Vec::new();
    for _ in 0..states {
        probs.extend(random_simplex(&mut rng, actions, 0.2));
    }
    let policy = StochasticPolicy::new(states, actions, probs)?;
    Ok((mdp, policy))
}
