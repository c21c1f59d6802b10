//! The dual MDP-policy pair.
//!
//! Given an MDP `M` and agent policy `pi`, the dual MDP has composite states
//! `<s, a>` (indexed row-major, `s * |A| + a`) and actions that name the
//! successor state. The dual policy is the original transition function and
//! the dual transition is the agent policy. Composite states whose state
//! component is terminal are terminal in the dual: choosing a terminal
//! successor ends the dual episode.

use crate::error::{Error, Result};
use crate::mdp::{
    action_values, episode_return, exact_policy_value, expected_return, state_occupancy, trajectory_probability,
    StochasticPolicy, Step, TabularMdp, Trajectory,
};

/// An MDP whose transition rows are differentiable in a parameter vector.
pub trait LearnableTransition {
    fn num_params(&self) -> usize;

    /// The MDP at the current parameters.
    fn mdp(&self) -> &TabularMdp;

    /// `d P(s, a, s') / d theta_k` as a row-major `num_states x num_params`
    /// block, or `None` when the row is not differentiable.
    fn row_jacobian(&self, state: usize, action: usize) -> Option<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct DualPair {
    dual_mdp: TabularMdp,
    dual_policy: StochasticPolicy,
    base_states: usize,
    base_actions: usize,
    terminal_actions: Vec<usize>,
}

impl DualPair {
    pub fn dual_mdp(&self) -> &TabularMdp {
        &self.dual_mdp
    }

    pub fn dual_policy(&self) -> &StochasticPolicy {
        &self.dual_policy
    }

    /// Dual actions that correspond to terminal states of the original MDP.
    pub fn terminal_actions(&self) -> &[usize] {
        &self.terminal_actions
    }

    /// Dual state index of the pair `<state, action>`.
    pub fn composite_index(&self, state: usize, action: usize) -> usize {
        state * self.base_actions + action
    }

    /// The `<state, action>` pair behind a dual state index.
    pub fn composite(&self, index: usize) -> (usize, usize) {
        (index / self.base_actions, index % self.base_actions)
    }

    pub fn base_states(&self) -> usize {
        self.base_states
    }

    pub fn base_actions(&self) -> usize {
        self.base_actions
    }
}

/// Builds the dual pair of `(mdp, policy)`.
pub fn build_dual(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<DualPair> {
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    if policy.num_states() != ns || policy.num_actions() != na {
        return Err(Error::Config("policy and MDP dimensions disagree".into()));
    }
    let terminal_actions = mdp.terminal_states();
    if terminal_actions.is_empty() && mdp.discount() >= 1.0 {
        return Err(Error::Config("the dual needs a terminal state or discount below 1".into()));
    }
    let dual_states = ns * na;
    let dual_actions = ns;

    let mut transition = vec![0.0; dual_states * dual_actions * dual_states];
    let mut reward = vec![0.0; dual_states * dual_actions];
    let mut dual_probs = vec![0.0; dual_states * dual_actions];
    for s in 0..ns {
        for a in 0..na {
            let i = s * na + a;
            for next in 0..ns {
                let row = (i * dual_actions + next) * dual_states;
                for next_action in 0..na {
                    transition[row + next * na + next_action] = policy.prob(next, next_action);
                }
                reward[i * dual_actions + next] = mdp.reward(s, a);
                dual_probs[i * dual_actions + next] = mdp.transition(s, a, next);
            }
        }
    }
    let start: Vec<f64> = (0..dual_states).map(|i| mdp.start_dist()[i / na] * policy.prob(i / na, i % na)).collect();
    let dual_terminals: Vec<usize> =
        (0..dual_states).filter(|&i| mdp.is_terminal(i / na)).collect();
    let dual_mdp =
        TabularMdp::new(dual_states, dual_actions, transition, reward, mdp.discount(), start, &dual_terminals)?;
    let dual_policy = StochasticPolicy::new(dual_states, dual_actions, dual_probs)?;
    Ok(DualPair { dual_mdp, dual_policy, base_states: ns, base_actions: na, terminal_actions })
}

/// Maps a completed original episode onto the dual: step `t` becomes
/// `(<S_t, A_t>, S_{t+1}, R_t)`. The final dual successor is not recorded.
pub fn map_trajectory(traj: &Trajectory, pair: &DualPair) -> Result<Trajectory> {
    if !traj.terminated {
        return Err(Error::Mapping("episode was truncated by the step cap".into()));
    }
    let final_state = traj
        .final_state
        .ok_or_else(|| Error::Mapping("episode does not record its final state".into()))?;
    if traj.is_empty() {
        return Err(Error::Mapping("episode started in a terminal state and has no steps".into()));
    }
    let mut steps = Vec::with_capacity(traj.len());
    for (t, step) in traj.steps.iter().enumerate() {
        if step.state >= pair.base_states || step.action >= pair.base_actions {
            return Err(Error::Mapping(format!("step {t} indexes outside the original MDP")));
        }
        let next = traj.steps.get(t + 1).map_or(final_state, |s| s.state);
        steps.push(Step { state: pair.composite_index(step.state, step.action), action: next, reward: step.reward });
    }
    Ok(Trajectory { steps, final_state: None, terminated: true })
}

/// Inverse of [`map_trajectory`]; rejects sequences outside the dual
/// transition support.
pub fn inverse_map_trajectory(traj: &Trajectory, pair: &DualPair) -> Result<Trajectory> {
    let dual = pair.dual_mdp();
    if traj.is_empty() {
        return Err(Error::Mapping("dual trajectory has no steps".into()));
    }
    let mut steps = Vec::with_capacity(traj.len());
    for (t, step) in traj.steps.iter().enumerate() {
        if step.state >= dual.num_states() || step.action >= dual.num_actions() {
            return Err(Error::Mapping(format!("dual step {t} indexes outside the dual MDP")));
        }
        if let Some(next) = traj.steps.get(t + 1) {
            if next.state >= dual.num_states() || dual.transition(step.state, step.action, next.state) == 0.0 {
                return Err(Error::Mapping(format!(
                    "dual step {t} -> {}: composite successor outside the transition support",
                    t + 1
                )));
            }
        }
        let (state, action) = pair.composite(step.state);
        steps.push(Step { state, action, reward: step.reward });
    }
    let last = traj.steps.last().unwrap().action;
    Ok(Trajectory {
        steps,
        final_state: Some(last),
        terminated: pair.terminal_actions.contains(&last),
    })
}

/// One line of a duality report.
#[derive(Debug, Clone, PartialEq)]
pub struct DualityCheck {
    pub name: &'static str,
    pub max_deviation: f64,
    pub passed: bool,
    /// Informational checks do not affect the overall verdict.
    pub gating: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub checks: Vec<DualityCheck>,
    pub trajectories_checked: usize,
    pub tolerance: f64,
}

impl DualityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.gating).all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&DualityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Flat `key = value` record, one check per pair of lines.
    pub fn to_record(&self, prefix: &str) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!("{prefix}{}.max_deviation = {:e}\n", c.name, c.max_deviation));
            out.push_str(&format!("{prefix}{}.status = {}\n", c.name, if c.passed { "pass" } else { "fail" }));
        }
        out
    }
}

/// Every completed episode with 1 to `max_len` steps (and recorded final state).
fn completed_episodes(mdp: &TabularMdp, max_len: usize) -> Vec<Trajectory> {
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    fn rec(mdp: &TabularMdp, max_len: usize, prefix: &mut Vec<Step>, out: &mut Vec<Trajectory>) {
        if !prefix.is_empty() {
            for fin in mdp.terminal_states() {
                out.push(Trajectory { steps: prefix.clone(), final_state: Some(fin), terminated: true });
            }
        }
        if prefix.len() == max_len {
            return;
        }
        for s in (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)) {
            for a in 0..mdp.num_actions() {
                prefix.push(Step { state: s, action: a, reward: mdp.reward(s, a) });
                rec(mdp, max_len, prefix, out);
                prefix.pop();
            }
        }
    }
    rec(mdp, max_len, &mut prefix, &mut out);
    out
}

/// Numerically checks the three duality properties on `(mdp, policy)`:
/// equal trajectory probabilities over all completed episodes of up to four
/// steps, equal per-trajectory returns, and equal expected returns.
pub fn verify_duality(mdp: &TabularMdp, policy: &StochasticPolicy, tolerance: f64) -> Result<DualityReport> {
    const MAX_LEN: usize = 4;
    let pair = build_dual(mdp, policy)?;
    let dual = pair.dual_mdp();
    let dual_policy = pair.dual_policy();

    let episodes = completed_episodes(mdp, MAX_LEN);
    let mut prob_dev: f64 = 0.0;
    let mut return_dev: f64 = 0.0;
    for traj in &episodes {
        let mapped = map_trajectory(traj, &pair)?;
        let p_orig = trajectory_probability(mdp, policy, traj);
        let p_dual = trajectory_probability(dual, dual_policy, &mapped);
        prob_dev = prob_dev.max((p_orig - p_dual).abs());
        let g_orig = episode_return(traj, mdp.discount());
        let g_dual = episode_return(&mapped, dual.discount());
        return_dev = return_dev.max((g_orig - g_dual).abs());
    }

    // prefixes that have not terminated yet, mapped step by step
    let mut prefix_dev: f64 = 0.0;
    for traj in &episodes {
        for cut in 1..traj.len() {
            let next = traj.steps[cut].state;
            let prefix = Trajectory { steps: traj.steps[..cut].to_vec(), final_state: Some(next), terminated: false };
            let dual_prefix = Trajectory {
                steps: traj.steps[..cut]
                    .iter()
                    .enumerate()
                    .map(|(t, s)| Step {
                        state: pair.composite_index(s.state, s.action),
                        action: traj.steps[t + 1].state,
                        reward: s.reward,
                    })
                    .collect(),
                final_state: None,
                terminated: false,
            };
            let p_orig = trajectory_probability(mdp, policy, &prefix);
            let p_dual = trajectory_probability(dual, dual_policy, &dual_prefix);
            prefix_dev = prefix_dev.max((p_orig - p_dual).abs());
        }
    }

    let return_a = expected_return(mdp, policy)?;
    let return_e = expected_return(dual, dual_policy)?;
    let expected_dev = (return_a - return_e).abs();

    let check = |name, dev: f64, gating| DualityCheck { name, max_deviation: dev, passed: dev <= tolerance, gating };
    Ok(DualityReport {
        checks: vec![
            check("trajectory_probability", prob_dev, true),
            check("trajectory_return", return_dev, true),
            check("expected_return", expected_dev, true),
            check("prefix_probability", prefix_dev, false),
        ],
        trajectories_checked: episodes.len(),
        tolerance,
    })
}

/// Gradient of the agent's expected return with respect to the transition
/// parameters, obtained by applying the policy-gradient theorem to the dual
/// policy in the explicitly constructed dual MDP:
/// `sum_{s^E} d^E(s^E) sum_{a^E} d pi^E(a^E | s^E) Q^E(s^E, a^E)`.
pub fn dual_policy_gradient(model: &dyn LearnableTransition, agent_policy: &StochasticPolicy) -> Result<Vec<f64>> {
    let mdp = model.mdp();
    let k = model.num_params();
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let pair = build_dual(mdp, agent_policy)?;
    let dual = pair.dual_mdp();
    let dual_values = exact_policy_value(dual, pair.dual_policy())?;
    let occupancy = state_occupancy(dual, pair.dual_policy())?;
    let dual_q = action_values(dual, &dual_values.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect::<Vec<_>>());

    let mut grad = vec![0.0; k];
    for i in 0..dual.num_states() {
        if occupancy[i] == 0.0 {
            continue;
        }
        let (s, a) = pair.composite(i);
        let jac = model
            .row_jacobian(s, a)
            .ok_or_else(|| Error::UnsupportedParametrization(format!("row ({s}, {a}) has no Jacobian")))?;
        if jac.len() != ns * k {
            return Err(Error::UnsupportedParametrization(format!(
                "row ({s}, {a}) Jacobian has {} entries, expected {}",
                jac.len(),
                ns * k
            )));
        }
        for next in 0..ns {
            let q = dual_q[i * ns + next];
            let weight = occupancy[i] * q;
            if weight == 0.0 {
                continue;
            }
            for (g, d) in grad.iter_mut().zip(&jac[next * k..(next + 1) * k]) {
                *g += weight * d;
            }
        }
    }
    let _ = na;
    Ok(grad)
}
