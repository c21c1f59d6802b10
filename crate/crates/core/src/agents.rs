//! Maze-solving adversaries: optimal (breadth-first), depth-first search,
//! right-hand wall follower and tabular Q-learning.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::grid::{Cell, Direction};
use crate::hard_maze::{maze_mdp, MazeMap};
use crate::mdp::{StochasticPolicy, TabularMdp};
use crate::seed::rng_from_seed;

/// Priority used by the depth-first agent and for optimal-agent ties.
pub const SEARCH_PRIORITY: [Direction; 4] = [Direction::East, Direction::South, Direction::North, Direction::West];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Optimal,
    Dfs,
    Rhs,
    QLearning,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Optimal, AgentKind::Dfs, AgentKind::Rhs, AgentKind::QLearning];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Optimal => "optimal",
            AgentKind::Dfs => "dfs",
            AgentKind::Rhs => "rhs",
            AgentKind::QLearning => "q_learning",
        }
    }

    pub fn is_deterministic(self) -> bool {
        !matches!(self, AgentKind::QLearning)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "optimal" | "opt" => Ok(AgentKind::Optimal),
            "dfs" => Ok(AgentKind::Dfs),
            "rhs" => Ok(AgentKind::Rhs),
            "q_learning" | "q" | "dqn" | "q-learning" => Ok(AgentKind::QLearning),
            other => Err(Error::Config(format!("unknown agent kind {other:?}"))),
        }
    }
}

/// A stateful maze solver acting on hard-wall maps.
pub trait MazeAgent {
    /// Clears per-episode memory.
    fn reset(&mut self, map: &MazeMap);

    fn act(&mut self, map: &MazeMap, position: Cell, rng: &mut dyn RngCore) -> Result<Direction>;
}

/// Greedy breadth-first actions per cell, ties broken E, S, N, W. Cells
/// that cannot reach the end default to East.
pub fn opt_actions(map: &MazeMap) -> Result<Vec<Direction>> {
    let n = map.side();
    let dist = map.distances_from(map.end());
    if dist[map.start().index(n)].is_none() {
        return Err(Error::Agent("end is unreachable from start".into()));
    }
    Ok((0..n * n)
        .map(|i| {
            let cell = Cell::from_index(i, n);
            let here = match dist[i] {
                Some(d) if d > 0 && !map.is_wall(cell) => d,
                _ => return Direction::East,
            };
            SEARCH_PRIORITY
                .into_iter()
                .find(|&dir| map.free_neighbor(cell, dir).is_some_and(|c| dist[c.index(n)] == Some(here - 1)))
                .unwrap_or(Direction::East)
        })
        .collect())
}

/// The optimal agent as a deterministic policy over the maze MDP.
pub fn opt_policy(map: &MazeMap) -> Result<StochasticPolicy> {
    let actions: Vec<usize> = opt_actions(map)?.into_iter().map(Direction::action).collect();
    StochasticPolicy::deterministic(&actions, 4)
}

pub struct OptAgent {
    actions: Vec<Direction>,
}

impl OptAgent {
    pub fn new(map: &MazeMap) -> Result<Self> {
        Ok(Self { actions: opt_actions(map)? })
    }
}

impl MazeAgent for OptAgent {
    fn reset(&mut self, _map: &MazeMap) {}

    fn act(&mut self, map: &MazeMap, position: Cell, _rng: &mut dyn RngCore) -> Result<Direction> {
        Ok(self.actions[position.index(map.side())])
    }
}

/// Depth-first search memory: visited cells and the path back to start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfsMemory {
    pub visited: Vec<bool>,
    pub stack: Vec<Cell>,
}

impl DfsMemory {
    pub fn new(map: &MazeMap) -> Self {
        let mut visited = vec![false; map.num_cells()];
        visited[map.start().index(map.side())] = true;
        Self { visited, stack: Vec::new() }
    }
}

fn direction_between(from: Cell, to: Cell) -> Option<Direction> {
    Direction::ALL.into_iter().find(|&d| {
        let (dr, dc) = d.delta();
        from.row as isize + dr == to.row as isize && from.col as isize + dc == to.col as isize
    })
}

/// One depth-first step: the highest-priority move into a blank unvisited
/// cell, otherwise one step back toward the cell it came from.
pub fn dfs_step(map: &MazeMap, position: Cell, memory: &mut DfsMemory) -> Result<Direction> {
    let n = map.side();
    for dir in SEARCH_PRIORITY {
        if let Some(next) = map.free_neighbor(position, dir) {
            if !memory.visited[next.index(n)] {
                memory.visited[next.index(n)] = true;
                memory.stack.push(position);
                return Ok(dir);
            }
        }
    }
    let back = memory
        .stack
        .pop()
        .ok_or_else(|| Error::Agent(format!("depth-first search exhausted at {position} with an empty stack")))?;
    direction_between(position, back)
        .ok_or_else(|| Error::Agent(format!("depth-first stack top {back} is not adjacent to {position}")))
}

pub struct DfsAgent {
    memory: DfsMemory,
}

impl DfsAgent {
    pub fn new(map: &MazeMap) -> Self {
        Self { memory: DfsMemory::new(map) }
    }

    pub fn memory(&self) -> &DfsMemory {
        &self.memory
    }
}

impl MazeAgent for DfsAgent {
    fn reset(&mut self, map: &MazeMap) {
        self.memory = DfsMemory::new(map);
    }

    fn act(&mut self, map: &MazeMap, position: Cell, _rng: &mut dyn RngCore) -> Result<Direction> {
        dfs_step(map, position, &mut self.memory)
    }
}

/// One right-hand step. Returns the move direction, which is also the new heading.
pub fn rhs_step(map: &MazeMap, position: Cell, heading: Direction) -> Result<(Direction, Direction)> {
    let right = heading.turn_right();
    if map.free_neighbor(position, right).is_some() {
        return Ok((right, right));
    }
    if map.free_neighbor(position, heading).is_some() {
        return Ok((heading, heading));
    }
    let mut facing = heading;
    for _ in 0..3 {
        facing = facing.turn_left();
        if map.free_neighbor(position, facing).is_some() {
            return Ok((facing, facing));
        }
    }
    Err(Error::Agent(format!("cell {position} is enclosed on all sides")))
}

pub struct RhsAgent {
    initial_heading: Direction,
    heading: Direction,
}

impl RhsAgent {
    pub fn new(initial_heading: Direction) -> Self {
        Self { initial_heading, heading: initial_heading }
    }

    pub fn heading(&self) -> Direction {
        self.heading
    }
}

impl Default for RhsAgent {
    fn default() -> Self {
        Self::new(Direction::South)
    }
}

impl MazeAgent for RhsAgent {
    fn reset(&mut self, _map: &MazeMap) {
        self.heading = self.initial_heading;
    }

    fn act(&mut self, map: &MazeMap, position: Cell, _rng: &mut dyn RngCore) -> Result<Direction> {
        let (dir, heading) = rhs_step(map, position, self.heading)?;
        self.heading = heading;
        Ok(dir)
    }
}

/// Tabular Q-learning settings.
#[derive(Debug, Clone, PartialEq)]
pub struct QLearningConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    /// Exploration rate while training.
    pub epsilon: f64,
    /// Exploration rate kept in the returned policy.
    pub eval_epsilon: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self { episodes: 200, learning_rate: 0.5, epsilon: 0.2, eval_epsilon: 0.05, max_steps: 200, seed: 0 }
    }
}

/// A learned action-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub num_states: usize,
    pub num_actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, values: vec![0.0; num_states * num_actions] }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    fn max(&self, state: usize) -> f64 {
        self.row(state).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Epsilon-greedy policy; greedy mass is split evenly among tied maxima.
    pub fn epsilon_greedy(&self, epsilon: f64) -> Result<StochasticPolicy> {
        let na = self.num_actions;
        let mut probs = Vec::with_capacity(self.values.len());
        for s in 0..self.num_states {
            let best = self.max(s);
            let ties = self.row(s).iter().filter(|&&q| q == best).count() as f64;
            for &q in self.row(s) {
                let greedy = if q == best { (1.0 - epsilon) / ties } else { 0.0 };
                probs.push(greedy + epsilon / na as f64);
            }
            let start = probs.len() - na;
            let drift = 1.0 - probs[start..].iter().sum::<f64>();
            probs[start] += drift;
        }
        StochasticPolicy::new(self.num_states, na, probs)
    }
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
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

/// Continues Q-learning on an existing table for `config.episodes` episodes.
pub fn q_learning_continue<R: Rng + ?Sized>(mdp: &TabularMdp, table: &mut QTable, config: &QLearningConfig, rng: &mut R) {
    let na = mdp.num_actions();
    let gamma = mdp.discount();
    for _ in 0..config.episodes {
        let mut state = sample_row(mdp.start_dist(), rng);
        let mut steps = 0;
        while !mdp.is_terminal(state) && steps < config.max_steps {
            let action = if rng.gen::<f64>() < config.epsilon {
                rng.gen_range(0..na)
            } else {
                let best = table.max(state);
                let ties: Vec<usize> = (0..na).filter(|&a| table.get(state, a) == best).collect();
                ties[rng.gen_range(0..ties.len())]
            };
            let next = sample_row(mdp.transition_row(state, action), rng);
            let future = if mdp.is_terminal(next) { 0.0 } else { table.max(next) };
            let target = mdp.reward(state, action) + gamma * future;
            let q = &mut table.values[state * na + action];
            *q += config.learning_rate * (target - *q);
            state = next;
            steps += 1;
        }
    }
}

/// Tabular Q-learning from a zero table; returns the table and its
/// epsilon-greedy policy at `config.eval_epsilon`.
pub fn q_learning_train(mdp: &TabularMdp, config: &QLearningConfig) -> Result<(QTable, StochasticPolicy)> {
    let mut table = QTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut rng = rng_from_seed(config.seed);
    q_learning_continue(mdp, &mut table, config, &mut rng);
    if table.values.iter().any(|q| !q.is_finite()) {
        return Err(Error::Agent("Q-learning produced non-finite values".into()));
    }
    let policy = table.epsilon_greedy(config.eval_epsilon)?;
    Ok((table, policy))
}

/// Samples moves from a stochastic policy over the maze MDP.
pub struct PolicyAgent {
    policy: StochasticPolicy,
}

impl PolicyAgent {
    pub fn new(policy: StochasticPolicy) -> Self {
        Self { policy }
    }

    pub fn policy(&self) -> &StochasticPolicy {
        &self.policy
    }
}

impl MazeAgent for PolicyAgent {
    fn reset(&mut self, _map: &MazeMap) {}

    fn act(&mut self, map: &MazeMap, position: Cell, mut rng: &mut dyn RngCore) -> Result<Direction> {
        let action = sample_row(self.policy.row(position.index(map.side())), &mut rng);
        Ok(Direction::from_action(action).expect("maze policies have four actions"))
    }
}

/// Settings needed to instantiate any agent kind on a map.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSettings {
    pub rhs_heading: Direction,
    pub q: QLearningConfig,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self { rhs_heading: Direction::South, q: QLearningConfig::default() }
    }
}

/// Builds (and for Q-learning, trains) an agent for `map`.
pub fn build_agent(kind: AgentKind, map: &MazeMap, settings: &AgentSettings, seed: u64) -> Result<Box<dyn MazeAgent>> {
    Ok(match kind {
        AgentKind::Optimal => Box::new(OptAgent::new(map)?),
        AgentKind::Dfs => Box::new(DfsAgent::new(map)),
        AgentKind::Rhs => Box::new(RhsAgent::new(settings.rhs_heading)),
        AgentKind::QLearning => {
            let mdp = maze_mdp(map, -1.0, 1.0)?;
            let config = QLearningConfig { seed, ..settings.q.clone() };
            let (_, policy) = q_learning_train(&mdp, &config)?;
            Box::new(PolicyAgent::new(policy))
        }
    })
}

/// Runs one episode from the start and returns the visited cells.
pub fn run_episode(map: &MazeMap, agent: &mut dyn MazeAgent, max_steps: usize, rng: &mut dyn RngCore) -> Result<Vec<Cell>> {
    agent.reset(map);
    let mut position = map.start();
    let mut path = vec![position];
    while position != map.end() && path.len() <= max_steps {
        let dir = agent.act(map, position, rng)?;
        position = map.move_from(position, dir);
        path.push(position);
    }
    Ok(path)
}

/// Mean realized steps over `episodes` runs, each capped at `max_steps`.
pub fn evaluate_agent(map: &MazeMap, agent: &mut dyn MazeAgent, max_steps: usize, seed: u64, episodes: usize) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut total = 0usize;
    for _ in 0..episodes {
        total += run_episode(map, agent, max_steps, &mut rng)?.len() - 1;
    }
    Ok(total as f64 / episodes as f64)
}
