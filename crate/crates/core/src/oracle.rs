//! Exhaustive search for the map that maximizes a deterministic agent's
//! path length, used as ground truth for generator training.

use rayon::prelude::*;

use crate::agents::{build_agent, evaluate_agent, AgentKind, AgentSettings};
use crate::error::{Error, Result};
use crate::hard_maze::MazeMap;

/// Largest side the oracle accepts (`2^(n^2-2)` candidate wall sets).
pub const MAX_ORACLE_SIDE: usize = 5;

/// Bitboard geometry of an `n x n` grid, bit `i` is cell index `i`.
#[derive(Debug, Clone, Copy)]
struct Board {
    side: usize,
    full: u64,
    not_first_col: u64,
    not_last_col: u64,
}

impl Board {
    fn new(side: usize) -> Self {
        let cells = side * side;
        let full = if cells == 64 { u64::MAX } else { (1u64 << cells) - 1 };
        let mut first = 0u64;
        let mut last = 0u64;
        for r in 0..side {
            first |= 1 << (r * side);
            last |= 1 << (r * side + side - 1);
        }
        Self { side, full, not_first_col: full & !first, not_last_col: full & !last }
    }

    fn expand(&self, x: u64) -> u64 {
        let n = self.side;
        let east = (x & self.not_last_col) << 1;
        let west = (x & self.not_first_col) >> 1;
        let south = x << n;
        let north = x >> n;
        (x | east | west | south | north) & self.full
    }

    /// Breadth-first distance from cell 0 to the last cell over `free`.
    fn distance(&self, free: u64) -> Option<usize> {
        let end = 1u64 << (self.side * self.side - 1);
        let mut reached = 1u64;
        let mut steps = 0;
        while reached & end == 0 {
            let next = self.expand(reached) & free;
            if next == reached {
                return None;
            }
            reached = next;
            steps += 1;
        }
        Some(steps)
    }
}

/// Shortest start-to-end distance of a map via the bitboard search.
pub fn bitboard_shortest_path(map: &MazeMap) -> Option<usize> {
    let board = Board::new(map.side());
    board.distance(board.full & !map.to_bits())
}

/// Number of wall subsets the oracle would enumerate for `side`.
pub fn configuration_count(side: usize) -> u128 {
    1u128 << (side * side).saturating_sub(2)
}

/// Exhaustively finds the valid map maximizing the agent's steps. Ties keep
/// the map whose wall bitmask is smallest.
pub fn brute_force_max_maze(side: usize, agent: AgentKind, max_steps: usize) -> Result<(MazeMap, f64)> {
    if side < 2 {
        return Err(Error::Config(format!("oracle side must be at least 2, got {side}")));
    }
    if side > MAX_ORACLE_SIDE {
        return Err(Error::Config(format!(
            "oracle refuses side {side}: {} configurations exceed the side-{MAX_ORACLE_SIDE} limit",
            configuration_count(side)
        )));
    }
    if !agent.is_deterministic() {
        return Err(Error::Config(format!("oracle needs a deterministic agent, not {agent}")));
    }
    let board = Board::new(side);
    let interior = side * side - 2;
    let settings = AgentSettings::default();
    let score = |free: u64, walls: u64| -> Result<Option<f64>> {
        let Some(distance) = board.distance(free) else {
            return Ok(None);
        };
        if agent == AgentKind::Optimal {
            return Ok(Some(distance as f64));
        }
        let map = MazeMap::from_bits(side, walls)?;
        let mut runner = build_agent(agent, &map, &settings, 0)?;
        Ok(Some(evaluate_agent(&map, runner.as_mut(), max_steps, 0, 1)?))
    };
    let chunk_bits = interior.min(12);
    let chunks = 1u64 << (interior - chunk_bits);
    let best = (0..chunks)
        .into_par_iter()
        .map(|high| -> Result<Option<(f64, u64)>> {
            let mut best: Option<(f64, u64)> = None;
            for low in 0..(1u64 << chunk_bits) {
                let subset = (high << chunk_bits) | low;
                let walls = subset << 1;
                let free = board.full & !walls;
                if let Some(s) = score(free, walls)? {
                    if best.is_none_or(|(b, _)| s > b) {
                        best = Some((s, walls));
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<(f64, u64)>, (s, w)| match acc {
            Some((b, bw)) if b > s || (b == s && bw < w) => Some((b, bw)),
            _ => Some((s, w)),
        })
        .expect("the empty map is always valid");
    Ok((MazeMap::from_bits(side, best.1)?, best.0))
}
