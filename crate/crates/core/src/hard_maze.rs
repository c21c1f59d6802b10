//! Hard-wall mazes: occupancy maps, connectivity, shortest paths, the
//! deterministic MDP view and the text map format.
//!
//! The map file format is a line holding the side `n` followed by `n`
//! lines of `n` characters from `#` (wall), `.` (free), `S`, `E`.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::grid::{Cell, Direction};
use crate::mdp::{TabularMdp, Trajectory};

/// Why a wall could not be placed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WallError {
    #[error("cell {0} is outside the grid")]
    OutOfGrid(Cell),
    #[error("cell {0} already holds a wall")]
    Occupied(Cell),
    #[error("cell {0} is the start or end cell")]
    Protected(Cell),
    #[error("a wall at {0} would disconnect start from end")]
    Disconnecting(Cell),
}

/// An `n x n` occupancy grid with start at the north-west corner and end at
/// the south-east corner.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MazeMap {
    side: usize,
    walls: Vec<bool>,
}

impl fmt::Debug for MazeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MazeMap({}x{})\n{}", self.side, self.side, render_ascii(self, None))
    }
}

impl MazeMap {
    pub fn empty(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::Config(format!("maze side must be at least 2, got {side}")));
        }
        Ok(Self { side, walls: vec![false; side * side] })
    }

    /// Builds a map from a row-major wall grid. Connectivity is not required.
    pub fn from_walls(side: usize, walls: Vec<bool>) -> Result<Self> {
        let mut map = Self::empty(side)?;
        if walls.len() != side * side {
            return Err(Error::Config(format!("wall grid has {} cells, expected {}", walls.len(), side * side)));
        }
        if walls[0] || walls[side * side - 1] {
            return Err(Error::Config("start and end cells cannot be walls".into()));
        }
        map.walls = walls;
        Ok(map)
    }

    /// Bit `i` set means cell index `i` is a wall.
    pub fn from_bits(side: usize, bits: u64) -> Result<Self> {
        let walls = (0..side * side).map(|i| bits >> i & 1 == 1).collect();
        Self::from_walls(side, walls)
    }

    pub fn to_bits(&self) -> u64 {
        self.walls.iter().enumerate().filter(|(_, w)| **w).fold(0u64, |acc, (i, _)| acc | 1 << i)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn start(&self) -> Cell {
        Cell::new(0, 0)
    }

    pub fn end(&self) -> Cell {
        Cell::new(self.side - 1, self.side - 1)
    }

    pub fn num_cells(&self) -> usize {
        self.side * self.side
    }

    pub fn in_grid(&self, cell: Cell) -> bool {
        cell.row < self.side && cell.col < self.side
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls[cell.index(self.side)]
    }

    /// In-grid and not a wall.
    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_grid(cell) && !self.is_wall(cell)
    }

    pub fn walls(&self) -> &[bool] {
        &self.walls
    }

    pub fn wall_count(&self) -> usize {
        self.walls.iter().filter(|w| **w).count()
    }

    /// Free neighbour reached by moving `dir`, if any.
    pub fn free_neighbor(&self, cell: Cell, dir: Direction) -> Option<Cell> {
        cell.step(dir, self.side).filter(|&c| !self.is_wall(c))
    }

    /// Cell reached by attempting `dir`: walls and the border cause no movement.
    pub fn move_from(&self, cell: Cell, dir: Direction) -> Cell {
        self.free_neighbor(cell, dir).unwrap_or(cell)
    }

    /// Breadth-first distances from `source` over free cells.
    pub fn distances_from(&self, source: Cell) -> Vec<Option<usize>> {
        let n = self.side;
        let mut dist = vec![None; n * n];
        if self.is_wall(source) {
            return dist;
        }
        dist[source.index(n)] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell.index(n)].unwrap();
            for dir in Direction::ALL {
                if let Some(next) = self.free_neighbor(cell, dir) {
                    if dist[next.index(n)].is_none() {
                        dist[next.index(n)] = Some(d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
        dist
    }

    /// The map with `cell` walled, if that keeps the map valid.
    pub fn place_wall(&self, cell: Cell) -> Result<MazeMap, WallError> {
        if !self.in_grid(cell) {
            return Err(WallError::OutOfGrid(cell));
        }
        if cell == self.start() || cell == self.end() {
            return Err(WallError::Protected(cell));
        }
        if self.is_wall(cell) {
            return Err(WallError::Occupied(cell));
        }
        let mut next = self.clone();
        next.walls[cell.index(self.side)] = true;
        if !is_connected(&next) {
            return Err(WallError::Disconnecting(cell));
        }
        Ok(next)
    }

    /// Transposed copy (rows and columns swapped); start and end are fixed.
    pub fn transposed(&self) -> MazeMap {
        let n = self.side;
        let walls = (0..n * n).map(|i| self.is_wall(Cell::from_index(i, n).transposed())).collect();
        MazeMap { side: n, walls }
    }

    /// Serializes into the map file format.
    pub fn to_file_string(&self) -> String {
        format!("{}\n{}\n", self.side, render_ascii(self, None))
    }

    /// Parses the map file format.
    pub fn from_file_str(text: &str) -> Result<MazeMap> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty map file".into()))?;
        let side: usize = header
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad side line {header:?}")))?;
        let body: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();
        let map = parse_ascii(&body.join("\n"))?;
        if map.side != side {
            return Err(Error::Parse(format!("header says {side}, grid is {}", map.side)));
        }
        Ok(map)
    }
}

/// Whether a start-to-end path over free cells exists.
pub fn is_connected(map: &MazeMap) -> bool {
    map.distances_from(map.start())[map.end().index(map.side())].is_some()
}

/// Breadth-first distance from start to end; `None` when unreachable.
pub fn shortest_path_length(map: &MazeMap) -> Option<usize> {
    map.distances_from(map.start())[map.end().index(map.side())]
}

/// Cells lying on at least one shortest start-to-end path.
pub fn shortest_path_cells(map: &MazeMap) -> Vec<Cell> {
    let n = map.side();
    let from_start = map.distances_from(map.start());
    let from_end = map.distances_from(map.end());
    let Some(length) = from_start[map.end().index(n)] else {
        return Vec::new();
    };
    (0..n * n)
        .filter(|&i| matches!((from_start[i], from_end[i]), (Some(a), Some(b)) if a + b == length))
        .map(|i| Cell::from_index(i, n))
        .collect()
}

/// True when the shortest path is unique, i.e. the cells on shortest paths
/// form one simple path.
pub fn is_fork_free(map: &MazeMap) -> bool {
    match shortest_path_length(map) {
        Some(length) => shortest_path_cells(map).len() == length + 1,
        None => false,
    }
}

/// Deterministic MDP over all cells with actions N, S, W, E. Moves into walls
/// or off the grid stay put; every step emits `step_reward`; end is terminal.
pub fn maze_mdp(map: &MazeMap, step_reward: f64, discount: f64) -> Result<TabularMdp> {
    let n = map.side();
    let cells = n * n;
    let mut transition = vec![0.0; cells * 4 * cells];
    for s in 0..cells {
        let cell = Cell::from_index(s, n);
        for dir in Direction::ALL {
            let next = map.move_from(cell, dir).index(n);
            transition[(s * 4 + dir.action()) * cells + next] = 1.0;
        }
    }
    let mut start = vec![0.0; cells];
    start[map.start().index(n)] = 1.0;
    TabularMdp::new(
        cells,
        4,
        transition,
        vec![step_reward; cells * 4],
        discount,
        start,
        &[map.end().index(n)],
    )
}

/// Cells visited by a maze-MDP trajectory, in order.
pub fn trajectory_cells(traj: &Trajectory, side: usize) -> Vec<Cell> {
    traj.states().into_iter().map(|s| Cell::from_index(s, side)).collect()
}

/// Fixed-width rendering: `#` wall, `.` free, `S` start, `E` end, `*` path.
pub fn render_ascii(map: &MazeMap, overlay_path: Option<&[Cell]>) -> String {
    let n = map.side();
    let mut grid: Vec<Vec<char>> = (0..n)
        .map(|r| (0..n).map(|c| if map.is_wall(Cell::new(r, c)) { '#' } else { '.' }).collect())
        .collect();
    if let Some(path) = overlay_path {
        for cell in path {
            if map.in_grid(*cell) && !map.is_wall(*cell) {
                grid[cell.row][cell.col] = '*';
            }
        }
    }
    grid[0][0] = 'S';
    grid[n - 1][n - 1] = 'E';
    grid.into_iter().map(|row| row.into_iter().collect::<String>()).collect::<Vec<_>>().join("\n")
}

/// Inverse of [`render_ascii`]; `*` reads as free.
pub fn parse_ascii(text: &str) -> Result<MazeMap> {
    let rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()).collect();
    let n = rows.len();
    if n < 2 {
        return Err(Error::Parse("a map needs at least two rows".into()));
    }
    let mut walls = Vec::with_capacity(n * n);
    for (r, row) in rows.iter().enumerate() {
        let chars: Vec<char> = row.chars().collect();
        if chars.len() != n {
            return Err(Error::Parse(format!("row {r} has {} characters, expected {n}", chars.len())));
        }
        for (c, ch) in chars.into_iter().enumerate() {
            let expected = match (r, c) {
                (0, 0) => Some('S'),
                _ if r == n - 1 && c == n - 1 => Some('E'),
                _ => None,
            };
            match (ch, expected) {
                ('S', Some('S')) | ('E', Some('E')) => walls.push(false),
                ('#', None) => walls.push(true),
                ('.' | '*', None) => walls.push(false),
                _ => return Err(Error::Parse(format!("unexpected {ch:?} at ({r}, {c})"))),
            }
        }
    }
    MazeMap::from_walls(n, walls)
}


#[cfg(test)]
mod tests {
    use super::testing::serpentine5;
    use super::*;
    use crate::mdp::{expected_return, StochasticPolicy};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fork_free_detection() {
        assert!(is_fork_free(&serpentine5()));
        assert_eq!(shortest_path_cells(&serpentine5()).len(), 17);
        assert!(!is_fork_free(&MazeMap::empty(3).unwrap()));
        assert_eq!(shortest_path_cells(&MazeMap::empty(3).unwrap()).len(), 9);
        assert!(is_fork_free(&parse_ascii("S..\n##.\n..E").unwrap()));
        assert!(!is_fork_free(&parse_ascii("S#\n#E").unwrap()));
    }

    fn random_map(rng: &mut ChaCha8Rng, side: usize, density: f64) -> MazeMap {
        let mut walls: Vec<bool> = (0..side * side).map(|_| rng.gen::<f64>() < density).collect();
        walls[0] = false;
        walls[side * side - 1] = false;
        MazeMap::from_walls(side, walls).unwrap()
    }

    /// Union-find connectivity oracle.
    fn union_find_connected(map: &MazeMap) -> bool {
        let n = map.side();
        let mut parent: Vec<usize> = (0..n * n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        for r in 0..n {
            for c in 0..n {
                if map.is_wall(Cell::new(r, c)) {
                    continue;
                }
                let here = r * n + c;
                if c + 1 < n && !map.is_wall(Cell::new(r, c + 1)) {
                    let (a, b) = (find(&mut parent, here), find(&mut parent, here + 1));
                    parent[a] = b;
                }
                if r + 1 < n && !map.is_wall(Cell::new(r + 1, c)) {
                    let (a, b) = (find(&mut parent, here), find(&mut parent, here + n));
                    parent[a] = b;
                }
            }
        }
        find(&mut parent, 0) == find(&mut parent, n * n - 1)
    }

    #[test]
    fn connectivity_basics() {
        assert!(is_connected(&MazeMap::empty(5).unwrap()));
        let mut walls = vec![false; 25];
        for c in 0..5 {
            walls[2 * 5 + c] = true;
        }
        let cut = MazeMap::from_walls(5, walls).unwrap();
        assert!(!is_connected(&cut));
        assert_eq!(shortest_path_length(&cut), None);
    }

    #[test]
    fn connectivity_matches_union_find() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for i in 0..1000 {
            let side = 3 + i % 6;
            let map = random_map(&mut rng, side, 0.35);
            assert_eq!(is_connected(&map), union_find_connected(&map), "{map:?}");
        }
    }

    #[test]
    fn shortest_paths() {
        assert_eq!(shortest_path_length(&MazeMap::empty(5).unwrap()), Some(8));
        assert_eq!(shortest_path_length(&MazeMap::empty(7).unwrap()), Some(12));
        assert_eq!(shortest_path_length(&serpentine5()), Some(16));
    }

    #[test]
    fn wall_placement_rules() {
        let empty = MazeMap::empty(5).unwrap();
        let one = empty.place_wall(Cell::new(2, 2)).unwrap();
        assert_eq!(shortest_path_length(&one), Some(8));
        assert_eq!(empty.place_wall(Cell::new(0, 0)), Err(WallError::Protected(Cell::new(0, 0))));
        assert_eq!(empty.place_wall(Cell::new(4, 4)), Err(WallError::Protected(Cell::new(4, 4))));
        assert_eq!(one.place_wall(Cell::new(2, 2)), Err(WallError::Occupied(Cell::new(2, 2))));
        assert_eq!(empty.place_wall(Cell::new(5, 0)), Err(WallError::OutOfGrid(Cell::new(5, 0))));
        // row 2 walled except the last column; closing it cuts the grid
        let mut map = empty;
        for c in 0..4 {
            map = map.place_wall(Cell::new(2, c)).unwrap();
        }
        let err = map.place_wall(Cell::new(2, 4)).unwrap_err();
        assert_eq!(err, WallError::Disconnecting(Cell::new(2, 4)));
        let mut candidate = map.walls().to_vec();
        candidate[2 * 5 + 4] = true;
        assert!(!union_find_connected(&MazeMap::from_walls(5, candidate).unwrap()));
    }

    #[test]
    fn mdp_view() {
        let empty = MazeMap::empty(4).unwrap();
        let mdp = maze_mdp(&empty, -1.0, 1.0).unwrap();
        // from the start, north is off-grid: stay put
        let row = mdp.transition_row(0, Direction::North.action());
        assert_eq!(row[0], 1.0);
        let serp = serpentine5();
        let mdp = maze_mdp(&serp, -1.0, 1.0).unwrap();
        // (0,0) moving south hits the wall at (1,0)
        assert_eq!(mdp.transition(0, Direction::South.action(), 0), 1.0);
        let opt = crate::agents::opt_policy(&serp).unwrap();
        assert_eq!(expected_return(&mdp, &opt).unwrap(), -16.0);
        let mdp = maze_mdp(&empty, -1.0, 1.0).unwrap();
        let opt = crate::agents::opt_policy(&empty).unwrap();
        assert_eq!(expected_return(&mdp, &opt).unwrap(), -6.0);
        let _ = StochasticPolicy::uniform(16, 4);
    }

    #[test]
    fn rendering() {
        let empty = MazeMap::empty(2).unwrap();
        assert_eq!(render_ascii(&empty, None), "S.\n.E");
        let walled = empty.place_wall(Cell::new(0, 1)).unwrap();
        assert_eq!(render_ascii(&walled, None), "S#\n.E");
        let serp = serpentine5();
        assert_eq!(parse_ascii(&render_ascii(&serp, None)).unwrap(), serp);
        assert_eq!(MazeMap::from_file_str(&serp.to_file_string()).unwrap(), serp);
        let path = [Cell::new(0, 0), Cell::new(1, 0), Cell::new(1, 1)];
        assert_eq!(render_ascii(&empty, Some(&path)), "S.\n*E");
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(parse_ascii("S.\n..").is_err());
        assert!(parse_ascii("S..\n.E").is_err());
        assert!(parse_ascii("#.\n.E").is_err());
        assert!(MazeMap::from_file_str("3\nS.\n.E\n").is_err());
    }

    #[test]
    fn bits_round_trip() {
        let serp = serpentine5();
        assert_eq!(MazeMap::from_bits(5, serp.to_bits()).unwrap(), serp);
    }

    proptest! {
        #[test]
        fn placement_keeps_maps_valid_and_paths_monotone(
            side in 3usize..8,
            cells in prop::collection::vec((0usize..8, 0usize..8), 0..60),
        ) {
            let mut map = MazeMap::empty(side).unwrap();
            let mut last = shortest_path_length(&map).unwrap();
            for (r, c) in cells {
                if let Ok(next) = map.place_wall(Cell::new(r, c)) {
                    prop_assert!(is_connected(&next));
                    prop_assert!(!next.is_wall(next.start()) && !next.is_wall(next.end()));
                    let len = shortest_path_length(&next).unwrap();
                    prop_assert!(len >= last);
                    last = len;
                    map = next;
                }
            }
        }

        #[test]
        fn optimal_return_is_minus_shortest_path(seed in 0u64..10_000, side in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let map = random_map(&mut rng, side, 0.3);
            prop_assume!(is_connected(&map));
            let mdp = maze_mdp(&map, -1.0, 1.0).unwrap();
            let opt = crate::agents::opt_policy(&map).unwrap();
            let ret = expected_return(&mdp, &opt).unwrap();
            prop_assert_eq!(ret, -(shortest_path_length(&map).unwrap() as f64));
        }
    }
}
