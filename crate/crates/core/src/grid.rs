//! Grid coordinates and compass directions shared by both maze kinds.

use std::fmt;

/// A cell addressed by row (north = 0) and column (west = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn index(self, side: usize) -> usize {
        self.row * side + self.col
    }

    pub fn from_index(index: usize, side: usize) -> Self {
        Self { row: index / side, col: index % side }
    }

    /// Neighbour in `dir`, or `None` when it would leave the grid.
    pub fn step(self, dir: Direction, side: usize) -> Option<Cell> {
        let (dr, dc) = dir.delta();
        let row = self.row as isize + dr;
        let col = self.col as isize + dc;
        if row < 0 || col < 0 || row >= side as isize || col >= side as isize {
            None
        } else {
            Some(Cell::new(row as usize, col as usize))
        }
    }

    pub fn transposed(self) -> Cell {
        Cell::new(self.col, self.row)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Compass direction. The discriminant is the MDP action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    North = 0,
    South = 1,
    West = 2,
    East = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::South, Direction::West, Direction::East];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::North => (-1, 0),
            Direction::South => (1, 0),
            Direction::West => (0, -1),
            Direction::East => (0, 1),
        }
    }

    pub fn action(self) -> usize {
        self as usize
    }

    pub fn from_action(action: usize) -> Option<Direction> {
        Self::ALL.get(action).copied()
    }

    pub fn turn_right(self) -> Direction {
        match self {
            Direction::North => Direction::East,
            Direction::East => Direction::South,
            Direction::South => Direction::West,
            Direction::West => Direction::North,
        }
    }

    pub fn turn_left(self) -> Direction {
        match self {
            Direction::North => Direction::West,
            Direction::West => Direction::South,
            Direction::South => Direction::East,
            Direction::East => Direction::North,
        }
    }

    pub fn opposite(self) -> Direction {
        self.turn_right().turn_right()
    }

    /// Direction with rows and columns swapped.
    pub fn transposed(self) -> Direction {
        match self {
            Direction::North => Direction::West,
            Direction::West => Direction::North,
            Direction::South => Direction::East,
            Direction::East => Direction::South,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Direction::North => 'N',
            Direction::South => 'S',
            Direction::West => 'W',
            Direction::East => 'E',
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s.trim().to_ascii_uppercase().as_str() {
            "N" | "NORTH" => Some(Direction::North),
            "S" | "SOUTH" => Some(Direction::South),
            "W" | "WEST" => Some(Direction::West),
            "E" | "EAST" => Some(Direction::East),
            _ => None,
        }
    }
}
