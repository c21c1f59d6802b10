//! Adversarial environment design on tabular MDPs.

pub mod agents;
pub mod dual;
pub mod error;
pub mod generator;
pub mod grid;
pub mod harness;
pub mod hard_maze;
pub mod mdp;
pub mod oracle;
pub mod seed;
pub mod soft_maze;

pub use error::{Error, Result};
pub use grid::{Cell, Direction};
pub use hard_maze::{MazeMap, WallError};
pub use mdp::{StochasticPolicy, Step, TabularMdp, Trajectory};
