use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("trajectory mapping error: {0}")]
    Mapping(String),

    #[error("infeasible constraint: {0}")]
    InfeasibleConstraint(String),

    #[error("unsupported parametrization: {0}")]
    UnsupportedParametrization(String),

    #[error(transparent)]
    Wall(#[from] crate::hard_maze::WallError),

    #[error("agent error: {0}")]
    Agent(String),

    #[error("no proper policy: {0}")]
    NoProperPolicy(String),

    #[error("diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
