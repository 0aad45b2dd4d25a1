use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unequal total mass: {first} vs {second}")]
    UnequalMass { first: f64, second: f64 },

    #[error("magnitude {value} exceeds the exact-integer budget {budget}")]
    Overflow { value: f64, budget: f64 },

    #[error("map is not expanding: inf f' is at most {bound}")]
    NotExpanding { bound: f64 },

    #[error("branch inversion did not converge for y = {y} on branch {branch}")]
    BranchInversion { y: f64, branch: usize },

    #[error("no convergence after {iterations} iterations (last change {change})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("tree indices have lengths {0} and {1}, expected equal leaf depth")]
    LengthMismatch(usize, usize),

    #[error("need ≥ {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
