use thiserror::Error;

/// Errors produced by the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("user subset must be nonempty")]
    EmptySubset,
    #[error("user index {index} out of range for {users} users")]
    UserIndex { index: usize, users: usize },
    #[error("operation needs exactly {expected} users, scenario has {got}")]
    UserCount { expected: usize, got: usize },
    #[error("{what} is limited to {max} users, scenario has {got}")]
    TooManyUsers {
        what: &'static str,
        max: usize,
        got: usize,
    },
    #[error("user pairing needs an even number of users, got {0}")]
    OddUserCount(usize),
    #[error("value {value} outside of the admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("lambert W argument {x} outside the domain of the {branch} branch")]
    LambertDomain { x: f64, branch: &'static str },
    #[error("no sign change of f on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("no decoding order reached alpha >= {threshold} (best alpha {best_alpha})")]
    NoOrderFound { threshold: f64, best_alpha: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
