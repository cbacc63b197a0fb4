use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is rank deficient (rank {rank}, expected {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("integration diverged at t = {t}: state left the finite range: {state:?}")]
    Divergence { t: f64, state: Vec<f64> },

    #[error("step budget of {max_steps} steps exceeded")]
    StepBudget { max_steps: usize },

    #[error("equilibrium input not found after {iterations} iterations (residual {residual:e})")]
    EquilibriumNotFound { iterations: usize, residual: f64 },

    #[error(
        "continuation breakdown at t = {t}: continuation matrix lost rank \
         (smallest singular value {sigma_min:e}), state {state:?}"
    )]
    ContinuationBreakdown {
        t: f64,
        sigma_min: f64,
        state: Vec<f64>,
    },

    #[error("continuation stagnated at t = {t}: lambda = {lambda} stopped advancing before reaching 1")]
    Stagnation { t: f64, lambda: f64 },

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error("signal unavailable: {0}")]
    Unavailable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown example `{id}`; registered examples: {}", registered.join(", "))]
    UnknownExample { id: String, registered: Vec<String> },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
