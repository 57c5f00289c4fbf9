use thiserror::Error;

/// Errors produced by the numerical layers and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mode {k} is in the complex regime for nu = {nu} (4 nu k^2 >= 1)")]
    ComplexRegime { k: usize, nu: f64 },

    #[error("time {0} lies outside the grid")]
    OutsideGrid(f64),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("weighted norm overflow at iteration {iteration}")]
    WeightedOverflow { iteration: usize },

    #[error("weighted trajectory norm {norm:e} exceeds the tempered bound {bound:e}")]
    TemperedBound { norm: f64, bound: f64 },

    #[error("blow-up at t = {time} in mode {mode}")]
    BlowUp { time: f64, mode: usize },

    #[error("solver failed at base point {base:?}: {source}")]
    AtBasePoint { base: Vec<f64>, source: Box<Error> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
