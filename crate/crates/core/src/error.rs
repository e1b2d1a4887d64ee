use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("site index {index} out of range 1..={max}")]
    SiteIndex { index: usize, max: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("measurement outcome has zero probability (norm underflow at eta = {eta})")]
    DegenerateOutcome { eta: f64 },

    #[error("probe norm ratio fell below {threshold:e} inside a bin of {bin_size} steps; use a smaller bin size")]
    BinOverflow { bin_size: usize, threshold: f64 },

    #[error("probe {index} collapsed onto the span of earlier probes (residual {residual:e})")]
    RankDeficient { index: usize, residual: f64 },

    #[error("outcome log holds {available} steps, {requested} requested")]
    InsufficientLog { available: usize, requested: usize },

    #[error("underdetermined fit: {0} sizes given, at least 3 needed")]
    Underdetermined(usize),

    #[error("degenerate gap series: {0}")]
    DegenerateSeries(String),

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("channel has no eigenvalue within {tolerance:e} of 1 (closest {closest:e})")]
    BrokenChannel { tolerance: f64, closest: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
