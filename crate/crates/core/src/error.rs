use thiserror::Error;

pub type Result<T> = std::result::Result<T, GsgdError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GsgdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("{count} kinks at this point exceed the enumeration limit of {limit}")]
    TooManyKinks { count: usize, limit: usize },

    #[error("problem `{0}` has no hull oracle")]
    HullUnavailable(String),

    #[error("time {t} lies outside the interpolation range [0, {end}]")]
    TimeOutOfRange { t: f64, end: f64 },

    /// The iterate left the finite region. `x` and `m` hold the last finite state.
    #[error("iterate diverged at k = {k}")]
    Divergence { k: usize, x: Vec<f64>, m: Vec<f64> },
}
