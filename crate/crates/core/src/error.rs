use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid too coarse: axis {axis} has {cells} interior cells, need at least {required}")]
    GridTooCoarse {
        axis: usize,
        cells: usize,
        required: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value at cell {cell} (t = {time}); time step too large or bad input")]
    NonFinite { cell: usize, time: f64 },

    #[error("run would need {steps} steps, refusing more than {limit}")]
    TooManySteps { steps: f64, limit: f64 },

    #[error("initial data are not ordered at cell {cell}: low = {low}, high = {high}")]
    Unordered { cell: usize, low: f64, high: f64 },

    #[error("forcing {c} outside the admissible interval (0, {upper})")]
    ForcingOutOfRange { c: f64, upper: f64 },

    #[error("forcing {c} equals 1/r_min: the two stationary arcs coincide")]
    TangentialForcing { c: f64 },

    #[error("no sign change of the bracketing function on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("internal consistency: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
