use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid probability for {name}: {value} is not in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("conditioning on a signal with zero probability")]
    DegenerateConditioning,

    #[error("index {index} out of range for {len} students")]
    IndexError { index: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    #[error("problem too large: {what} = {got} exceeds the cap of {cap}")]
    TooLarge { what: &'static str, got: usize, cap: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("solver error: {0}")]
    SolverError(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}
