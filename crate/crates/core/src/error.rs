use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {what} = {value} is outside the admissible domain")]
    Domain { what: &'static str, value: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("root solve did not converge for u = {u} after {iterations} iterations")]
    RootSolve { u: f64, iterations: usize },

    #[error("energy increased by {increase:e} at t = {time} (tolerance {tolerance:e})")]
    Instability {
        time: f64,
        increase: f64,
        tolerance: f64,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RootSolve { .. } | Error::Instability { .. })
    }
}
