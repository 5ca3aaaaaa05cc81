use thiserror::Error;

/// Errors raised by the physics models and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("wavelength {wavelength_nm} nm is outside the tabulated span [{min_nm}, {max_nm}] nm")]
    OutOfRange {
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("series did not converge after {terms} terms (partial sum {partial_sum:e})")]
    Convergence { terms: usize, partial_sum: f64 },

    #[error("fit failed after {iterations} iterations: {reason} (last cost {last_cost:e})")]
    FitFailure {
        reason: String,
        iterations: usize,
        last_cost: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("source placement: {0}")]
    Placement(String),

    #[error("extrapolation: {0}")]
    Extrapolation(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors produced by a non-converging or ill-posed fit.
    pub fn is_fit_failure(&self) -> bool {
        matches!(self, Error::FitFailure { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
