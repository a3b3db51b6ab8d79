use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The config document could not be parsed or does not match the schema.
    #[error("config parse error: {0}")]
    Parse(String),

    /// A field parsed but violates a domain invariant.
    #[error("invalid {item}: {invariant}")]
    Validation { item: &'static str, invariant: String },

    #[error("suspension does not constrain {dof} (smallest stiffness eigenvalue {eigenvalue:e})")]
    RankDeficient { dof: &'static str, eigenvalue: f64 },

    #[error("{matrix} matrix is not symmetric positive definite")]
    NotPositiveDefinite { matrix: &'static str },

    #[error("mode classification: {0}")]
    Classification(String),

    #[error("electrode contact: minimum gap {min_gap:e} m is not positive")]
    Contact { min_gap: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("integrator: {0}")]
    Integration(String),

    #[error("undersampled input: sample rate {sample_rate} Hz is below 10x the carrier {carrier} Hz")]
    Undersampled { sample_rate: f64, carrier: f64 },

    #[error("calibration: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(item: &'static str, invariant: impl Into<String>) -> Error {
    Error::Validation {
        item,
        invariant: invariant.into(),
    }
}
