use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A closed-form expression hit a zero denominator.
    #[error("singular parameters: {0}")]
    SingularParameter(String),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("ODE step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("eigenstate assignment is ambiguous: {0}")]
    Degeneracy(String),

    #[error("qubit population {p_e} is at or above the two-level saturation value 1/2")]
    Saturation { p_e: f64 },

    #[error("Heisenberg bound violated: V_min·V_max = {product} < 1/4")]
    Heisenberg { product: f64 },
}
