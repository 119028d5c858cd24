use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("could not place atom {atom} without collision after {retries} resamples")]
    GeometryCollision { atom: usize, retries: usize },

    /// The interaction matrix is singular, so the driven amplitudes grow
    /// without bound. The canonical case is the decoherence-free point
    /// (D = 0, uniform zero detuning, xi = pi).
    #[error(
        "no steady state: smallest singular value {smallest_singular_value:.3e} is below \
         {threshold:.3e} (decoherence-free point, excitation is pumped indefinitely)"
    )]
    NoSteadyState {
        smallest_singular_value: f64,
        threshold: f64,
    },

    #[error("steady-state residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("master equation has no unique steady state: {0}")]
    NoUniqueSteadyState(String),

    #[error("transport metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("{n} atoms exceeds the density-matrix limit of {max} (Hilbert space 2^N)")]
    TooManyAtoms { n: usize, max: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in output flag columns.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::GeometryCollision { .. } => "geometry_collision",
            Error::NoSteadyState { .. } => "no_steady_state",
            Error::ResidualTooLarge { .. } => "residual_too_large",
            Error::NoUniqueSteadyState(_) => "no_unique_steady_state",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::IntegrationFailure { .. } => "integration_failure",
            Error::TooManyAtoms { .. } => "too_many_atoms",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
