use thiserror::Error;

/// Errors raised by the numerical pipeline.
///
/// Variants are grouped so the CLI can map them onto exit codes: the
/// first group is caller/configuration error, the second numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("time grid error: {0}")]
    TimeGrid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("lookup failed: {0}")]
    Lookup(String),
    #[error("unsupported frequency: {0}")]
    UnsupportedFrequency(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("observation time {t} does not exceed the certified threshold {t_min}")]
    Threshold { t: f64, t_min: f64 },

    #[error("CFL violation: dt = {dt} exceeds stable bound {dt_max}")]
    Stability { dt: f64, dt_max: f64 },
    #[error("field is not harmonic: residual {residual:.3e} > tolerance {tolerance:.3e}")]
    NotHarmonic { residual: f64, tolerance: f64 },
    #[error("weight is not strictly convex: smallest Hessian eigenvalue {0:.3e}")]
    NotStrictlyConvex(f64),
    #[error("weight has a critical point: min |grad| = {0:.3e}")]
    CriticalPoint(f64),
    #[error("ill-conditioned Gram matrix: {0}")]
    Conditioning(String),
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Stability { .. }
                | Error::NotHarmonic { .. }
                | Error::NotStrictlyConvex(_)
                | Error::CriticalPoint(_)
                | Error::Conditioning(_)
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
