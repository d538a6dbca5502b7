use thiserror::Error;

/// Errors raised by the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument outside the supported domain: {0}")]
    Domain(String),

    #[error("singular point: {0}")]
    Singularity(String),

    #[error("near-singular boundary system (condition {condition:.3e}) at n={n}, kz={kz:.6e} 1/nm, omega={omega:.6e} eV")]
    IllConditioned {
        n: usize,
        kz: f64,
        omega: f64,
        condition: f64,
    },

    #[error("quadrature did not converge: estimated error {error:.3e} exceeds tolerance {tolerance:.3e} ({context})")]
    Quadrature {
        error: f64,
        tolerance: f64,
        context: String,
    },

    #[error("bracketing failed for channel {channel}: {detail}")]
    Bracketing { channel: String, detail: String },

    #[error("norm violation: {0}")]
    Norm(String),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("cache mismatch: {0}")]
    Cache(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("at {coordinate}: {source}")]
    Sweep { coordinate: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        if let Error::Sweep { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::Validation(_) | Error::Parse { .. } | Error::Invalid(_) | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
