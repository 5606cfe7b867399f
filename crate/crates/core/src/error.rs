use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("constraint `{name}` violated: {detail}")]
    Constraint { name: String, detail: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("ill-conditioned Gram matrix (condition {condition:.3e} > threshold {threshold:.3e}); increase T or decrease N")]
    IllConditioned { condition: f64, threshold: f64 },

    #[error("blow-up at t = {time}: X^0 norm {norm:.3e} exceeds ceiling {ceiling:.3e}")]
    BlowUp { time: f64, norm: f64, ceiling: f64 },

    #[error("no convergence after {iterations} iterations (last difference {last_diff:.3e}, tol {tol:.3e})")]
    NoConvergence {
        iterations: usize,
        last_diff: f64,
        tol: f64,
    },

    #[error("verification of {what} failed: achieved {achieved:.3e} > tol {tol:.3e}")]
    Verification {
        what: String,
        achieved: f64,
        tol: f64,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("fit undefined: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant breach: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn constraint(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Constraint {
            name: name.into(),
            detail: detail.into(),
        }
    }

    /// Process exit status used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::InvalidParameter(_)
            | Error::Constraint { .. }
            | Error::Config(_)
            | Error::Empty(_) => 2,
            Error::Singular(_)
            | Error::IllConditioned { .. }
            | Error::BlowUp { .. }
            | Error::NoConvergence { .. }
            | Error::Verification { .. }
            | Error::Fit(_) => 3,
            Error::Invariant(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
