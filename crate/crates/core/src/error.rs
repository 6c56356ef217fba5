use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
    Conditioning,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("coefficient {name} is inadmissible at x = {x}: value {value}")]
    Positivity {
        name: &'static str,
        x: f64,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (breakdown at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("eigenvalue {index} is not positive: {value}")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("no sign change of the characteristic function on bracket {index}")]
    Bracket { index: usize },

    #[error("tabulation too coarse: {have} samples, at least {required} required")]
    Undersampled { have: usize, required: usize },

    #[error("duplicate frequency at index {index}: {value}")]
    DuplicateFrequency { index: usize, value: f64 },

    #[error("Gram condition {condition:e} exceeds cap {cap:e}; increase T or decrease N")]
    Conditioning { condition: f64, cap: f64 },

    #[error("state belongs to basis {state:#x}, spectrum is {spectrum:#x}")]
    BasisMismatch { state: u64, spectrum: u64 },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Profile(_)
            | Error::Positivity { .. }
            | Error::InvalidArgument(_)
            | Error::Undersampled { .. }
            | Error::BasisMismatch { .. } => ErrorClass::Input,
            Error::Conditioning { .. } => ErrorClass::Conditioning,
            Error::NotPositiveDefinite { .. }
            | Error::NonPositiveEigenvalue { .. }
            | Error::Eigensolver(_)
            | Error::Bracket { .. }
            | Error::DuplicateFrequency { .. } => ErrorClass::Numerical,
        }
    }
}
