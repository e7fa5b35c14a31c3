use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("function value at Chebyshev point {index} (x = {x}) is not finite: {value}")]
    NonFiniteSample { index: usize, x: f64, value: f64 },

    #[error("coefficient {index} is not finite")]
    NonFiniteCoefficient { index: usize },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("SVRG diverged: gradient norm {gradient:.3e} exceeds 10x the initial {initial:.3e} after {passes} passes")]
    Diverged {
        gradient: f64,
        initial: f64,
        passes: usize,
    },

    #[error("oracle error {eps:.3e} exceeds the admissible bound {limit:.3e} (1/(4 N C_U))")]
    Inadmissible { eps: f64, limit: f64 },

    #[error("spectral norm {sigma:.9} of the data matrix exceeds 1")]
    SpectralNorm { sigma: f64 },

    #[error("matrix too large: {rows} x {cols} needs about {bytes} bytes")]
    TooLarge { rows: usize, cols: usize, bytes: u128 },

    #[error("{path}: bad magic header")]
    BadMagic { path: PathBuf },

    #[error("{path}: dimensions {rows} x {cols} overflow the addressable size")]
    DimensionOverflow { path: PathBuf, rows: u64, cols: u64 },

    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse class used for process exit codes and FFI status codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonFiniteSample { .. }
            | Error::NonFiniteCoefficient { .. }
            | Error::Inadmissible { .. }
            | Error::SpectralNorm { .. }
            | Error::TooLarge { .. } => ErrorClass::Validation,
            Error::NotConverged { .. } | Error::Diverged { .. } => ErrorClass::Convergence,
            Error::BadMagic { .. }
            | Error::DimensionOverflow { .. }
            | Error::Truncated { .. }
            | Error::Parse { .. } => ErrorClass::Format,
            Error::Io { .. } => ErrorClass::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Io,
    Format,
    Convergence,
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
