//! Crate-wide error type.

use thiserror::Error;

/// Which half of a coupled coarse/fine computation an error came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    Fine,
    Coarse,
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Resolution::Fine => write!(f, "fine"),
            Resolution::Coarse => write!(f, "coarse"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {message}")]
    Parameter { name: &'static str, message: String },

    #[error(
        "step size {h} violates the implicit-step gate; maximal admissible h is {max_h} \
         (h <= min(1, rho/(2*K1)))"
    )]
    StepGate { h: f64, max_h: f64 },

    #[error(
        "newton iteration did not reach tolerance {tol:.3e} after {iterations} iterations \
         (residual {residual:.3e})"
    )]
    NewtonNonconvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
        last_iterate: Vec<f64>,
    },

    #[error("newton jacobian is singular")]
    SingularJacobian,

    #[error("non-finite state produced by {scheme} step")]
    Divergence { scheme: &'static str },

    #[error("query time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error(
        "coarse path is exhausted before exceeding the horizon; \
         the fine path must be generated further past the horizon"
    )]
    SubsampleExhausted,

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{resolution} resolution: {source}")]
    AtResolution {
        resolution: Resolution,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "experiment failed for scheme {scheme} at h = {h}: {n_failed} of {n_paths} paths \
         failed (first failure: path {first_path}: {first_message})"
    )]
    Experiment {
        scheme: String,
        h: f64,
        n_failed: usize,
        n_paths: usize,
        first_path: u64,
        first_message: String,
    },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parameter(name: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_resolution(self, resolution: Resolution) -> Self {
        Error::AtResolution {
            resolution,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
