use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("projection failed on patch {patch} after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    ProjectionFailed {
        patch: usize,
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no candidate parent patch for nodes {nodes:?}")]
    UnassignedNodes { nodes: Vec<usize> },

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("infeasible kernel constraint: best attained margin {best_margin:.4e} below required {required:.4e}")]
    Infeasible { best_margin: f64, required: f64 },

    #[error("time step {dt:.4e} exceeds the stability limit {limit:.4e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("solution diverged at t = {time:.4e}")]
    Divergence { time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
