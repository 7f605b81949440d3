use thiserror::Error;

use crate::linalg::C64;

pub type Result<T> = std::result::Result<T, OsmError>;

#[derive(Debug, Error)]
pub enum OsmError {
    #[error("matrix is singular: pivot {pivot} below threshold")]
    SingularMatrix { pivot: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Krylov solver ran out of iterations; `best` is the iterate with the
    /// smallest residual seen.
    #[error("Krylov solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    KrylovNotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<C64>,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last update {residual:e})")]
    FixedPointNotConverged { iterations: usize, residual: f64 },

    #[error("fixed-point iteration diverged (non-finite value) at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("Schwarz iteration did not converge at time step {time_step} within {} iterations", history.len())]
    SchwarzNotConverged { time_step: usize, history: Vec<f64> },

    #[error("point ({x}, {y}) is outside the valid zone")]
    Domain { x: f64, y: f64 },

    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("subdomain {index}: {source}")]
    Subdomain {
        index: usize,
        #[source]
        source: Box<OsmError>,
    },

    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<OsmError>,
    },
}

impl OsmError {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        OsmError::Dimension {
            context,
            expected,
            found,
        }
    }

    pub(crate) fn in_subdomain(self, index: usize) -> Self {
        OsmError::Subdomain {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        OsmError::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(OsmError::dim(context, expected, found))
    }
}
