use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar fell outside the admissible interval of a generator (or of its
    /// derivative's image, for dual values).
    #[error("{what} = {value} is outside the domain of the {generator} generator")]
    Domain {
        generator: String,
        what: &'static str,
        value: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The Newton system could not be factored even after ridge repair.
    #[error("calibration solver failed at iteration {iteration}: {reason}")]
    SolverFailure { iteration: usize, reason: String },

    /// Every backtracked step left the dual feasible region, or the constraint
    /// set does not intersect the generator domain.
    #[error("calibration problem is infeasible: {reason} (iteration {iteration}, residual {residual_norm:e})")]
    Infeasible {
        iteration: usize,
        residual_norm: f64,
        reason: String,
    },

    #[error("learner failed on fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
