use thiserror::Error;

/// Errors raised by dataset construction, the SPS routines, the baselines and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("unbounded region: the dual problem has no finite optimum")]
    Unbounded,

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("sample size {n} is below the validity threshold {threshold}")]
    BelowThreshold { n: usize, threshold: usize },

    #[error("set-membership update at step {step} produced an empty set (noise bound violated)")]
    EmptySet { step: usize },

    #[error("trial {trial}, t = {t}: {source}")]
    Trial {
        trial: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad user input rather than by numerics.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidConfig(_)
            | Error::DimensionMismatch(_)
            | Error::Json(_)
            | Error::Parse(_) => true,
            Error::Trial { source, .. } => source.is_config_error(),
            _ => false,
        }
    }

    pub(crate) fn in_trial(self, trial: usize, t: usize) -> Error {
        Error::Trial {
            trial,
            t,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
