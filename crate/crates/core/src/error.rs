use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("trajectory {traj}, row {row}: {message}")]
    Trajectory {
        traj: String,
        row: usize,
        message: String,
    },

    #[error("no trajectories")]
    NoTrajectories,

    #[error("collision at step {step}: follower {follower} spacing {spacing:.4} m")]
    Collision {
        step: usize,
        follower: usize,
        spacing: f64,
    },

    #[error("rollout diverged at step {step}")]
    Diverged { step: usize },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("eigensolver failed to converge")]
    EigenFailure,

    #[error("no principal logarithm: {0}")]
    NoPrincipalLog(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("pole on imaginary axis at {freq} Hz")]
    PoleOnAxis { freq: f64 },

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("data not found: {0}")]
    DataNotFound(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad configuration or input files, as opposed to
    /// numerical failures at run time.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::Invalid(_)
                | Error::Trajectory { .. }
                | Error::NoTrajectories
                | Error::Version { .. }
                | Error::ModelFormat(_)
                | Error::Config(_)
                | Error::DataNotFound(_)
                | Error::Io { .. }
                | Error::Csv(_)
        )
    }
}
