use std::path::PathBuf;

use thiserror::Error;

use crate::synthgen::ArtifactKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("artifact {0} is already present on this sample")]
    DuplicateArtifact(ArtifactKind),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("degenerate contingency table: a row or column margin is zero")]
    DegenerateMargin,

    #[error("degenerate confidence interval: {0}")]
    DegenerateInterval(String),

    #[error("single-class input: {0}")]
    SingleClass(String),

    #[error("infeasible trap target: cell ({cell}) needs {needed} samples, pool has {available}")]
    InfeasibleTarget {
        cell: String,
        needed: usize,
        available: usize,
    },

    #[error("split request of {requested} samples exceeds pool of {pool}")]
    OverlappingRequest { requested: usize, pool: usize },

    #[error("unknown sample id {0}")]
    UnknownId(u64),

    #[error("shape mismatch in parameter {0}")]
    ShapeMismatch(String),

    #[error("checksum mismatch: split expects manifest {expected}, found {found}")]
    ChecksumMismatch { expected: String, found: String },

    #[error("output directory {0} exists and is not empty (use --force)")]
    OutputExists(PathBuf),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("training diverged in {phase} epoch {epoch}: loss is not finite (try a lower lr0 or set grad_clip)")]
    Diverged { phase: String, epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Configuration and feasibility failures map to exit code 2, everything else to 1.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InfeasibleTarget { .. }
                | Error::OverlappingRequest { .. }
                | Error::OutputExists(_)
        )
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
