use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector is not on the unit sphere (norm {norm})")]
    NotUnitVector { norm: f64 },

    #[error("columns are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point lies in the normal span of the subsphere{}", stage_suffix(*.stage))]
    SingularProjection { stage: Option<usize> },

    #[error("point is not on the subsphere (deviation {deviation:e})")]
    NotOnSubsphere { deviation: f64 },

    #[error("descriptors are not nested at level {level} (deviation {deviation:e})")]
    NotNested { level: usize, deviation: f64 },

    #[error("cross-Gram matrix is degenerate (smallest singular value {sigma_min:e})")]
    DegenerateAlignment { sigma_min: f64 },

    #[error("descriptor projection is not unique (objective gap {gap:e})")]
    NonUniqueProjection { gap: f64 },

    #[error("constraint derivative has rank {rank}, expected {expected}")]
    RankDeficientConstraint { rank: usize, expected: usize },

    #[error("Newton retraction did not converge after {iterations} iterations (residual {residual:e})")]
    RetractionDiverged { iterations: usize, residual: f64 },

    #[error("descriptor family leaves the chart at level {level}: {reason}")]
    OutOfChart { level: usize, reason: String },

    #[error("degenerate data at level {level}: all points coincide")]
    DegenerateData { level: usize },

    #[error("insufficient data at level {level}: need {needed} points, found {found}")]
    InsufficientData { level: usize, needed: usize, found: usize },

    #[error("fit did not converge at level {level} after {iterations} iterations on every restart")]
    NoConvergence { level: usize, iterations: usize },

    #[error("{skipped} of {total} bootstrap replicates were degenerate")]
    TooManyDegenerate { skipped: usize, total: usize },

    #[error("bootstrap covariance is singular")]
    SingularCovariance,

    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn stage_suffix(stage: Option<usize>) -> String {
    match stage {
        Some(s) => format!(" (stage {s})"),
        None => String::new(),
    }
}

impl Error {
    /// Whether the error stems from invalid input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::NotUnitVector { .. }
                | Error::NotOrthonormal { .. }
                | Error::InvalidParameter(_)
                | Error::InvalidCounts(_)
                | Error::Validation { .. }
                | Error::InsufficientData { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            2
        } else {
            3
        }
    }
}
