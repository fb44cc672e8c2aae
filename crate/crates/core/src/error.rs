use thiserror::Error;

#[derive(Debug, Error)]
pub enum AiaError {
    #[error("no robots")]
    NoRobots,
    #[error("query point in obstacle")]
    QueryPointInObstacle,
    #[error("degenerate prior")]
    DegeneratePrior,
    #[error("numerical failure")]
    NumericalFailure,
    #[error("missing landmark control for landmark {landmark} at step {t}")]
    MissingLandmarkControl { landmark: usize, t: usize },
    #[error("no targets in scope")]
    NoTargetsInScope,
    #[error("planner root pose is in collision")]
    RootInCollision,
    #[error("invalid workspace: {0}")]
    InvalidWorkspace(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AiaError {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        AiaError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = AiaError> = std::result::Result<T, E>;
