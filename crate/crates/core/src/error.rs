use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no document has any term left after normalization")]
    AllDocumentsEmpty,

    #[error("input contains no documents")]
    EmptyInput,

    #[error("vector {index} is all zeros")]
    ZeroVector { index: usize },

    #[error("cluster count {k} is outside [1, {n}]")]
    BadK { k: usize, n: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("normal-equation matrix is singular even after regularization")]
    SingularSystem,

    #[error("factor {factor} has a negative or non-finite entry after iteration {iteration}")]
    NonNegativityViolation {
        factor: &'static str,
        iteration: usize,
    },

    #[error("eigensolver did not converge after {steps} Lanczos steps ({converged} of {wanted} eigenvalues converged)")]
    ConvergenceFailure {
        steps: usize,
        converged: usize,
        wanted: usize,
    },

    #[error("topic {0} has no assigned documents")]
    EmptyTopic(usize),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the configuration rather than by the data or
    /// the environment.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
