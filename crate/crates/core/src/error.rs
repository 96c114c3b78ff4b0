use std::path::PathBuf;

/// Errors surfaced by the solver, the learning stack and the file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("incompatible checkpoint: file has {found}, this build expects {expected}")]
    Incompatible { expected: String, found: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("LP solver breakdown: {0}")]
    Solver(String),

    #[error("branching policy error: {0}")]
    Policy(String),

    #[error("training error: {0}")]
    Training(String),

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

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
