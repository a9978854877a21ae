use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no state at {}; run `socialquant solve` first", .0.display())]
    MissingState(PathBuf),

    #[error("malformed state file {}: line {line}: {msg}", path.display())]
    StateFormat {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Model(#[from] socialquant::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for bad input, 4 when `solve` has not run, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::Argument(_) => 2,
            Self::Model(socialquant::Error::Argument(_)) => 2,
            Self::MissingState(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Exit status for a solve that hit `max_sweeps` without converging.
pub const EXIT_NOT_CONVERGED: i32 = 3;
