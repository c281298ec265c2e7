use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_UNSUPPORTED: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dinterp::Error),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn code(&self) -> i32 {
        use dinterp::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                E::Config(_) => EXIT_CONFIG,
                E::Numeric(_) => EXIT_NUMERIC,
                E::Unsupported(_) => EXIT_UNSUPPORTED,
                E::Shape { .. }
                | E::Contract(_)
                | E::Degenerate(_)
                | E::Ingest { .. }
                | E::Sampling(_)
                | E::Io { .. }
                | E::Json(_) => EXIT_DATA,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.code() {
            EXIT_CONFIG => "config",
            EXIT_NUMERIC => "numeric",
            EXIT_UNSUPPORTED => "unsupported",
            _ => "data",
        }
    }

    /// `error[<code>] <kind>: <message>` on one line.
    pub fn line(&self) -> String {
        let msg: String = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}] {}: {}", self.code(), self.kind(), msg)
    }
}
