use std::path::PathBuf;

use thiserror::Error;

use crate::recommend::AlgorithmKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    Config { field: &'static str, reason: String },

    #[error("cannot parse configuration{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    ConfigParse { line: Option<usize>, message: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("least-squares fit failed: {0}")]
    Fit(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("incomplete data: {0}")]
    Data(String),

    #[error("run failed for algorithm {algorithm} seed {run_id}: {source}")]
    Run {
        algorithm: AlgorithmKind,
        run_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("output directory {0} already holds a completed run (use --force to overwrite)")]
    OutputExists(PathBuf),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}
