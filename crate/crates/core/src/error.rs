use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed series: {0}")]
    MalformedSeries(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("checksum mismatch: expected {expected:02X}, computed {computed:02X}")]
    Checksum { expected: u8, computed: u8 },

    #[error("unsupported sentence: {0}")]
    UnsupportedSentence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    #[error("unknown port: {0}")]
    Registry(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("invalid path: {0}")]
    Path(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {source}")]
    Record {
        path: PathBuf,
        line: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, path: impl Into<PathBuf>, line: u64) -> Self {
        Error::Record {
            path: path.into(),
            line,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Config(_) | Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by input data rather than the program.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } | Error::Record { source, .. } => source.is_data_error(),
            Error::Config(_) | Error::Io { .. } | Error::Json(_) => false,
            _ => true,
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            e if e.is_data_error() => 3,
            _ => 4,
        }
    }
}
