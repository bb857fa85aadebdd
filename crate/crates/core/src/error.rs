use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("schema error: missing required column {0}")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("empty recording: {0}")]
    EmptyRecording(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("unknown participant {0}")]
    UnknownParticipant(String),

    #[error("missing channel: {0}")]
    MissingChannel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("quasi-complete separation along direction [{direction}]")]
    Separation { direction: String },

    #[error("collinear design: {0}")]
    Collinearity(String),

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_file(path: impl Into<PathBuf>, source: Error) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(source),
        }
    }

    /// Short machine-readable tag, used in structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InsufficientData(_) => "insufficient_data",
            Error::InvalidValue(_) => "invalid_value",
            Error::MissingColumn(_) => "schema",
            Error::Row { .. } => "row",
            Error::EmptyRecording(_) => "empty_recording",
            Error::Conflict(_) => "conflict",
            Error::UnknownParticipant(_) => "referential",
            Error::MissingChannel(_) => "missing_channel",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::DegenerateLabels(_) => "degenerate_labels",
            Error::Separation { .. } => "separation",
            Error::Collinearity(_) => "collinearity",
            Error::NotConverged(_) => "not_converged",
            Error::Io { .. } => "io",
            Error::InFile { source, .. } => source.kind(),
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit status: 2 for configuration problems, 1 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::InFile { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
