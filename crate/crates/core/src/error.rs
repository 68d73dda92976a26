use std::path::PathBuf;

/// Errors produced anywhere in the ranking toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stale activation cache: cache was recorded at model version {cache}, model is at {model}")]
    StaleCache { cache: u64, model: u64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid label {value} at row {row}: binary targets must be 0 or 1")]
    InvalidLabel { row: usize, value: f64 },

    #[error("unknown {what} '{name}'")]
    Unknown { what: &'static str, name: String },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

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

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::StaleCache { .. } => "stale_cache",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::InvalidLabel { .. } => "invalid_label",
            Error::Unknown { .. } => "unknown",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::FormatVersion { .. } => "format_version",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
