use std::path::PathBuf;

/// Errors produced by the training and evaluation stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left_rows}x{left_cols} and {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} at row {row} is outside [0, {num_classes})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("forward cache does not belong to this model (parameters changed or shapes differ)")]
    StaleCache,

    #[error("optimizer state has not been initialized for any parameter shapes")]
    Uninitialized,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema: {0}")]
    Schema(String),

    #[error("{malformed} of {total} rows are malformed (limit {limit}); first: {first}")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        limit: usize,
        first: String,
    },

    #[error("unknown label(s): {}", .0.join(", "))]
    UnknownLabels(Vec<String>),

    #[error("class `{0}` has no instances")]
    EmptyClass(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite loss {loss} at step {step} (epoch {epoch}, batch {batch})")]
    NonFiniteLoss {
        loss: f64,
        step: usize,
        epoch: usize,
        batch: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
