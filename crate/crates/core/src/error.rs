use thiserror::Error;

/// Errors produced by dataset loading, splitting, matching, model fitting and
/// the test pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("subdataset {0} appears under more than one context")]
    AmbiguousContext(u32),

    #[error("windowed design is empty: {0}")]
    EmptyDesign(String),

    #[error("cannot partition: {0}")]
    CannotPartition(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("class {class} absent from {what}")]
    ClassAbsent { class: usize, what: String },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model i/o: {0}")]
    ModelIo(String),

    #[error(
        "only {succeeded}/{requested} repetitions succeeded \
         (minimum success fraction {min_fraction})"
    )]
    TooManyFailures {
        succeeded: usize,
        requested: usize,
        min_fraction: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
