//! Error type shared across the crate, with the process exit codes the CLI
//! maps each class to.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value or config-file syntax.
    #[error("config error: {0}")]
    Config(String),

    /// CSV header is missing a required column.
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),

    /// A CSV row failed to parse.
    #[error("row error at line {line}: {message}")]
    Row { line: u64, message: String },

    /// Network failure with no usable cache.
    #[error("fetch error: {message} (cache tried: {cache_path})")]
    Fetch { message: String, cache_path: PathBuf },

    /// HTTP response with a non-success status.
    #[error("http status {status}: {body_excerpt}")]
    HttpStatus { status: u16, body_excerpt: String },

    /// Series has no usable values.
    #[error("empty series: {0}")]
    EmptySeries(String),

    /// Normalization is undefined when max == min.
    #[error("degenerate range: series max equals min ({0})")]
    DegenerateRange(f64),

    /// Not enough data for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Least-squares system has fewer samples than unknowns and no ridge term.
    #[error("underdetermined readout: {samples} effective samples for {unknowns} unknowns with zero regularization")]
    Underdetermined { samples: usize, unknowns: usize },

    /// Reservoir draw produced a (numerically) zero matrix.
    #[error("degenerate reservoir: pre-scale spectral radius is numerically zero")]
    DegenerateReservoir,

    /// Prediction requested before training.
    #[error("model is not fitted: {0}")]
    NotFitted(String),

    /// A non-finite value was fed to a numeric operation.
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    /// Model output became non-finite.
    #[error("divergence: {0}")]
    Divergence(String),

    /// Mismatched sequence lengths.
    #[error("shape error: {0}")]
    Shape(String),

    /// Statistical test is undefined for the given samples.
    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    /// Model artifact is unreadable or has the wrong format version.
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI uses for this error class: 1 config, 2 data/fetch,
    /// 3 artifact, 4 model divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Artifact(_) => 3,
            Error::Divergence(_) => 4,
            _ => 2,
        }
    }
}
