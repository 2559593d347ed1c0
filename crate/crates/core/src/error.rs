use thiserror::Error;

/// Errors raised by every module of the harness.
///
/// Each variant carries a stable short code (see [`Error::code`]) so that
/// callers such as the CLI can map failures onto exit statuses without
/// matching on message text.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("missing variable `{0}`")]
    MissingVariable(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("undefined mean: {0}")]
    UndefinedMean(String),

    #[error("undefined normalization: {0}")]
    UndefinedNormalization(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt container: {0}")]
    Corruption(String),

    #[error("integrity error: payload hash mismatch (header {expected}, payload {actual})")]
    Integrity { expected: String, actual: String },

    #[error("adapter initialization failed: {0}")]
    AdapterInit(String),

    #[error("adapter failed at step {step}: {message}")]
    Adapter { step: usize, message: String },

    #[error("instability at step {step}: non-finite value in `{variable}`")]
    Instability { step: usize, variable: String },

    #[error("non-deterministic adapter: {0}")]
    NonDeterministic(String),

    #[error("collation conflict for key {0}")]
    Collation(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid-grid",
            Error::Shape(_) => "shape-mismatch",
            Error::MissingVariable(_) => "missing-variable",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Config(_) => "configuration",
            Error::UndefinedMean(_) => "undefined-mean",
            Error::UndefinedNormalization(_) => "undefined-normalization",
            Error::Degenerate(_) => "degenerate",
            Error::Domain(_) => "domain",
            Error::Format(_) => "format",
            Error::Corruption(_) => "corruption",
            Error::Integrity { .. } => "integrity",
            Error::AdapterInit(_) => "adapter-init",
            Error::Adapter { .. } => "adapter-broken",
            Error::Instability { .. } => "instability",
            Error::NonDeterministic(_) => "non-deterministic",
            Error::Collation(_) => "collation",
            Error::UnknownModel(_) => "unknown-model",
            Error::Serialization(_) => "serialization",
            Error::Io(_) => "io",
        }
    }

    /// True for failures caused by the environment (files, pipes, child
    /// processes) rather than by the request itself.
    pub fn is_io_like(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Format(_)
                | Error::Corruption(_)
                | Error::Integrity { .. }
                | Error::AdapterInit(_)
                | Error::Adapter { .. }
                | Error::Instability { .. }
                | Error::NonDeterministic(_)
                | Error::Serialization(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
