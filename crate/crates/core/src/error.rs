use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: cannot parse {token:?} as a position")]
    Parse { line: usize, token: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("support mismatch: {left} vs {right}")]
    SupportMismatch { left: f64, right: f64 },

    #[error("non-stationary truth: branching ratio {0} >= 1")]
    NonStationary(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("window [{start}, {end}] outside admissible range [{lo}, {hi}]")]
    Window {
        start: f64,
        end: f64,
        lo: f64,
        hi: f64,
    },

    #[error("model is not written on the partition: {0}")]
    NotOnPartition(String),

    #[error("finest partition has {size} cells, above the cap of {cap}; pass the force flag to override")]
    CapExceeded { size: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
