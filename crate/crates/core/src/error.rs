use std::path::PathBuf;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid range: lo={lo}, hi={hi}")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("finite-difference oracle failed at coordinate {coordinate}: non-finite objective")]
    OracleFailure { coordinate: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("degenerate task {task_id}: init loss {init} equals best loss {best}")]
    DegenerateTask { task_id: String, init: f64, best: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("incomplete store: {} missing (task, optimizer, seed) triples, first: {}", .gaps.len(), .gaps.first().map(|g| g.to_string()).unwrap_or_default())]
    IncompleteStore { gaps: Vec<crate::store::Gap> },

    #[error("invalid k={k}: must be between 1 and {max}")]
    InvalidK { k: usize, max: usize },

    #[error("search too large: C({n}, {k}) exceeds {limit}")]
    TooLarge { n: usize, k: usize, limit: u64 },

    #[error("too few tasks: {0}")]
    TooFewTasks(String),

    #[error("record conflict: {0} already present")]
    Conflict(String),

    #[error("incompatible profile: store has {store}, record has {record}")]
    IncompatibleProfile { store: String, record: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
