use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}: file contains no data rows")]
    EmptyFile(PathBuf),

    #[error("{what}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        what: String,
        expected: u64,
        actual: u64,
    },

    #[error("header: {0}")]
    Header(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class {class} has {size} training sample(s); at least {required} required")]
    ClassTooSmall {
        class: u32,
        size: usize,
        required: usize,
    },

    #[error("class {0} has no training samples")]
    MissingClass(u32),

    #[error("class {class}: {source}")]
    ForClass {
        class: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("MCM linear program is unbounded for C = {c}; C must be positive and the training set non-empty")]
    McmUnbounded { c: f64 },

    #[error("MCM linear program reported infeasible; this indicates a solver fault")]
    McmInfeasible,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{stage} received {count} test-set sample(s)")]
    Leakage { stage: String, count: usize },

    #[error("config: {0}")]
    Config(String),

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

    pub(crate) fn for_class(class: u32, source: Error) -> Self {
        Error::ForClass {
            class,
            source: Box::new(source),
        }
    }
}
