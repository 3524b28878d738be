use std::path::PathBuf;

/// Errors surfaced by the library and the CLI.
///
/// Every variant maps onto a stable [`ErrorKind`] so callers outside Rust
/// (the C ABI, the CLI's exit line) can categorize failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("empty graph: {0}")]
    EmptyGraph(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("eval error: {0}")]
    Eval(String),
}

/// Coarse error category, stable across releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Shape,
    Parse,
    Io,
    Data,
    EmptyGraph,
    Config,
    Training,
    Lookup,
    Eval,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Shape => "shape",
            ErrorKind::Parse => "parse",
            ErrorKind::Io => "io",
            ErrorKind::Data => "data",
            ErrorKind::EmptyGraph => "empty-graph",
            ErrorKind::Config => "config",
            ErrorKind::Training => "training",
            ErrorKind::Lookup => "lookup",
            ErrorKind::Eval => "eval",
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Shape(_) => ErrorKind::Shape,
            Error::Parse { .. } => ErrorKind::Parse,
            Error::Io { .. } => ErrorKind::Io,
            Error::Data(_) => ErrorKind::Data,
            Error::EmptyGraph(_) => ErrorKind::EmptyGraph,
            Error::Config(_) => ErrorKind::Config,
            Error::Training(_) => ErrorKind::Training,
            Error::Lookup(_) => ErrorKind::Lookup,
            Error::Eval(_) => ErrorKind::Eval,
        }
    }

    /// The message without the category prefix of the `Display` form.
    pub fn detail(&self) -> String {
        match self {
            Error::Shape(m)
            | Error::Data(m)
            | Error::EmptyGraph(m)
            | Error::Config(m)
            | Error::Training(m)
            | Error::Lookup(m)
            | Error::Eval(m) => m.clone(),
            Error::Parse { path, line, message } => format!("{}:{line}: {message}", path.display()),
            Error::Io { path, source } => format!("{}: {source}", path.display()),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
