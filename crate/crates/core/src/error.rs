use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no class subdirectories found under {0}")]
    NoClassesFound(PathBuf),

    #[error("class directory `{0}` contains no decodable images")]
    EmptyClass(String),

    #[error("class `{class}` has {have} images but the split needs {need}")]
    InsufficientImages {
        class: String,
        have: usize,
        need: usize,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image: {0}")]
    Decode(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("cannot load backbone weights: {0}")]
    WeightLoad(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("malformed archive: {0}")]
    Format(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        Error::Shape(message.into())
    }

    /// Process exit code for the CLI: 2 for usage/config problems, 1 for
    /// everything that went wrong while processing data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 1,
        }
    }
}
