use std::path::PathBuf;

/// Errors produced by the alignment, loss, and evaluation operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("phoneme table line {line}: {msg}")]
    TableParse { line: usize, msg: String },

    #[error("unknown phoneme symbol '{0}'")]
    UnknownSymbol(String),

    #[error("blank is not a phoneme ({0})")]
    BlankNotAllowed(String),

    #[error("invalid {name}: {msg}")]
    InvalidParam { name: &'static str, msg: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("empty label sequence")]
    EmptyLabels,

    #[error("empty reference sequence")]
    EmptyReference,

    #[error("target needs {required} frames under CTC but only {available} are available")]
    InfeasibleTarget { required: usize, available: usize },

    #[error("instance too large for brute force ({0})")]
    SizeGuard(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
