use thiserror::Error;

#[derive(Error, Debug)]
pub enum SbError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("node id {id} out of range (n = {n})")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SbError>;
