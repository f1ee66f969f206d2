use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer} ({layer_name}): {msg}")]
    Shape {
        layer: usize,
        layer_name: String,
        msg: String,
    },
    #[error("{0}")]
    Argument(String),
    #[error("{0}")]
    State(String),
    #[error("{}: {msg}", path.display())]
    Checkpoint { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
