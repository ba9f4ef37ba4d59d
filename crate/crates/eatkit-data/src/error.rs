use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset root {0} contains no class directories with decodable images")]
    EmptyRoot(PathBuf),

    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),

    #[error("{path}: {kind} at byte offset {offset}")]
    Decode {
        path: PathBuf,
        kind: String,
        offset: usize,
    },

    #[error("{path}: unsupported image format")]
    UnsupportedFormat { path: PathBuf },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("png: {0}")]
    Png(String),

    #[error("tensor: {0}")]
    Tensor(#[from] eatkit_tensor::TensorError),

    #[error("index cache: {0}")]
    Cache(String),
}
