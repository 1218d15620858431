use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("light matrix is rank deficient (smallest eigenvalue of L L^T = {0:e})")]
    RankDeficient(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no valid pixels left after masking ({excluded} excluded)")]
    NoValidPixels { excluded: usize },

    #[error("zero patch matrix: NSRE is undefined")]
    ZeroPatches,

    #[error("target SNR {target_db} dB is unreachable with scale in [{lo:e}, {hi:e}]")]
    SnrUnreachable { target_db: f64, lo: f64, hi: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
