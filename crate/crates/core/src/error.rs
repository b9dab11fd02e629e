use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed npy header: {0}")]
    MalformedHeader(String),

    #[error("unsupported dtype {0:?}, expected little-endian float32 ('<f4')")]
    UnsupportedDtype(String),

    #[error("tensor contains a non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },

    #[error("malformed pgm: {0}")]
    MalformedPgm(String),

    #[error("illegal mask label {value} at pixel {index}; allowed labels are 0, 1 and 255")]
    IllegalLabelValue { value: u8, index: usize },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("i/o failure on {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("k = {k} exceeds the number of points ({points})")]
    TooFewPoints { k: usize, points: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("upsample target {target_h}x{target_w} is smaller than source {source_h}x{source_w}")]
    BadTarget {
        source_h: usize,
        source_w: usize,
        target_h: usize,
        target_w: usize,
    },

    #[error("evaluation needs at least one positive (OoD) pixel")]
    NoPositives,

    #[error("evaluation needs at least one negative (in-distribution) pixel")]
    NoNegatives,

    #[error("dataset contains no samples")]
    EmptyDataset,

    #[error("sample {name:?} is incomplete: missing {}", missing.display())]
    IncompleteSample { name: String, missing: PathBuf },

    #[error("sample {name:?}: {cause}")]
    Sample { name: String, cause: Box<Error> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_sample(self, name: &str) -> Self {
        Error::Sample {
            name: name.to_owned(),
            cause: Box::new(self),
        }
    }
}
