use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by every stage of the pipeline.
///
/// [`Error::name`] gives a stable identifier for each variant; the CLI
/// prints it so scripts can match on failures without parsing prose.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("image contains no ink")]
    NoInk,
    #[error("box ({left},{top},{right},{bottom}) lies outside a {width}x{height} image")]
    OutOfBounds {
        left: usize,
        top: usize,
        right: usize,
        bottom: usize,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("constant-intensity input has no correlation")]
    ConstantImage,
    #[error("values span a zero range")]
    DegenerateRange,
    #[error("{k}x{k} block does not fit in a {width}x{height} coefficient grid")]
    BlockTooLarge {
        k: usize,
        width: usize,
        height: usize,
    },
    #[error("width must be positive and finite, got {0}")]
    NonPositiveWidth(f64),
    #[error("identical feature vectors carry different labels ({0} vs {1})")]
    DuplicateConflict(String, String),
    #[error("interpolation system is singular")]
    SingularSystem,
    #[error("training cost became non-finite at epoch {epoch}")]
    NonFiniteCost { epoch: usize },
    #[error("distortion pushes ink off the {width}x{height} canvas")]
    InkClipped { width: usize, height: usize },
    #[error("no images found under {}", .0.display())]
    EmptyDirectory(PathBuf),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("malformed csv: {0}")]
    MalformedCsv(String),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::MalformedImage(_) => "MalformedImage",
            Error::IoFailure(_) => "IoFailure",
            Error::NoInk => "NoInk",
            Error::OutOfBounds { .. } => "OutOfBounds",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ConstantImage => "ConstantImage",
            Error::DegenerateRange => "DegenerateRange",
            Error::BlockTooLarge { .. } => "BlockTooLarge",
            Error::NonPositiveWidth(_) => "NonPositiveWidth",
            Error::DuplicateConflict(..) => "DuplicateConflict",
            Error::SingularSystem => "SingularSystem",
            Error::NonFiniteCost { .. } => "NonFiniteCost",
            Error::InkClipped { .. } => "InkClipped",
            Error::EmptyDirectory(_) => "EmptyDirectory",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::MalformedModel(_) => "MalformedModel",
            Error::MalformedCsv(_) => "MalformedCsv",
        }
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::IoFailure(io),
            other => Error::MalformedCsv(format!("{other:?}")),
        }
    }
}
