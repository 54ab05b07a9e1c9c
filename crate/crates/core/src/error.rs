use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate look-at: {0}")]
    DegenerateLookAt(&'static str),
    #[error("matrix is not a rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid field of view {0} degrees, must lie in (0, 180)")]
    BadFov(f64),
    #[error("empty output: {0}")]
    EmptyOutput(String),
    #[error("direction {direction} is not valid for a {kind} movement")]
    BadDirection { kind: String, direction: String },
    #[error("magnitude {value} outside [{min}, {max}]")]
    MagnitudeOutOfRange { value: f64, min: f64, max: f64 },
    #[error("distance factor {value} outside [{min}, {max}]")]
    FactorOutOfRange { value: f64, min: f64, max: f64 },
    #[error("camera eye coincides with the subject")]
    SubjectAtEye,
    #[error("eye {0:?} lies inside scene geometry")]
    EyeInsideGeometry([f64; 3]),
    #[error("bad dimensions: {0}")]
    BadDims(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
