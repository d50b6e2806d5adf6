use std::path::PathBuf;

use thiserror::Error;

use crate::pipeline::TrackStatus;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box has non-positive extent ({width} x {height})")]
    Degenerate { width: f64, height: f64 },
    #[error("box coordinates must be finite")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalmanError {
    #[error("deformation ratio must be positive, got {0}")]
    NonPositiveRatio(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("state produced a degenerate box: {0}")]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GalleryError {
    #[error("descriptor has zero or non-finite norm")]
    ZeroDescriptor,
    #[error("descriptor dimension {got} does not match gallery dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
    #[error("embedding sidecar: {0}")]
    Sidecar(String),
    #[error("frame {frame}: {detections} detections but {descriptors} descriptors")]
    CountMismatch {
        frame: u32,
        detections: usize,
        descriptors: usize,
    },
    #[error("seqinfo: {0}")]
    SeqInfo(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame {got} received after frame {last}")]
    OutOfOrder { last: u32, got: u32 },
    #[error("frame {frame}: {reason}")]
    BadDescriptors { frame: u32, reason: String },
    #[error("track {id}: illegal status transition {from:?} -> {to:?}")]
    IllegalTransition {
        id: u64,
        from: TrackStatus,
        to: TrackStatus,
    },
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
}
