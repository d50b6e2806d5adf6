//! Multi-object tracking with occupancy maps.
//!
//! The tracker keeps a probability map of where detections usually appear
//! and a per-frame prediction map of where tracks are expected. The two
//! maps decide whether a lost track is kept alive as a prediction or parked
//! for re-identification, and whether a track is associated by overlap or by
//! appearance. See [`pipeline::MapTracker`] for the per-frame procedure.

pub mod assignment;
pub mod association;
pub mod config;
pub mod error;
pub mod filtering;
pub mod formats;
pub mod geometry;
pub mod kalman;
pub mod maps;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use config::{parse_config, read_config, PipelineConfig};
pub use error::{ConfigError, FormatError, GalleryError, GeometryError, KalmanError, PipelineError};
pub use geometry::{ioi, iou, BoundingBox};
pub use pipeline::{run_sequence, BaselineTracker, MapTracker, TrackStatus, TrackerMode};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/kalman.md")]
    mod kalman {}
    #[doc = include_str!("../../../book/src/maps.md")]
    mod maps {}
    #[doc = include_str!("../../../book/src/association.md")]
    mod association {}
    #[doc = include_str!("../../../book/src/filtering.md")]
    mod filtering {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
