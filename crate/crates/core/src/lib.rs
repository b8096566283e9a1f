//! Keyframe-driven trajectory anticipation for video object detection.
//!
//! A detector runs on keyframes only. For every keyframe detection a small
//! head predicts `T` box offsets, and the boxes for the intermediate frames
//! are reconstructed by accumulating them.

pub mod association;
pub mod config;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod losses;
pub mod model;
pub mod seed;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{apply_offset, iou, offset_between, BBox, FrameSize, Offset};
pub use trajectory::{GroundTruthTrack, Trajectory};
