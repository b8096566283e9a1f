//! Synthetic moving-digit videos, supervision regimes and on-disk formats.

pub mod idx;
pub mod manifest;
pub mod sprites;
pub mod supervision;
pub mod synth;

pub use idx::{read_mnist_idx, LabeledGlyphs};
pub use manifest::{load_dataset, write_dataset, Manifest};
pub use sprites::{make_sprite_classes, Glyph, SpriteClass, SpriteSource, VELOCITIES};
pub use supervision::{corrupt_supervision, keyframe_indices, SupervisionRegime};
pub use synth::{build_dataset, synthesize_video, AnnotatedVideo, Boundary, Dataset, DatasetConfig, VideoTrack};
