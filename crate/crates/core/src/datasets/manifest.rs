//! On-disk dataset layout: one PGM per frame plus a JSON manifest.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/<split>/<video id>/frame_<nn>.pgm
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::{AnnotatedVideo, Dataset, DatasetConfig, VideoTrack};
use crate::error::{Error, Result};
use crate::frame::GrayFrame;
use crate::geometry::BBox;
use crate::trajectory::GroundTruthTrack;

pub const MANIFEST_SCHEMA: &str = "moving-digits-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
    pub config: DatasetConfig,
    pub videos: Vec<VideoEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub id: String,
    pub split: String,
    pub class_id: u32,
    pub start: [i32; 2],
    /// Paths relative to the manifest directory.
    pub frames: Vec<String>,
    pub tracks: Vec<TrackEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackEntry {
    pub track_id: u32,
    pub class_id: u32,
    /// `[x, y, w, h]` per frame.
    pub boxes: Vec<[f64; 4]>,
    pub valid: Vec<bool>,
}

impl Manifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(bytes)?;
        m.check()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    fn check(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::Format(format!("unexpected manifest schema '{}'", self.schema)));
        }
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", self.version)));
        }
        for v in &self.videos {
            if v.split != "train" && v.split != "test" {
                return Err(Error::Format(format!("video {}: unknown split '{}'", v.id, v.split)));
            }
            for t in &v.tracks {
                if t.boxes.len() != v.frames.len() || t.valid.len() != v.frames.len() {
                    return Err(Error::Format(format!("video {}: track {} length differs from frame count", v.id, t.track_id)));
                }
            }
            if v.frames.iter().any(|p| Path::new(p).is_absolute() || p.split('/').any(|c| c == "..")) {
                return Err(Error::Format(format!("video {}: frame paths must stay inside the dataset directory", v.id)));
            }
        }
        Ok(())
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        let entry = |split: &str, v: &AnnotatedVideo| VideoEntry {
            id: v.id.clone(),
            split: split.to_string(),
            class_id: v.class_id,
            start: [v.start.0, v.start.1],
            frames: (0..v.frames.len()).map(|f| format!("{split}/{}/frame_{f:02}.pgm", v.id)).collect(),
            tracks: v
                .tracks
                .iter()
                .map(|t| TrackEntry {
                    track_id: t.track_id,
                    class_id: t.track.class_id,
                    boxes: t.track.boxes.iter().map(|b| b.to_array()).collect(),
                    valid: t.track.valid.clone(),
                })
                .collect(),
        };
        let videos = ds.train.iter().map(|v| entry("train", v)).chain(ds.test.iter().map(|v| entry("test", v))).collect();
        Manifest {
            schema: MANIFEST_SCHEMA.to_string(),
            version: MANIFEST_VERSION,
            seed: ds.config.seed,
            config: ds.config.clone(),
            videos,
        }
    }
}

/// Write frames and the manifest under `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<Manifest> {
    let manifest = Manifest::from_dataset(ds);
    let videos = ds.train.iter().chain(&ds.test);
    for (entry, video) in manifest.videos.iter().zip(videos) {
        for (rel, frame) in entry.frames.iter().zip(&video.frames) {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, frame.to_pgm()).map_err(|e| Error::io(&path, e))?;
        }
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Read a dataset written by [`write_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = Manifest::from_json(&bytes)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for entry in &manifest.videos {
        let frames = entry
            .frames
            .iter()
            .map(|rel| {
                let p = dir.join(rel);
                let b = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
                GrayFrame::from_pgm(&b)
            })
            .collect::<Result<Vec<_>>>()?;
        let tracks = entry
            .tracks
            .iter()
            .map(|t| VideoTrack {
                track_id: t.track_id,
                track: GroundTruthTrack { boxes: t.boxes.iter().map(|b| BBox::from_array(*b)).collect(), valid: t.valid.clone(), class_id: t.class_id },
            })
            .collect();
        let video = AnnotatedVideo { id: entry.id.clone(), class_id: entry.class_id, start: (entry.start[0], entry.start[1]), frames, tracks };
        if entry.split == "train" {
            train.push(video);
        } else {
            test.push(video);
        }
    }
    Ok(Dataset { config: manifest.config, train, test })
}
