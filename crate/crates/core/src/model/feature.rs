//! Fixed box-feature extractor: area-averaged 8x8 crop.

use serde::{Deserialize, Serialize};

use crate::frame::GrayFrame;
use crate::geometry::{clamp_to_frame, BBox};

pub const FEATURE_GRID: usize = 8;
pub const FEATURE_LEN: usize = FEATURE_GRID * FEATURE_GRID;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Crop `bbox` (clamped to the frame), resample it to an 8x8 grid by exact
/// area averaging and scale intensities to `[0, 1]`.
pub fn extract_feature(frame: &GrayFrame, bbox: &BBox) -> FeatureVector {
    let b = clamp_to_frame(bbox, frame.size());
    if b.w <= 0.0 || b.h <= 0.0 {
        return FeatureVector::zeros(FEATURE_LEN);
    }
    let cw = b.w / FEATURE_GRID as f64;
    let ch = b.h / FEATURE_GRID as f64;
    let mut out = Vec::with_capacity(FEATURE_LEN);
    for gy in 0..FEATURE_GRID {
        let y0 = b.y + gy as f64 * ch;
        let y1 = y0 + ch;
        for gx in 0..FEATURE_GRID {
            let x0 = b.x + gx as f64 * cw;
            let x1 = x0 + cw;
            out.push(cell_mean(frame, x0, y0, x1, y1) / 255.0);
        }
    }
    FeatureVector(out)
}

/// Mean intensity over `[x0, x1) x [y0, y1)`, weighting pixels by covered area.
fn cell_mean(frame: &GrayFrame, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let px0 = x0.floor().max(0.0) as u32;
    let py0 = y0.floor().max(0.0) as u32;
    let px1 = (x1.ceil() as u32).min(frame.width);
    let py1 = (y1.ceil() as u32).min(frame.height);
    let mut sum = 0.0;
    let mut area = 0.0;
    for py in py0..py1 {
        let oy = (y1.min(py as f64 + 1.0) - y0.max(py as f64)).max(0.0);
        if oy == 0.0 {
            continue;
        }
        for px in px0..px1 {
            let ox = (x1.min(px as f64 + 1.0) - x0.max(px as f64)).max(0.0);
            let a = ox * oy;
            sum += a * frame.get(px, py) as f64;
            area += a;
        }
    }
    if area > 0.0 {
        sum / area
    } else {
        0.0
    }
}
