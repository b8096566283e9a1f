//! Trajectories in offset form and pseudo ground-truth tracks for sparsely
//! annotated windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_offset, BBox, Offset};

/// A keyframe box followed by `T` consecutive offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub keyframe_box: BBox,
    pub class_id: u32,
    pub offsets: Vec<Offset>,
    pub start_frame: usize,
}

/// Per-frame boxes of one object over a window, with a validity mask.
///
/// Entries whose `valid` flag is false carry a placeholder box that must not
/// be read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    pub boxes: Vec<BBox>,
    pub valid: Vec<bool>,
    pub class_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoKind {
    Linear,
    Parabola,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrajectorySpec {
    pub kind: PseudoKind,
    /// Focus distance of the parabola `F = (0, f)`; only used for `Parabola`.
    pub focus_f: f64,
    /// Flip the focus sign on every second stitched segment.
    pub alternate_sign: bool,
}

impl PseudoTrajectorySpec {
    pub const DEFAULT_FOCUS: f64 = 8.0;

    pub fn linear() -> Self {
        Self { kind: PseudoKind::Linear, focus_f: Self::DEFAULT_FOCUS, alternate_sign: true }
    }

    pub fn parabola() -> Self {
        Self { kind: PseudoKind::Parabola, focus_f: Self::DEFAULT_FOCUS, alternate_sign: true }
    }

    fn validate(&self) -> Result<()> {
        if self.focus_f == 0.0 || !self.focus_f.is_finite() {
            return Err(Error::InvalidArgument(format!("parabola focus must be finite and non-zero, got {}", self.focus_f)));
        }
        Ok(())
    }
}

/// A generated pseudo track plus how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTrack {
    pub track: GroundTruthTrack,
    /// Parabola vertex `(v1, v2)` when a parabola was fitted.
    pub vertex: Option<(f64, f64)>,
    /// Set when a parabola was requested but the keyframe centers share the
    /// same x and linear interpolation was used instead.
    pub linear_fallback: bool,
}

impl Trajectory {
    pub fn new(keyframe_box: BBox, class_id: u32, offsets: Vec<Offset>, start_frame: usize) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidArgument("a trajectory needs at least one offset".into()));
        }
        Ok(Self { keyframe_box, class_id, offsets, start_frame })
    }

    /// Trajectory length `T`.
    pub fn horizon(&self) -> usize {
        self.offsets.len()
    }

    /// `T + 1` boxes: the keyframe box, then the running sum of offsets.
    pub fn reconstruct_boxes(&self) -> Vec<BBox> {
        let mut boxes = Vec::with_capacity(self.offsets.len() + 1);
        let mut current = self.keyframe_box;
        boxes.push(current);
        for d in &self.offsets {
            current = apply_offset(&current, d);
            boxes.push(current);
        }
        boxes
    }
}

impl GroundTruthTrack {
    pub fn new(boxes: Vec<BBox>, valid: Vec<bool>, class_id: u32) -> Result<Self> {
        if boxes.len() != valid.len() {
            return Err(Error::LengthMismatch { expected: boxes.len(), actual: valid.len() });
        }
        if boxes.is_empty() {
            return Err(Error::InvalidArgument("a ground-truth track needs at least one frame".into()));
        }
        Ok(Self { boxes, valid, class_id })
    }

    /// All frames valid.
    pub fn fully_valid(boxes: Vec<BBox>, class_id: u32) -> Self {
        let valid = vec![true; boxes.len()];
        Self { boxes, valid, class_id }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn get(&self, frame: usize) -> Option<BBox> {
        match self.valid.get(frame) {
            Some(true) => Some(self.boxes[frame]),
            _ => None,
        }
    }

    /// Frames `start..=start + horizon`; frames past the end of the track are invalid.
    pub fn window(&self, start: usize, horizon: usize) -> GroundTruthTrack {
        let mut boxes = Vec::with_capacity(horizon + 1);
        let mut valid = Vec::with_capacity(horizon + 1);
        for frame in start..=start + horizon {
            match self.boxes.get(frame) {
                Some(b) => {
                    boxes.push(*b);
                    valid.push(self.valid[frame]);
                }
                None => {
                    boxes.push(BBox::default());
                    valid.push(false);
                }
            }
        }
        GroundTruthTrack { boxes, valid, class_id: self.class_id }
    }
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + s * (b - a)
}

/// Linearly interpolated track between two annotated keyframes `horizon` frames apart.
pub fn linear_pseudo_track(start: BBox, end: BBox, horizon: usize, class_id: u32) -> Result<GroundTruthTrack> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("pseudo track horizon must be at least 1".into()));
    }
    let (s, e) = (start.to_array(), end.to_array());
    let mut boxes = Vec::with_capacity(horizon + 1);
    boxes.push(start);
    for l in 1..horizon {
        let frac = l as f64 / horizon as f64;
        let mut b = [0.0; 4];
        for c in 0..4 {
            b[c] = lerp(s[c], e[c], frac);
        }
        boxes.push(BBox::from_array(b));
    }
    boxes.push(end);
    Ok(GroundTruthTrack::fully_valid(boxes, class_id))
}

/// Vertex `(v1, v2)` of `y = (x - v1)^2 / (4f) + v2` through both points.
///
/// Returns `None` when the points share the same x.
pub fn parabola_vertex(p0: (f64, f64), p1: (f64, f64), focus_f: f64) -> Option<(f64, f64)> {
    let dx = p1.0 - p0.0;
    if dx == 0.0 {
        return None;
    }
    // y1 - y0 = (x1 - x0)(x1 + x0 - 2 v1) / (4f)
    let v1 = 0.5 * (p0.0 + p1.0) - 2.0 * focus_f * (p1.1 - p0.1) / dx;
    let v2 = p0.1 - (p0.0 - v1).powi(2) / (4.0 * focus_f);
    Some((v1, v2))
}

pub fn parabola_y(x: f64, vertex: (f64, f64), focus_f: f64) -> f64 {
    (x - vertex.0).powi(2) / (4.0 * focus_f) + vertex.1
}

/// Track whose centers follow a parabola with focus distance `focus_f`
/// through both keyframe centers, sampled uniformly in x. Width and height
/// are interpolated linearly.
pub fn parabola_pseudo_track(start: BBox, end: BBox, horizon: usize, focus_f: f64, class_id: u32) -> Result<PseudoTrack> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("pseudo track horizon must be at least 1".into()));
    }
    PseudoTrajectorySpec { focus_f, ..PseudoTrajectorySpec::parabola() }.validate()?;
    let (c0, c1) = (start.center(), end.center());
    let Some(vertex) = parabola_vertex(c0, c1, focus_f) else {
        return Ok(PseudoTrack {
            track: linear_pseudo_track(start, end, horizon, class_id)?,
            vertex: None,
            linear_fallback: true,
        });
    };
    let mut boxes = Vec::with_capacity(horizon + 1);
    boxes.push(start);
    for l in 1..horizon {
        let frac = l as f64 / horizon as f64;
        let cx = lerp(c0.0, c1.0, frac);
        let cy = parabola_y(cx, vertex, focus_f);
        let w = lerp(start.w, end.w, frac);
        let h = lerp(start.h, end.h, frac);
        boxes.push(BBox::from_center(cx, cy, w, h));
    }
    boxes.push(end);
    Ok(PseudoTrack { track: GroundTruthTrack::fully_valid(boxes, class_id), vertex: Some(vertex), linear_fallback: false })
}

/// Pseudo track for one segment according to `spec`, with the focus sign given.
pub fn pseudo_track(start: BBox, end: BBox, horizon: usize, spec: &PseudoTrajectorySpec, class_id: u32) -> Result<PseudoTrack> {
    match spec.kind {
        PseudoKind::Linear => Ok(PseudoTrack {
            track: linear_pseudo_track(start, end, horizon, class_id)?,
            vertex: None,
            linear_fallback: false,
        }),
        PseudoKind::Parabola => parabola_pseudo_track(start, end, horizon, spec.focus_f, class_id),
    }
}

/// Concatenate per-segment pseudo tracks between consecutive keyframes.
///
/// The returned track covers frames `keyframe_indices[0] ..= last index`,
/// indexed relative to the first keyframe. With a parabola spec and
/// `alternate_sign`, segment `i` uses focus `(-1)^i * focus_f`.
pub fn stitch_segments(
    keyframe_boxes: &[BBox],
    keyframe_indices: &[usize],
    spec: &PseudoTrajectorySpec,
    class_id: u32,
) -> Result<GroundTruthTrack> {
    if keyframe_boxes.len() != keyframe_indices.len() {
        return Err(Error::LengthMismatch { expected: keyframe_indices.len(), actual: keyframe_boxes.len() });
    }
    if keyframe_boxes.len() < 2 {
        return Err(Error::InvalidArgument("stitching needs at least two keyframes".into()));
    }
    if keyframe_indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("keyframe indices must be strictly increasing".into()));
    }
    spec.validate()?;
    let mut boxes = vec![keyframe_boxes[0]];
    for (i, (pair, idx)) in keyframe_boxes.windows(2).zip(keyframe_indices.windows(2)).enumerate() {
        let sign = if spec.alternate_sign && i % 2 == 1 { -1.0 } else { 1.0 };
        let seg_spec = PseudoTrajectorySpec { focus_f: sign * spec.focus_f, ..*spec };
        let seg = pseudo_track(pair[0], pair[1], idx[1] - idx[0], &seg_spec, class_id)?;
        boxes.extend_from_slice(&seg.track.boxes[1..]);
    }
    Ok(GroundTruthTrack::fully_valid(boxes, class_id))
}
