//! Motion-supervision regimes: how the boxes between keyframes are labeled.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameSize};
use crate::trajectory::{stitch_segments, GroundTruthTrack, PseudoTrajectorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionRegime {
    /// True boxes at every frame.
    Annotated,
    /// Only keyframes are labeled.
    None,
    /// Boxes between keyframes drawn uniformly inside the frame.
    Random,
    /// Boxes between keyframes follow stitched parabolas.
    Smooth,
}

impl SupervisionRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            SupervisionRegime::Annotated => "annotated",
            SupervisionRegime::None => "none",
            SupervisionRegime::Random => "random",
            SupervisionRegime::Smooth => "smooth",
        }
    }
}

impl FromStr for SupervisionRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annotated" => Ok(Self::Annotated),
            "none" => Ok(Self::None),
            "random" => Ok(Self::Random),
            "smooth" => Ok(Self::Smooth),
            other => Err(Error::InvalidArgument(format!("unknown supervision regime '{other}'"))),
        }
    }
}

/// Frames `0, T, 2T, ...` plus the last frame.
pub fn keyframe_indices(n_frames: usize, step: usize) -> Vec<usize> {
    if n_frames == 0 || step == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..n_frames).step_by(step).collect();
    if *idx.last().unwrap() != n_frames - 1 {
        idx.push(n_frames - 1);
    }
    idx
}

/// Relabel a full-video track according to `regime`, keeping keyframe boxes.
pub fn corrupt_supervision(
    track: &GroundTruthTrack,
    regime: SupervisionRegime,
    keyframe_step: usize,
    frame: FrameSize,
    rng: &mut impl Rng,
) -> Result<GroundTruthTrack> {
    if keyframe_step == 0 {
        return Err(Error::InvalidArgument("keyframe step must be at least 1".into()));
    }
    if regime == SupervisionRegime::Annotated {
        return Ok(track.clone());
    }
    let keys: Vec<usize> = keyframe_indices(track.len(), keyframe_step).into_iter().filter(|&k| track.valid[k]).collect();
    let mut out = track.clone();
    match regime {
        SupervisionRegime::Annotated => unreachable!(),
        SupervisionRegime::None => {
            out.valid.iter_mut().for_each(|v| *v = false);
            for &k in &keys {
                out.valid[k] = true;
            }
        }
        SupervisionRegime::Random => {
            for f in 0..track.len() {
                if keys.contains(&f) || !track.valid[f] {
                    continue;
                }
                let b = track.boxes[f];
                let max_x = (frame.width as f64 - b.w).max(0.0);
                let max_y = (frame.height as f64 - b.h).max(0.0);
                out.boxes[f] = BBox::new(rng.random_range(0.0..=max_x), rng.random_range(0.0..=max_y), b.w, b.h);
            }
        }
        SupervisionRegime::Smooth => {
            if keys.len() >= 2 {
                let kb: Vec<BBox> = keys.iter().map(|&k| track.boxes[k]).collect();
                let stitched = stitch_segments(&kb, &keys, &PseudoTrajectorySpec::parabola(), track.class_id)?;
                for (i, b) in stitched.boxes.into_iter().enumerate() {
                    out.boxes[keys[0] + i] = b;
                    out.valid[keys[0] + i] = true;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::trajectory::{parabola_vertex, parabola_y};

    fn linear_track(n: usize) -> GroundTruthTrack {
        GroundTruthTrack::fully_valid((0..n).map(|f| BBox::new(2.0 * f as f64, 1.0 * f as f64, 16.0, 16.0)).collect(), 4)
    }

    #[test]
    fn annotated_is_identity() {
        let t = linear_track(32);
        let mut rng = seed::stream(0, "t");
        assert_eq!(corrupt_supervision(&t, SupervisionRegime::Annotated, 8, FrameSize::new(64, 64), &mut rng).unwrap(), t);
    }

    #[test]
    fn none_keeps_keyframes() {
        let t = linear_track(32);
        let mut rng = seed::stream(0, "t");
        let c = corrupt_supervision(&t, SupervisionRegime::None, 8, FrameSize::new(64, 64), &mut rng).unwrap();
        let valid: Vec<usize> = (0..32).filter(|&f| c.valid[f]).collect();
        assert_eq!(valid, vec![0, 8, 16, 24, 31]);
    }

    #[test]
    fn smooth_on_parabolas() {
        let t = linear_track(32);
        let mut rng = seed::stream(0, "t");
        let c = corrupt_supervision(&t, SupervisionRegime::Smooth, 8, FrameSize::new(64, 64), &mut rng).unwrap();
        let keys = keyframe_indices(32, 8);
        for &k in &keys {
            assert_eq!(c.boxes[k], t.boxes[k]);
        }
        for (seg, w) in keys.windows(2).enumerate() {
            let f = if seg % 2 == 1 { -8.0 } else { 8.0 };
            let vertex = parabola_vertex(t.boxes[w[0]].center(), t.boxes[w[1]].center(), f).unwrap();
            for fr in w[0]..=w[1] {
                let (cx, cy) = c.boxes[fr].center();
                assert!((cy - parabola_y(cx, vertex, f)).abs() < 1e-9);
            }
        }
        assert!(c.valid.iter().all(|v| *v));
    }

    #[test]
    fn random_stays_in_frame() {
        let t = linear_track(32);
        let mut rng = seed::stream(0, "t");
        let c = corrupt_supervision(&t, SupervisionRegime::Random, 8, FrameSize::new(64, 64), &mut rng).unwrap();
        for f in (0..32).filter(|f| f % 8 != 0 && *f != 31) {
            let b = c.boxes[f];
            assert!(b.x >= 0.0 && b.x + b.w <= 64.0 && b.y >= 0.0 && b.y + b.h <= 64.0);
            assert_eq!((b.w, b.h), (16.0, 16.0));
        }
        assert_eq!(c.boxes[8], t.boxes[8]);
        assert_ne!(c.boxes[3], t.boxes[3]);
        assert!("bogus".parse::<SupervisionRegime>().is_err());
    }
}
