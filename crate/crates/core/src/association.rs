//! Matching predicted trajectories to ground-truth objects.

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};
use crate::trajectory::{GroundTruthTrack, Trajectory};

/// Foreground IoU threshold used when none is configured.
pub const DEFAULT_FG_THRESHOLD: f64 = 0.5;

/// One annotated object in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub track_id: u32,
    pub class_id: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub matched: Option<usize>,
    pub iou: f64,
    pub is_foreground: bool,
}

/// Regression target for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackTarget {
    pub track_id: u32,
    pub class_id: u32,
    pub track: GroundTruthTrack,
}

/// Match every prediction to the ground-truth box of highest IoU.
///
/// Ties go to the lowest ground-truth index. A prediction that overlaps no
/// ground truth stays unmatched.
pub fn match_boxes(preds: &[BBox], gts: &[BBox], fg_threshold: f64) -> Vec<Assignment> {
    preds
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                let v = iou(p, g);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, v)) if v > 0.0 => Assignment { matched: Some(j), iou: v, is_foreground: v >= fg_threshold },
                _ => Assignment { matched: None, iou: 0.0, is_foreground: false },
            }
        })
        .collect()
}

/// Bind each trajectory to the object its keyframe box matches, and collect
/// that object's boxes over the trajectory window.
///
/// `frames[f]` lists the objects annotated in absolute frame `f`. Frames
/// where the object is absent, or that lie past the end of `frames`, are
/// marked invalid. Background keyframe matches yield `None`.
pub fn assign_track_targets(trajectories: &[Trajectory], frames: &[Vec<GtObject>], fg_threshold: f64) -> Vec<Option<TrackTarget>> {
    trajectories
        .iter()
        .map(|traj| {
            let t = traj.start_frame;
            let objects = frames.get(t)?;
            let gt_boxes: Vec<BBox> = objects.iter().map(|o| o.bbox).collect();
            let a = match_boxes(std::slice::from_ref(&traj.keyframe_box), &gt_boxes, fg_threshold)[0];
            if !a.is_foreground {
                return None;
            }
            let obj = objects[a.matched?];
            let horizon = traj.horizon();
            let mut boxes = Vec::with_capacity(horizon + 1);
            let mut valid = Vec::with_capacity(horizon + 1);
            for f in t..=t + horizon {
                match frames.get(f).and_then(|objs| objs.iter().find(|o| o.track_id == obj.track_id)) {
                    Some(o) => {
                        boxes.push(o.bbox);
                        valid.push(true);
                    }
                    None => {
                        boxes.push(BBox::default());
                        valid.push(false);
                    }
                }
            }
            Some(TrackTarget {
                track_id: obj.track_id,
                class_id: obj.class_id,
                track: GroundTruthTrack { boxes, valid, class_id: obj.class_id },
            })
        })
        .collect()
}
