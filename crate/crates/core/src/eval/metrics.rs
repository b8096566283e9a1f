//! Average precision with greedy matching and 101-point interpolation.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::trajectory::{GroundTruthTrack, Trajectory};

/// IoU thresholds `0.50, 0.55, ..., 0.95`.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub frame_id: u64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: u32,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtBox {
    pub frame_id: u64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: u32,
}

/// True/false-positive flags of `class_id` detections in descending score
/// order, plus the number of ground-truth boxes of that class.
pub fn match_detections(dets: &[Detection], gts: &[GtBox], class_id: u32, iou_thr: f64) -> Result<(Vec<bool>, usize)> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(Error::InvalidArgument(format!("IoU threshold must lie in (0, 1], got {iou_thr}")));
    }
    if let Some(d) = dets.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite detection score {}", d.score)));
    }
    let mut by_frame: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut n_gt = 0;
    for (i, g) in gts.iter().enumerate() {
        if g.class_id == class_id {
            by_frame.entry(g.frame_id).or_default().push(i);
            n_gt += 1;
        }
    }
    let mut order: Vec<&Detection> = dets.iter().filter(|d| d.class_id == class_id).collect();
    // stable sort keeps input order among equal scores
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut taken = vec![false; gts.len()];
    let flags = order
        .iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for &g in by_frame.get(&d.frame_id).map(Vec::as_slice).unwrap_or(&[]) {
                if taken[g] {
                    continue;
                }
                let v = iou(&d.bbox, &gts[g].bbox);
                if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            best.is_some()
        })
        .collect();
    Ok((flags, n_gt))
}

/// 101-point interpolated AP from ranked TP flags.
pub fn interpolated_ap(flags: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(flags.len());
    for (k, &f) in flags.iter().enumerate() {
        tp += f as usize;
        points.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope from the right
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut sum = 0.0;
    let mut j = 0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        while j < points.len() && points[j].0 < level {
            j += 1;
        }
        if j < points.len() {
            sum += points[j].1;
        }
    }
    Some(sum / RECALL_POINTS as f64)
}

/// AP of one class at one IoU threshold; `None` when the class has no ground truth.
pub fn average_precision(dets: &[Detection], gts: &[GtBox], class_id: u32, iou_thr: f64) -> Result<Option<f64>> {
    let (flags, n_gt) = match_detections(dets, gts, class_id, iou_thr)?;
    Ok(interpolated_ap(&flags, n_gt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApEntry {
    pub class_id: u32,
    pub iou_threshold: f64,
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub thresholds: Vec<f64>,
    /// Classes with at least one ground-truth box; the only ones averaged.
    pub classes: Vec<u32>,
    /// Classes that only appear among detections.
    pub absent_classes: Vec<u32>,
    pub entries: Vec<ApEntry>,
    pub map_per_threshold: Vec<f64>,
    /// Mean of `map_per_threshold`; 0 when no class is present.
    pub grand_map: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MetricReport {
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds.iter().position(|t| (t - threshold).abs() < 1e-12).map(|i| self.map_per_threshold[i])
    }
}

/// AP for every present class at every threshold in `0.50:0.05:0.95`.
pub fn map_range(dets: &[Detection], gts: &[GtBox]) -> Result<MetricReport> {
    let thresholds = iou_thresholds();
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.class_id).collect();
    let absent_classes: Vec<u32> =
        dets.iter().map(|d| d.class_id).collect::<BTreeSet<_>>().difference(&classes).copied().collect();
    let mut entries = Vec::new();
    let mut map_per_threshold = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for &thr in &thresholds {
        let mut sum = 0.0;
        for &c in &classes {
            let (flags, n_gt) = match_detections(dets, gts, c, thr)?;
            let ap = interpolated_ap(&flags, n_gt).expect("class has ground truth");
            let t = flags.iter().filter(|f| **f).count();
            let e = ApEntry { class_id: c, iou_threshold: thr, ap, tp: t, fp: flags.len() - t, fn_: n_gt - t };
            tp += e.tp;
            fp += e.fp;
            fn_ += e.fn_;
            sum += ap;
            entries.push(e);
        }
        map_per_threshold.push(if classes.is_empty() { 0.0 } else { sum / classes.len() as f64 });
    }
    let grand_map = map_per_threshold.iter().sum::<f64>() / thresholds.len() as f64;
    Ok(MetricReport { thresholds, classes: classes.into_iter().collect(), absent_classes, entries, map_per_threshold, grand_map, tp, fp, fn_ })
}

/// Mean IoU between reconstructed and ground-truth boxes over valid frames.
pub fn trajectory_iou(pred: &Trajectory, gt: &GroundTruthTrack) -> Result<Option<f64>> {
    let boxes = pred.reconstruct_boxes();
    if boxes.len() != gt.len() {
        return Err(Error::LengthMismatch { expected: boxes.len(), actual: gt.len() });
    }
    let vals: Vec<f64> = boxes.iter().zip(&gt.boxes).zip(&gt.valid).filter(|(_, v)| **v).map(|((p, g), _)| iou(p, g)).collect();
    Ok((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Offset;
    use proptest::prelude::*;

    fn det(frame_id: u64, x: f64, score: f64) -> Detection {
        Detection { frame_id, bbox: BBox::new(x, 0.0, 10.0, 10.0), class_id: 0, score }
    }

    fn gt(frame_id: u64, x: f64) -> GtBox {
        GtBox { frame_id, bbox: BBox::new(x, 0.0, 10.0, 10.0), class_id: 0 }
    }

    #[test]
    fn hand_pr_cases() {
        let g = [gt(0, 0.0)];
        assert_eq!(average_precision(&[det(0, 0.0, 1.0)], &g, 0, 0.5).unwrap(), Some(1.0));
        assert_eq!(average_precision(&[det(0, 0.0, 0.9), det(0, 40.0, 0.1)], &g, 0, 0.5).unwrap(), Some(1.0));
        assert_eq!(average_precision(&[det(0, 40.0, 0.9), det(0, 0.0, 0.1)], &g, 0, 0.5).unwrap(), Some(0.5));
        assert_eq!(average_precision(&[], &g, 0, 0.5).unwrap(), Some(0.0));
        assert_eq!(average_precision(&[det(0, 0.0, 1.0)], &g, 3, 0.5).unwrap(), None);
        assert!(average_precision(&[], &g, 0, 0.0).is_err());
        assert!(average_precision(&[det(0, 0.0, f64::NAN)], &g, 0, 0.5).is_err());
    }

    #[test]
    fn ties_keep_input_order() {
        let g = [gt(0, 0.0)];
        assert_eq!(average_precision(&[det(0, 0.0, 0.5), det(0, 40.0, 0.5)], &g, 0, 0.5).unwrap(), Some(1.0));
        assert_eq!(average_precision(&[det(0, 40.0, 0.5), det(0, 0.0, 0.5)], &g, 0, 0.5).unwrap(), Some(0.5));
    }

    #[test]
    fn iou_point_six_shift() {
        // 10x10 boxes shifted by s in x: IoU = (10 - s) / (10 + s) = 0.6 at s = 2.5
        let gts: Vec<GtBox> = (0..4).map(|f| gt(f, 0.0)).collect();
        let dets: Vec<Detection> = (0..4).map(|f| det(f, 2.5, 1.0)).collect();
        assert_eq!(iou(&dets[0].bbox, &gts[0].bbox), 0.6);
        let r = map_range(&dets, &gts).unwrap();
        for (t, m) in r.thresholds.iter().zip(&r.map_per_threshold) {
            assert_eq!(*m, if *t <= 0.6 { 1.0 } else { 0.0 }, "threshold {t}");
        }
    }

    #[test]
    fn report_shape_and_empty_cases() {
        let gts = [gt(0, 0.0), GtBox { class_id: 2, ..gt(1, 5.0) }];
        let perfect = [det(0, 0.0, 1.0), Detection { class_id: 2, ..det(1, 5.0, 1.0) }];
        let r = map_range(&perfect, &gts).unwrap();
        assert_eq!(r.entries.len(), 20);
        assert!(r.entries.iter().all(|e| e.ap == 1.0));
        assert_eq!(r.grand_map, 1.0);
        assert_eq!((r.tp, r.fp, r.fn_), (20, 0, 0));
        let r = map_range(&[], &gts).unwrap();
        assert!(r.map_per_threshold.iter().all(|m| *m == 0.0));
        assert_eq!(r.fn_, 20);
        let r = map_range(&[Detection { class_id: 7, ..det(0, 0.0, 1.0) }], &gts).unwrap();
        assert_eq!(r.absent_classes, vec![7]);
        assert_eq!(r.classes, vec![0, 2]);
        assert_eq!(r.map_at(0.75), Some(0.0));
    }

    #[test]
    fn trajectory_iou_examples() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let t = Trajectory::new(b, 0, vec![Offset::new(1.0, 0.0, 0.0, 0.0); 3], 0).unwrap();
        let gt_same = GroundTruthTrack::fully_valid(t.reconstruct_boxes(), 0);
        assert_eq!(trajectory_iou(&t, &gt_same).unwrap(), Some(1.0));
        let shifted = GroundTruthTrack::fully_valid(t.reconstruct_boxes().iter().map(|b| BBox::new(b.x + 1.0, b.y, b.w, b.h)).collect(), 0);
        assert!((trajectory_iou(&t, &shifted).unwrap().unwrap() - 90.0 / 110.0).abs() < 1e-12);
        let none = GroundTruthTrack::new(vec![b; 4], vec![false; 4], 0).unwrap();
        assert_eq!(trajectory_iou(&t, &none).unwrap(), None);
        assert!(trajectory_iou(&t, &GroundTruthTrack::fully_valid(vec![b; 2], 0)).is_err());
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<Detection>, Vec<GtBox>)> {
        let d = (0..3u64, 0.0..30.0f64, 0.0..1.0f64).prop_map(|(f, x, s)| det(f, x, s));
        let g = (0..3u64, 0.0..30.0f64).prop_map(|(f, x)| gt(f, x));
        (prop::collection::vec(d, 0..8), prop::collection::vec(g, 1..6))
    }

    proptest! {
        #[test]
        fn ap_bounded_and_monotone_score_invariant((dets, gts) in arb_instance(), thr in 0.1..1.0f64) {
            let ap = average_precision(&dets, &gts, 0, thr).unwrap().unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
            let rescaled: Vec<Detection> = dets.iter().map(|d| Detection { score: (3.0 * d.score).exp(), ..*d }).collect();
            prop_assert_eq!(average_precision(&rescaled, &gts, 0, thr).unwrap().unwrap(), ap);
        }

        #[test]
        fn duplicate_never_helps((dets, gts) in arb_instance()) {
            let ap = average_precision(&dets, &gts, 0, 0.5).unwrap().unwrap();
            let (flags, _) = match_detections(&dets, &gts, 0, 0.5).unwrap();
            let mut order: Vec<&Detection> = dets.iter().collect();
            order.sort_by(|a, b| b.score.total_cmp(&a.score));
            if let Some(first_tp) = flags.iter().position(|f| *f) {
                let d = *order[first_tp];
                // the duplicate can only ever reach the GT its original took
                let reachable = gts.iter().filter(|g| g.frame_id == d.frame_id && iou(&g.bbox, &d.bbox) >= 0.5).count();
                prop_assume!(reachable == 1);
                let mut dup = dets.clone();
                dup.push(Detection { score: -1.0, ..d });
                let (f2, _) = match_detections(&dup, &gts, 0, 0.5).unwrap();
                prop_assert!(!f2.last().unwrap());
                prop_assert!(average_precision(&dup, &gts, 0, 0.5).unwrap().unwrap() <= ap);
            }
        }

        #[test]
        fn grand_map_is_mean_of_thresholds((dets, gts) in arb_instance()) {
            let r = map_range(&dets, &gts).unwrap();
            prop_assert_eq!(r.grand_map, r.map_per_threshold.iter().sum::<f64>() / 10.0);
            prop_assert!(r.entries.iter().all(|e| (0.0..=1.0).contains(&e.ap)));
        }

        #[test]
        fn trajectory_iou_symmetric(xs in prop::collection::vec((-5.0..5.0f64, 1.0..10.0f64), 2..6), dx in -3.0..3.0f64) {
            let pb: Vec<BBox> = xs.iter().map(|(x, w)| BBox::new(*x, 0.0, *w, 4.0)).collect();
            let gb: Vec<BBox> = pb.iter().map(|b| BBox::new(b.x + dx, b.y, b.w, b.h)).collect();
            let as_traj = |bs: &[BBox]| crate::losses::trajectory_from_boxes(bs, 0).unwrap();
            let a = trajectory_iou(&as_traj(&pb), &GroundTruthTrack::fully_valid(gb.clone(), 0)).unwrap().unwrap();
            let b = trajectory_iou(&as_traj(&gb), &GroundTruthTrack::fully_valid(pb.clone(), 0)).unwrap().unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
