//! JSON-lines detection files and CSV reports.

use std::fmt::Write as _;

use super::metrics::{Detection, GtBox, MetricReport};
use super::run::SweepResult;
use crate::error::{Error, Result};

fn to_jsonl<T: serde::Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it)?);
        out.push('\n');
    }
    Ok(out)
}

fn from_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn detections_to_jsonl(dets: &[Detection]) -> Result<String> {
    to_jsonl(dets)
}

/// Parse one detection per line; blank lines are skipped.
pub fn detections_from_jsonl(text: &str) -> Result<Vec<Detection>> {
    let dets: Vec<Detection> = from_jsonl(text)?;
    if let Some(d) = dets.iter().find(|d| !d.score.is_finite() || !d.bbox.is_valid()) {
        return Err(Error::Format(format!("invalid detection in frame {}", d.frame_id)));
    }
    Ok(dets)
}

pub fn ground_truth_to_jsonl(gts: &[GtBox]) -> Result<String> {
    to_jsonl(gts)
}

pub fn ground_truth_from_jsonl(text: &str) -> Result<Vec<GtBox>> {
    let gts: Vec<GtBox> = from_jsonl(text)?;
    if let Some(g) = gts.iter().find(|g| !g.bbox.is_valid()) {
        return Err(Error::Format(format!("invalid ground-truth box in frame {}", g.frame_id)));
    }
    Ok(gts)
}

/// One row per class and threshold, then a summary row with the grand mAP.
pub fn report_to_csv(r: &MetricReport) -> String {
    let mut out = String::from("class_id,iou_threshold,ap,tp,fp,fn\n");
    for e in &r.entries {
        let _ = writeln!(out, "{},{:.2},{},{},{},{}", e.class_id, e.iou_threshold, e.ap, e.tp, e.fp, e.fn_);
    }
    let _ = writeln!(out, "all,mean,{},{},{},{}", r.grand_map, r.tp, r.fp, r.fn_);
    out
}

pub fn sweep_to_csv(s: &SweepResult) -> String {
    let mut out = String::from("T,cost_proxy,invocations_per_frame,map,extraction_seconds\n");
    for e in &s.entries {
        let _ = writeln!(out, "{},{},{},{},{}", e.horizon, e.cost_proxy, e.invocations_per_frame, e.map, e.extraction_seconds);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::map_range;
    use crate::geometry::BBox;
    use proptest::prelude::*;

    #[test]
    fn csv_mean_matches_grand_map() {
        let gts: Vec<GtBox> = (0..3).map(|c| GtBox { frame_id: c as u64, bbox: BBox::new(0.0, 0.0, 10.0, 10.0), class_id: c }).collect();
        let dets = vec![
            Detection { frame_id: 0, bbox: BBox::new(1.0, 0.0, 10.0, 10.0), class_id: 0, score: 0.3 },
            Detection { frame_id: 1, bbox: BBox::new(3.0, 0.0, 10.0, 10.0), class_id: 1, score: 0.8 },
        ];
        let r = map_range(&dets, &gts).unwrap();
        let csv = report_to_csv(&r);
        let aps: Vec<f64> = csv.lines().skip(1).filter(|l| !l.starts_with("all")).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
        assert_eq!(aps.len(), 30);
        assert!((aps.iter().sum::<f64>() / 30.0 - r.grand_map).abs() < 1e-12);
        assert!(csv.lines().last().unwrap().starts_with("all,mean,"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(detections_from_jsonl("{\"frame_id\":0}\n").is_err());
        assert!(detections_from_jsonl("not json").is_err());
        let bad = "{\"frame_id\":0,\"box\":{\"x\":0,\"y\":0,\"w\":-1,\"h\":1},\"class_id\":0,\"score\":1}";
        assert!(detections_from_jsonl(bad).is_err());
        assert_eq!(detections_from_jsonl("\n\n").unwrap(), vec![]);
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(raw in prop::collection::vec((0..1000u64, -50.0..50.0f64, 0.0..30.0f64, 0..10u32, 0.0..1.0f64), 0..10)) {
            let dets: Vec<Detection> = raw.iter().map(|&(f, x, w, c, s)| Detection { frame_id: f, bbox: BBox::new(x, x / 2.0, w, w + 1.0), class_id: c, score: s }).collect();
            prop_assert_eq!(detections_from_jsonl(&detections_to_jsonl(&dets).unwrap()).unwrap(), dets.clone());
            let gts: Vec<GtBox> = dets.iter().map(|d| GtBox { frame_id: d.frame_id, bbox: d.bbox, class_id: d.class_id }).collect();
            prop_assert_eq!(ground_truth_from_jsonl(&ground_truth_to_jsonl(&gts).unwrap()).unwrap(), gts);
        }
    }
}
