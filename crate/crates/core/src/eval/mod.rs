//! Detection metrics, trajectory IoU, dataset evaluation and the T sweep.

pub mod io;
pub mod metrics;
pub mod run;

pub use io::{detections_from_jsonl, detections_to_jsonl, ground_truth_from_jsonl, ground_truth_to_jsonl, report_to_csv, sweep_to_csv};
pub use metrics::{
    average_precision, interpolated_ap, iou_thresholds, map_range, match_detections, trajectory_iou, ApEntry, Detection, GtBox,
    MetricReport,
};
pub use run::{
    evaluate, frame_id, speed_accuracy_sweep, time_feature_extraction, EvalConfig, EvalMode, Evaluation, SweepConfig, SweepEntry,
    SweepResult,
};
