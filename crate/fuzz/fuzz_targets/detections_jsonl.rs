#![no_main]

use libfuzzer_sys::fuzz_target;
use traj_anticipation::eval::{detections_from_jsonl, detections_to_jsonl, ground_truth_from_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(dets) = detections_from_jsonl(text) {
        let again = detections_from_jsonl(&detections_to_jsonl(&dets).unwrap()).unwrap();
        assert_eq!(again.len(), dets.len());
    }
    let _ = ground_truth_from_jsonl(text);
});
