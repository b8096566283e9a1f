//! Keyframe-driven evaluation over a dataset split and the speed/accuracy sweep.

use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{map_range, trajectory_iou, Detection, GtBox, MetricReport};
use crate::datasets::AnnotatedVideo;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::model::{
    extract_feature, jitter_box, predict_trajectories, train, FeatureVector, TrainConfig, TrajectoryModel,
};
use crate::seed;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    KeyframesOnly,
    AllFrames,
}

impl EvalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalMode::KeyframesOnly => "keyframes",
            EvalMode::AllFrames => "all-frames",
        }
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keyframes" | "keyframes-only" | "keyframes_only" => Ok(EvalMode::KeyframesOnly),
            "all-frames" | "all_frames" => Ok(EvalMode::AllFrames),
            other => Err(Error::InvalidArgument(format!("unknown evaluation mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub horizon: usize,
    /// Oracle detector jitter at test keyframes.
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { mode: EvalMode::AllFrames, horizon: 8, jitter_sigma: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GtBox>,
    /// Mean trajectory IoU over all keyframe windows.
    pub trajectory_iou: Option<f64>,
    /// Same, for constant trajectories at the unrefined detector boxes.
    pub baseline_trajectory_iou: Option<f64>,
    pub frames: usize,
    pub keyframes: usize,
    pub feature_extractions: usize,
}

impl Evaluation {
    pub fn extractions_per_frame(&self) -> f64 {
        self.feature_extractions as f64 / self.frames as f64
    }
}

/// Detections and features of one keyframe.
struct KeyframeInput {
    video: usize,
    frame: usize,
    dets: Vec<(BBox, u32, usize)>,
    features: Vec<FeatureVector>,
}

/// Frame id used in detection files: `video_index * n_frames + frame`.
pub fn frame_id(video: usize, n_frames: usize, frame: usize) -> u64 {
    (video * n_frames + frame) as u64
}

/// Keyframes `0, T, 2T, ...` of an `n`-frame video.
fn keyframes(n: usize, horizon: usize) -> impl Iterator<Item = usize> {
    (0..n).step_by(horizon)
}

fn detect_keyframes(videos: &[AnnotatedVideo], cfg: &EvalConfig) -> Result<Vec<(usize, usize, Vec<(BBox, u32, usize)>)>> {
    let mut out = Vec::new();
    for (v, video) in videos.iter().enumerate() {
        let mut rng = seed::indexed_stream(cfg.seed, "jitter/eval", v as u64);
        for k in keyframes(video.frames.len(), cfg.horizon) {
            let mut dets = Vec::new();
            for (ti, t) in video.tracks.iter().enumerate() {
                if let Some(b) = t.track.get(k) {
                    dets.push((jitter_box(&b, cfg.jitter_sigma, &mut rng)?, t.track.class_id, ti));
                }
            }
            out.push((v, k, dets));
        }
    }
    Ok(out)
}

/// Feature-extraction stage: one invocation per keyframe covering all of its detections.
fn extract_stage(videos: &[AnnotatedVideo], detected: Vec<(usize, usize, Vec<(BBox, u32, usize)>)>) -> (Vec<KeyframeInput>, usize) {
    let mut invocations = 0;
    let inputs = detected
        .into_iter()
        .map(|(video, frame, dets)| {
            invocations += 1;
            let fr = &videos[video].frames[frame];
            let features = dets.iter().map(|d| extract_feature(fr, &d.0)).collect();
            KeyframeInput { video, frame, dets, features }
        })
        .collect();
    (inputs, invocations)
}

/// Wall time of the feature-extraction stage alone, minimum over `repeats` runs.
pub fn time_feature_extraction(videos: &[AnnotatedVideo], horizon: usize, repeats: usize) -> Result<(usize, f64)> {
    let cfg = EvalConfig { horizon, ..Default::default() };
    let detected = detect_keyframes(videos, &cfg)?;
    let mut best = f64::INFINITY;
    let mut count = 0;
    for _ in 0..repeats.max(1) {
        let d = detected.clone();
        let start = Instant::now();
        let (inputs, n) = extract_stage(videos, d);
        best = best.min(start.elapsed().as_secs_f64());
        std::hint::black_box(inputs);
        count = n;
    }
    Ok((count, best))
}

/// Run the keyframe detector, predict trajectories that fill the frames up
/// to the next keyframe, and score the selected frames.
pub fn evaluate(model: &TrajectoryModel, videos: &[AnnotatedVideo], cfg: &EvalConfig) -> Result<Evaluation> {
    if cfg.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let (inputs, feature_extractions) = extract_stage(videos, detect_keyframes(videos, cfg)?);
    let mut detections = Vec::new();
    let mut ground_truth = Vec::new();
    let mut frames = 0;
    for (v, video) in videos.iter().enumerate() {
        let n = video.frames.len();
        frames += n;
        for f in 0..n {
            if cfg.mode == EvalMode::AllFrames || f % cfg.horizon == 0 {
                for t in &video.tracks {
                    if let Some(b) = t.track.get(f) {
                        ground_truth.push(GtBox { frame_id: frame_id(v, n, f), bbox: b, class_id: t.track.class_id });
                    }
                }
            }
        }
    }
    let (mut iou_sum, mut iou_n, mut base_sum, mut base_n) = (0.0, 0usize, 0.0, 0usize);
    for kf in &inputs {
        let video = &videos[kf.video];
        let n = video.frames.len();
        let feats: Vec<&FeatureVector> = kf.features.iter().collect();
        let dets: Vec<(BBox, u32)> = kf.dets.iter().map(|d| (d.0, d.1)).collect();
        let trajs = predict_trajectories(model, &dets, &feats, cfg.horizon, kf.frame)?;
        for (traj, d) in trajs.iter().zip(&kf.dets) {
            let gt = video.tracks[d.2].track.window(kf.frame, cfg.horizon);
            if let Some(x) = trajectory_iou(traj, &gt)? {
                iou_sum += x;
                iou_n += 1;
            }
            let constant = Trajectory::new(d.0, d.1, vec![Default::default(); cfg.horizon], kf.frame)?;
            if let Some(x) = trajectory_iou(&constant, &gt)? {
                base_sum += x;
                base_n += 1;
            }
            let boxes = traj.reconstruct_boxes();
            let last = match cfg.mode {
                EvalMode::KeyframesOnly => 0,
                EvalMode::AllFrames => (cfg.horizon - 1).min(n - 1 - kf.frame),
            };
            for (l, b) in boxes.iter().enumerate().take(last + 1) {
                detections.push(Detection { frame_id: frame_id(kf.video, n, kf.frame + l), bbox: *b, class_id: traj.class_id, score: 1.0 });
            }
        }
    }
    let report = map_range(&detections, &ground_truth)?;
    Ok(Evaluation {
        report,
        detections,
        ground_truth,
        trajectory_iou: (iou_n > 0).then(|| iou_sum / iou_n as f64),
        baseline_trajectory_iou: (base_n > 0).then(|| base_sum / base_n as f64),
        frames,
        keyframes: inputs.len(),
        feature_extractions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub horizon: usize,
    /// Feature extractions per frame, `1 / T`.
    pub cost_proxy: f64,
    /// Measured invocations divided by frames.
    pub invocations_per_frame: f64,
    pub map: f64,
    pub extraction_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub horizons: Vec<usize>,
    pub train: TrainConfig,
    pub jitter_sigma: f64,
    pub timing_repeats: usize,
}

/// Train and evaluate one model per `T`; rows sorted by `T`.
pub fn speed_accuracy_sweep(train_videos: &[AnnotatedVideo], test_videos: &[AnnotatedVideo], cfg: &SweepConfig) -> Result<SweepResult> {
    let mut horizons = cfg.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.is_empty() || horizons[0] == 0 {
        return Err(Error::InvalidArgument("sweep needs horizons >= 1".into()));
    }
    let mut entries = Vec::new();
    for &t in &horizons {
        let tc = TrainConfig { horizon: t, ..cfg.train.clone() };
        let model = train(train_videos, &tc)?.model;
        let ec = EvalConfig { mode: EvalMode::AllFrames, horizon: t, jitter_sigma: cfg.jitter_sigma, seed: cfg.train.seed };
        let ev = evaluate(&model, test_videos, &ec)?;
        let (_, secs) = time_feature_extraction(test_videos, t, cfg.timing_repeats)?;
        entries.push(SweepEntry {
            horizon: t,
            cost_proxy: 1.0 / t as f64,
            invocations_per_frame: ev.extractions_per_frame(),
            map: ev.report.grand_map,
            extraction_seconds: secs,
        });
    }
    Ok(SweepResult { entries })
}
