//! Loss evaluation over minibatches, plain gradient descent and prediction.

use std::collections::HashMap;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::detector::jitter_box;
use super::feature::{extract_feature, FeatureVector};
use super::network::{ModelConfig, OutputParam, TrajectoryModel};
#[cfg(test)]
use super::network::KeyframeCorrection;
use crate::datasets::{corrupt_supervision, AnnotatedVideo, SupervisionRegime};
use crate::error::{Error, Result};
use crate::geometry::{apply_offset, BBox, Offset};
use crate::losses::{
    loss_bag, loss_bag_delta, loss_sum, loss_traj_sparse, loss_traj_weighted, LossResult, SmoothL1Config, SparseTerms,
    TrajLossWeights,
};
use crate::seed;
use crate::trajectory::{pseudo_track, GroundTruthTrack, PseudoTrajectorySpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Boxes regressed independently per index (keyframe-relative output).
    Bag,
    Sum,
    BagDelta,
    Traj,
    TrajSaLinear,
    TrajSaParabola,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Bag => "bag",
            LossKind::Sum => "sum",
            LossKind::BagDelta => "bag-delta",
            LossKind::Traj => "traj",
            LossKind::TrajSaLinear => "traj-sa-linear",
            LossKind::TrajSaParabola => "traj-sa-parabola",
        }
    }

    pub fn output_param(&self) -> OutputParam {
        match self {
            LossKind::Bag => OutputParam::KeyframeRelative,
            _ => OutputParam::Increments,
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bag" => LossKind::Bag,
            "sum" => LossKind::Sum,
            "bag-delta" | "bag_delta" => LossKind::BagDelta,
            "traj" => LossKind::Traj,
            "traj-sa-linear" => LossKind::TrajSaLinear,
            "traj-sa-parabola" => LossKind::TrajSaParabola,
            other => return Err(Error::InvalidArgument(format!("unknown loss '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Trajectory length `T`; keyframes are every `T` frames.
    pub horizon: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub smooth_l1_beta: f64,
    /// Oracle keyframe jitter during training.
    pub jitter_sigma: f64,
    pub supervision: SupervisionRegime,
    pub traj_weights: TrajLossWeights,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            iterations: 3000,
            batch_size: 32,
            horizon: 8,
            seed: 0,
            loss: LossKind::Traj,
            smooth_l1_beta: 1.0,
            jitter_sigma: 0.0,
            supervision: SupervisionRegime::Annotated,
            traj_weights: TrajLossWeights::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be finite and non-negative".into()));
        }
        if self.iterations == 0 || self.batch_size == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument("iterations, batch size and horizon must be positive".into()));
        }
        SmoothL1Config::new(self.smooth_l1_beta)?;
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::InvalidArgument("jitter sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// One keyframe detection with its feature and the target track over `T + 1` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub detection: BBox,
    pub feature: FeatureVector,
    pub target: GroundTruthTrack,
}

/// Per-sample loss and gradients w.r.t. the head outputs and the keyframe box.
fn sample_loss(
    kind: LossKind,
    keyframe: BBox,
    outputs: &[Offset],
    target: &GroundTruthTrack,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Offset>, Offset)> {
    let sl1 = SmoothL1Config::new(cfg.smooth_l1_beta)?;
    if kind == LossKind::Bag {
        let mut boxes = vec![keyframe];
        boxes.extend(outputs.iter().map(|o| apply_offset(&keyframe, o)));
        let r = loss_bag(&boxes, target, &sl1)?;
        let mut g_key = r.grad_keyframe;
        for g in &r.grad_offsets {
            g_key += *g;
        }
        return Ok((r.value, r.grad_offsets, g_key));
    }
    let traj = Trajectory::new(keyframe, target.class_id, outputs.to_vec(), 0)?;
    let r: LossResult = match kind {
        LossKind::Sum => loss_sum(&traj, target, &sl1)?,
        LossKind::BagDelta => loss_bag_delta(&traj, target, &sl1)?,
        LossKind::Traj => loss_traj_weighted(&traj, target, &sl1, cfg.traj_weights)?,
        LossKind::TrajSaLinear | LossKind::TrajSaParabola => {
            let spec =
                if kind == LossKind::TrajSaLinear { PseudoTrajectorySpec::linear() } else { PseudoTrajectorySpec::parabola() };
            // a window cut by the end of the video pairs the keyframe with the last labeled frame
            let end = (1..=outputs.len()).rev().find(|&l| target.valid[l]);
            let (Some(start), Some(end)) = (target.get(0), end) else {
                return Err(Error::InvalidArgument("sparse loss needs an annotated keyframe and a later label".into()));
            };
            if end == outputs.len() {
                loss_traj_sparse(&traj, start, target.boxes[end], &spec, SparseTerms::Both, &sl1)?
            } else {
                let mut pseudo = pseudo_track(start, target.boxes[end], end, &spec, target.class_id)?.track;
                pseudo.boxes.resize(outputs.len() + 1, target.boxes[end]);
                pseudo.valid.resize(outputs.len() + 1, false);
                loss_traj_weighted(&traj, &pseudo, &sl1, TrajLossWeights::default())?
            }
        }
        LossKind::Bag => unreachable!(),
    };
    Ok((r.value, r.grad_offsets, r.grad_keyframe))
}

fn row_offsets(out: &Array2<f64>, sample: usize, horizon: usize) -> Vec<Offset> {
    (0..horizon)
        .map(|l| {
            let r = out.row(sample * horizon + l);
            Offset::new(r[0], r[1], r[2], r[3])
        })
        .collect()
}

/// Batch-mean loss and its gradient with respect to every model parameter.
pub fn batch_loss_and_grad(model: &TrajectoryModel, batch: &[TrainingSample], cfg: &TrainConfig) -> Result<(f64, TrajectoryModel)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let horizon = cfg.horizon;
    for s in batch {
        if s.target.len() != horizon + 1 || s.target.valid.len() != horizon + 1 {
            return Err(Error::LengthMismatch { expected: horizon + 1, actual: s.target.len() });
        }
    }
    let dets: Vec<BBox> = batch.iter().map(|s| s.detection).collect();
    let feats: Vec<&FeatureVector> = batch.iter().map(|s| &s.feature).collect();
    let (corrections, out, cache) = model.forward_batch(&dets, &feats, horizon)?;

    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut g_out = Array2::zeros(out.raw_dim());
    let mut g_key = Array2::zeros(corrections.raw_dim());
    for (i, s) in batch.iter().enumerate() {
        let d = s.detection.to_array();
        let keyframe = BBox::from_array(std::array::from_fn(|c| d[c] + corrections[[i, c]]));
        let outputs = row_offsets(&out, i, horizon);
        let (value, g_outputs, g_keyframe) = sample_loss(cfg.loss, keyframe, &outputs, &s.target, cfg)?;
        total += value;
        for (l, g) in g_outputs.iter().enumerate() {
            for (c, v) in g.to_array().iter().enumerate() {
                g_out[[i * horizon + l, c]] = v / n;
            }
        }
        for (c, v) in g_keyframe.to_array().iter().enumerate() {
            g_key[[i, c]] = v / n;
        }
    }
    let mut grads = model.zeros_like();
    model.backward_batch(&cache, &g_key, &g_out, &mut grads);
    Ok((total / n, grads))
}

/// One gradient-descent step. Returns the updated model and the loss before the update.
pub fn train_step(model: &TrajectoryModel, batch: &[TrainingSample], cfg: &TrainConfig) -> Result<(TrajectoryModel, f64)> {
    let mut next = model.clone();
    let loss = train_step_in_place(&mut next, batch, cfg, 0)?;
    Ok((next, loss))
}

fn train_step_in_place(model: &mut TrajectoryModel, batch: &[TrainingSample], cfg: &TrainConfig, iteration: usize) -> Result<f64> {
    let (loss, grads) = batch_loss_and_grad(model, batch, cfg)?;
    if !loss.is_finite() {
        return Err(Error::Diverged { iteration, value: loss });
    }
    let lr = cfg.learning_rate;
    for ((_, p), (_, _, g)) in model.tensors_mut().into_iter().zip(grads.tensors()) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= lr * gv;
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: TrajectoryModel,
    /// Batch-mean loss before each update.
    pub loss_curve: Vec<f64>,
}

/// Training window: video, track and keyframe start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Window {
    video: usize,
    track: usize,
    start: usize,
}

/// Keyframe windows `t = 0, T, 2T, ...` with at least one later frame;
/// frames past the end of the video are masked out.
fn training_windows(videos: &[AnnotatedVideo], horizon: usize) -> Vec<Window> {
    let mut out = Vec::new();
    for (v, video) in videos.iter().enumerate() {
        let n = video.frames.len();
        for (k, t) in video.tracks.iter().enumerate() {
            for start in (0..n.saturating_sub(1)).step_by(horizon) {
                if t.track.valid[start] {
                    out.push(Window { video: v, track: k, start });
                }
            }
        }
    }
    out
}

/// Train a model from seeded initialization for a fixed number of steps.
///
/// Randomness comes from the named streams `init`, `supervision`, `batch`
/// and `jitter` of `cfg.seed`.
pub fn train(videos: &[AnnotatedVideo], cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if videos.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let frame_size = videos[0].frame_size();
    let mut model_cfg = cfg.model.clone();
    model_cfg.frame_size = frame_size;
    model_cfg.output = cfg.loss.output_param();
    let mut model = TrajectoryModel::new(model_cfg, &mut seed::stream(cfg.seed, "init"))?;

    let supervision: Vec<Vec<GroundTruthTrack>> = videos
        .iter()
        .enumerate()
        .map(|(v, video)| {
            let mut rng = seed::indexed_stream(cfg.seed, "supervision", v as u64);
            video.tracks.iter().map(|t| corrupt_supervision(&t.track, cfg.supervision, cfg.horizon, frame_size, &mut rng)).collect()
        })
        .collect::<Result<_>>()?;
    let windows = training_windows(videos, cfg.horizon);
    if windows.is_empty() {
        return Err(Error::InvalidArgument(format!("no keyframe window of length {} fits the videos", cfg.horizon)));
    }

    let mut batch_rng = seed::stream(cfg.seed, "batch");
    let mut jitter_rng = seed::stream(cfg.seed, "jitter");
    let mut feature_cache: HashMap<Window, FeatureVector> = HashMap::new();
    let mut loss_curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch: Vec<TrainingSample> = (0..cfg.batch_size)
            .map(|_| {
                let w = windows[batch_rng.random_range(0..windows.len())];
                let video = &videos[w.video];
                let gt_key = video.tracks[w.track].track.boxes[w.start];
                let detection = jitter_box(&gt_key, cfg.jitter_sigma, &mut jitter_rng)?;
                let feature = if cfg.jitter_sigma == 0.0 {
                    feature_cache.entry(w).or_insert_with(|| extract_feature(&video.frames[w.start], &detection)).clone()
                } else {
                    extract_feature(&video.frames[w.start], &detection)
                };
                Ok(TrainingSample { detection, feature, target: supervision[w.video][w.track].window(w.start, cfg.horizon) })
            })
            .collect::<Result<_>>()?;
        loss_curve.push(train_step_in_place(&mut model, &batch, cfg, it)?);
    }
    Ok(TrainOutput { model, loss_curve })
}

/// Predicted trajectories for a set of keyframe detections.
pub fn predict_trajectories(
    model: &TrajectoryModel,
    detections: &[(BBox, u32)],
    features: &[&FeatureVector],
    horizon: usize,
    start_frame: usize,
) -> Result<Vec<Trajectory>> {
    if detections.is_empty() {
        return Ok(Vec::new());
    }
    let boxes: Vec<BBox> = detections.iter().map(|d| d.0).collect();
    let (corr, out, _) = model.forward_batch(&boxes, features, horizon)?;
    detections
        .iter()
        .enumerate()
        .map(|(i, (b, class_id))| {
            let a = b.to_array();
            let keyframe = BBox::from_array(std::array::from_fn(|c| a[c] + corr[[i, c]]));
            let raw = row_offsets(&out, i, horizon);
            let offsets = match model.config.output {
                OutputParam::Increments => raw,
                OutputParam::KeyframeRelative => {
                    let mut prev = Offset::ZERO;
                    raw.iter()
                        .map(|o| {
                            let d = Offset::from_array(std::array::from_fn(|c| o.to_array()[c] - prev.to_array()[c]));
                            prev = *o;
                            d
                        })
                        .collect()
                }
            };
            Trajectory::new(keyframe, *class_id, offsets, start_frame)
        })
        .collect()
}

pub fn predict_trajectory(
    model: &TrajectoryModel,
    detection: &BBox,
    feature: &FeatureVector,
    horizon: usize,
    class_id: u32,
    start_frame: usize,
) -> Result<Trajectory> {
    Ok(predict_trajectories(model, &[(*detection, class_id)], &[feature], horizon, start_frame)?.remove(0))
}
