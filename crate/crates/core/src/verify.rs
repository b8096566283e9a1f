//! Property checks run by `anticipate verify`: loss equivalence, finite-difference
//! gradients for the losses and the head, parabola construction and IoU algebra.
//!
//! Finite differences are central with step `1e-5`. A coordinate is left out
//! of the comparison when the perturbation moves any smooth-L1 residual across
//! `±beta` or any ReLU pre-activation across zero, since the function is not
//! twice differentiable there. The error of one instance is the relative
//! distance `|a - n| / max(|a|, |n|)` between the analytic and numeric
//! gradient vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_offset, iou, offset_between, BBox, Offset};
use crate::losses::{loss_bag, loss_bag_delta, loss_sum, loss_traj, verify_bag_sum_equivalence, LossResult, SmoothL1Config};
use crate::model::{batch_loss_and_grad, FeatureVector, KeyframeCorrection, LossKind, ModelConfig, TrainConfig, TrainingSample, TrajectoryModel};
use crate::seed;
use crate::trajectory::{parabola_pseudo_track, parabola_vertex, parabola_y, stitch_segments, GroundTruthTrack, PseudoTrajectorySpec, Trajectory};

pub const FD_STEP: f64 = 1e-5;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const EXACT_TOLERANCE: f64 = 1e-9;

/// A deliberate bug for negative-control runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Negate the analytic loss gradients before comparison.
    FlipLossGradientSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Instances for the equivalence and IoU checks.
    pub trials: usize,
    /// Instances for each gradient and parabola check.
    pub gradient_trials: usize,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 0, trials: 1000, gradient_trials: 100, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, instances: usize, max_deviation: f64, tolerance: f64) -> Self {
        // NaN deviations fail
        let passed = max_deviation < tolerance;
        Self { name: name.to_string(), instances, max_deviation, tolerance, passed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn run_all(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.trials == 0 || cfg.gradient_trials == 0 {
        return Err(Error::InvalidArgument("trial counts must be at least 1".into()));
    }
    let sl1 = SmoothL1Config::default();
    let eq = verify_bag_sum_equivalence(seed::derive_seed(cfg.seed, "verify/equivalence"), cfg.trials, &sl1)?;
    let mut checks = vec![CheckResult::new("bag-sum-equivalence", eq.trials, eq.max_deviation, EXACT_TOLERANCE)];
    for kind in [GradLoss::Bag, GradLoss::Sum, GradLoss::BagDelta, GradLoss::Traj] {
        checks.push(check_loss_gradient(kind, cfg)?);
    }
    checks.push(check_head_gradient(cfg)?);
    checks.extend(check_parabola(cfg)?);
    checks.extend(check_iou(cfg));
    Ok(VerifyReport { checks })
}

/// `|a - n| / max(|a|, |n|)`, zero when both vectors vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradLoss {
    Bag,
    Sum,
    BagDelta,
    Traj,
}

impl GradLoss {
    fn name(&self) -> &'static str {
        match self {
            GradLoss::Bag => "gradient-bag",
            GradLoss::Sum => "gradient-sum",
            GradLoss::BagDelta => "gradient-bag-delta",
            GradLoss::Traj => "gradient-traj",
        }
    }
}

/// A loss instance flattened into one parameter vector: the keyframe box then
/// the `T` offsets (for the bag loss: the `T + 1` boxes).
struct LossInstance {
    kind: GradLoss,
    horizon: usize,
    gt: GroundTruthTrack,
    cfg: SmoothL1Config,
}

impl LossInstance {
    fn boxes_and_traj(&self, x: &[f64]) -> (Vec<BBox>, Trajectory) {
        let key = BBox::from_array([x[0], x[1], x[2], x[3]]);
        let offsets: Vec<Offset> = x[4..].chunks(4).map(|c| Offset::new(c[0], c[1], c[2], c[3])).collect();
        let traj = Trajectory::new(key, self.gt.class_id, offsets, 0).expect("horizon >= 1");
        let boxes = if self.kind == GradLoss::Bag {
            x.chunks(4).map(|c| BBox::new(c[0], c[1], c[2], c[3])).collect()
        } else {
            traj.reconstruct_boxes()
        };
        (boxes, traj)
    }

    fn eval(&self, x: &[f64]) -> Result<LossResult> {
        let (boxes, traj) = self.boxes_and_traj(x);
        match self.kind {
            GradLoss::Bag => loss_bag(&boxes, &self.gt, &self.cfg),
            GradLoss::Sum => loss_sum(&traj, &self.gt, &self.cfg),
            GradLoss::BagDelta => loss_bag_delta(&traj, &self.gt, &self.cfg),
            GradLoss::Traj => loss_traj(&traj, &self.gt, &self.cfg),
        }
    }

    /// Which smooth-L1 branch each residual of the loss falls in.
    fn regimes(&self, x: &[f64]) -> Vec<bool> {
        let (boxes, traj) = self.boxes_and_traj(x);
        let beta = self.cfg.beta;
        let mut out = Vec::new();
        let mut push = |r: [f64; 4]| out.extend(r.iter().map(|v| v.abs() < beta));
        if matches!(self.kind, GradLoss::Bag | GradLoss::Sum | GradLoss::Traj) {
            for l in 0..=self.horizon {
                if self.gt.valid[l] {
                    let (p, g) = (boxes[l].to_array(), self.gt.boxes[l].to_array());
                    push(std::array::from_fn(|c| p[c] - g[c]));
                }
            }
        }
        if matches!(self.kind, GradLoss::BagDelta | GradLoss::Traj) {
            for l in 1..=self.horizon {
                if self.gt.valid[l] && self.gt.valid[l - 1] {
                    let (d, g) = (traj.offsets[l - 1].to_array(), offset_between(&self.gt.boxes[l - 1], &self.gt.boxes[l]).to_array());
                    push(std::array::from_fn(|c| d[c] - g[c]));
                }
            }
        }
        out
    }
}

fn flatten(r: &LossResult) -> Vec<f64> {
    let mut g = r.grad_keyframe.to_array().to_vec();
    for o in &r.grad_offsets {
        g.extend(o.to_array());
    }
    g
}

/// Relative error of one loss instance, skipping coordinates at smooth-L1 transitions.
fn loss_instance_error(inst: &LossInstance, x: &[f64], fault: Option<Fault>) -> Result<f64> {
    let mut analytic = flatten(&inst.eval(x)?);
    if fault == Some(Fault::FlipLossGradientSign) {
        analytic.iter_mut().for_each(|g| *g = -*g);
    }
    let base = inst.regimes(x);
    let (mut a, mut n) = (Vec::new(), Vec::new());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + FD_STEP;
        let (fp, rp) = (inst.eval(&xp)?.value, inst.regimes(&xp));
        xp[i] = x[i] - FD_STEP;
        let (fm, rm) = (inst.eval(&xp)?.value, inst.regimes(&xp));
        xp[i] = x[i];
        if rp != base || rm != base {
            continue;
        }
        a.push(analytic[i]);
        n.push((fp - fm) / (2.0 * FD_STEP));
    }
    Ok(relative_error(&a, &n))
}

pub fn check_loss_gradient(kind: GradLoss, cfg: &VerifyConfig) -> Result<CheckResult> {
    let mut rng = seed::stream(cfg.seed, &format!("verify/{}", kind.name()));
    let mut worst: f64 = 0.0;
    for trial in 0..cfg.gradient_trials {
        let horizon = [1usize, 4, 8][trial % 3];
        let gt_boxes = random_boxes(&mut rng, horizon + 1);
        let valid = (0..=horizon).map(|_| rng.random_bool(0.85)).collect();
        let gt = GroundTruthTrack::new(gt_boxes.clone(), valid, 0)?;
        // predictions near the targets so both smooth-L1 branches are exercised
        let pred: Vec<BBox> = gt_boxes
            .iter()
            .map(|b| BBox::from_array(b.to_array().map(|v| v + rng.random_range(-3.0..3.0))))
            .collect();
        let mut x = pred[0].to_array().to_vec();
        if kind == GradLoss::Bag {
            pred[1..].iter().for_each(|b| x.extend(b.to_array()));
        } else {
            pred.windows(2).for_each(|w| x.extend(offset_between(&w[0], &w[1]).to_array()));
        }
        let inst = LossInstance { kind, horizon, gt, cfg: SmoothL1Config::default() };
        worst = worst.max(loss_instance_error(&inst, &x, cfg.fault)?);
    }
    Ok(CheckResult::new(kind.name(), cfg.gradient_trials, worst, GRADIENT_TOLERANCE))
}

fn random_boxes(rng: &mut impl Rng, n: usize) -> Vec<BBox> {
    (0..n)
        .map(|_| BBox::new(rng.random_range(0.0..48.0), rng.random_range(0.0..48.0), rng.random_range(4.0..30.0), rng.random_range(4.0..30.0)))
        .collect()
}

/// Small head used for the parameter-gradient check.
pub fn gradient_check_model_config() -> ModelConfig {
    ModelConfig { feature_len: 12, embed_dim: 6, hidden_dim: 10, keyframe: KeyframeCorrection::Head, ..ModelConfig::default() }
}

fn relu_pattern(model: &TrajectoryModel, batch: &[TrainingSample], horizon: usize) -> Result<Vec<bool>> {
    let dets: Vec<BBox> = batch.iter().map(|s| s.detection).collect();
    let feats: Vec<&FeatureVector> = batch.iter().map(|s| &s.feature).collect();
    let (_, _, cache) = model.forward_batch(&dets, &feats, horizon)?;
    Ok(cache.pre_activations().map(|v| v > 0.0).collect())
}

/// Relative error of the batch loss gradient with respect to every parameter
/// of `model`, skipping parameters whose perturbation flips a ReLU.
pub fn head_gradient_error(model: &TrajectoryModel, batch: &[TrainingSample], train: &TrainConfig) -> Result<(f64, usize)> {
    let (_, grads) = batch_loss_and_grad(model, batch, train)?;
    let analytic: Vec<f64> = grads.tensors().into_iter().flat_map(|(_, _, g)| g.to_vec()).collect();
    let base = relu_pattern(model, batch, train.horizon)?;
    let mut probe = model.clone();
    let (mut a, mut n) = (Vec::new(), Vec::new());
    let mut skipped = 0;
    let sizes: Vec<usize> = model.tensors().iter().map(|(_, _, d)| d.len()).collect();
    let mut flat = 0;
    for (t, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = model.tensors()[t].2[i];
            let eval_at = |v: f64, probe: &mut TrajectoryModel| -> Result<(f64, Vec<bool>)> {
                probe.tensors_mut()[t].1[i] = v;
                let loss = batch_loss_and_grad(probe, batch, train)?.0;
                Ok((loss, relu_pattern(probe, batch, train.horizon)?))
            };
            let (fp, pp) = eval_at(orig + FD_STEP, &mut probe)?;
            let (fm, pm) = eval_at(orig - FD_STEP, &mut probe)?;
            probe.tensors_mut()[t].1[i] = orig;
            if pp != base || pm != base {
                skipped += 1;
            } else {
                a.push(analytic[flat]);
                n.push((fp - fm) / (2.0 * FD_STEP));
            }
            flat += 1;
        }
    }
    Ok((relative_error(&a, &n), skipped))
}

fn random_training_batch(rng: &mut impl Rng, model: &ModelConfig, horizon: usize, n: usize) -> Result<Vec<TrainingSample>> {
    (0..n)
        .map(|_| {
            let track = random_boxes(rng, horizon + 1);
            let valid = (0..=horizon).map(|l| l == 0 || rng.random_bool(0.85)).collect();
            let target = GroundTruthTrack::new(track.clone(), valid, 0)?;
            let detection = BBox::from_array(track[0].to_array().map(|v| v + rng.random_range(-2.0..2.0)));
            let feature = FeatureVector((0..model.feature_len).map(|_| rng.random_range(0.0..1.0)).collect());
            Ok(TrainingSample { detection, feature, target })
        })
        .collect()
}

pub fn check_head_gradient(cfg: &VerifyConfig) -> Result<CheckResult> {
    let mut rng = seed::stream(cfg.seed, "verify/gradient-head");
    let model_cfg = gradient_check_model_config();
    let mut worst: f64 = 0.0;
    for trial in 0..cfg.gradient_trials {
        let horizon = [1usize, 4, 8][trial % 3];
        let loss = [LossKind::Traj, LossKind::Bag, LossKind::Sum, LossKind::BagDelta][trial % 4];
        let model_cfg = ModelConfig { output: loss.output_param(), ..model_cfg.clone() };
        let model = TrajectoryModel::new(model_cfg.clone(), &mut seed::indexed_stream(cfg.seed, "verify/gradient-head/init", trial as u64))?;
        let batch = random_training_batch(&mut rng, &model_cfg, horizon, 2)?;
        let train = TrainConfig { horizon, loss, model: model_cfg, ..TrainConfig::default() };
        worst = worst.max(head_gradient_error(&model, &batch, &train)?.0);
    }
    Ok(CheckResult::new("gradient-head", cfg.gradient_trials, worst, GRADIENT_TOLERANCE))
}

pub fn check_parabola(cfg: &VerifyConfig) -> Result<Vec<CheckResult>> {
    let f = PseudoTrajectorySpec::DEFAULT_FOCUS;
    let mut rng = seed::stream(cfg.seed, "verify/parabola");
    let mut endpoint: f64 = 0.0;
    let mut membership: f64 = 0.0;
    let mut n_pairs = 0;
    while n_pairs < cfg.gradient_trials {
        let p0: (f64, f64) = (rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
        let p1: (f64, f64) = (rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
        if (p1.0 - p0.0).abs() < 1.0 {
            continue;
        }
        n_pairs += 1;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let v = parabola_vertex(p0, p1, sign * f).expect("distinct x");
        endpoint = endpoint.max((parabola_y(p0.0, v, sign * f) - p0.1).abs()).max((parabola_y(p1.0, v, sign * f) - p1.1).abs());
        let start = BBox::from_center(p0.0, p0.1, 10.0, 12.0);
        let end = BBox::from_center(p1.0, p1.1, 14.0, 8.0);
        let pt = parabola_pseudo_track(start, end, 8, sign * f, 0)?;
        for b in &pt.track.boxes {
            let (cx, cy) = b.center();
            membership = membership.max((parabola_y(cx, v, sign * f) - cy).abs());
        }
    }

    // centers (0,0) -> (16,8): vertex at the origin, height 2 at x = 8
    let wa = BBox::from_center(0.0, 0.0, 4.0, 4.0);
    let wb = BBox::from_center(16.0, 8.0, 4.0, 4.0);
    let worked = parabola_pseudo_track(wa, wb, 2, f, 0)?;
    let worked_ok = worked.vertex == Some((0.0, 0.0)) && worked.track.boxes[1].center() == (8.0, 2.0);

    let mut continuity: f64 = 0.0;
    for _ in 0..cfg.gradient_trials {
        let n_keys = rng.random_range(3..7);
        let mut idx = vec![0usize];
        for _ in 1..n_keys {
            idx.push(idx.last().unwrap() + rng.random_range(1..10));
        }
        let kb: Vec<BBox> = (0..n_keys)
            .map(|i| BBox::from_center(10.0 * i as f64 + rng.random_range(1.0..8.0), rng.random_range(-20.0..20.0), 8.0, 8.0))
            .collect();
        let stitched = stitch_segments(&kb, &idx, &PseudoTrajectorySpec::parabola(), 0)?;
        for (s, w) in idx.windows(2).enumerate() {
            let fs = if s % 2 == 1 { -f } else { f };
            let (c0, c1) = (kb[s].center(), kb[s + 1].center());
            let v = parabola_vertex(c0, c1, fs).expect("increasing x");
            // both neighbouring parabolas pass through the shared keyframe center
            continuity = continuity.max((parabola_y(c1.0, v, fs) - c1.1).abs()).max((parabola_y(c0.0, v, fs) - c0.1).abs());
            for k in [w[0], w[1]] {
                let (a, b) = (stitched.boxes[k].to_array(), kb[if k == w[0] { s } else { s + 1 }].to_array());
                continuity = continuity.max((0..4).map(|c| (a[c] - b[c]).abs()).fold(0.0, f64::max));
            }
        }
    }
    Ok(vec![
        CheckResult::new("parabola-endpoints", n_pairs, endpoint, EXACT_TOLERANCE),
        CheckResult::new("parabola-membership", n_pairs, membership, EXACT_TOLERANCE),
        CheckResult::new("parabola-worked-case", 1, if worked_ok { 0.0 } else { f64::INFINITY }, EXACT_TOLERANCE),
        CheckResult::new("parabola-continuity", cfg.gradient_trials, continuity, EXACT_TOLERANCE),
    ])
}

pub fn check_iou(cfg: &VerifyConfig) -> Vec<CheckResult> {
    let mut rng = seed::stream(cfg.seed, "verify/iou");
    let (mut sym, mut selfi, mut range, mut inverse): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..cfg.trials {
        let a = random_boxes(&mut rng, 1)[0];
        let b = random_boxes(&mut rng, 1)[0];
        let (ab, ba) = (iou(&a, &b), iou(&b, &a));
        sym = sym.max((ab - ba).abs());
        selfi = selfi.max((iou(&a, &a) - 1.0).abs());
        range = range.max((-ab).max(ab - 1.0).max(0.0));
        let back = apply_offset(&a, &offset_between(&a, &b)).to_array();
        let target = b.to_array();
        inverse = inverse.max((0..4).map(|c| (back[c] - target[c]).abs() / target[c].abs().max(1.0)).fold(0.0, f64::max));
    }
    let worked = (iou(&BBox::new(0.0, 0.0, 2.0, 2.0), &BBox::new(1.0, 1.0, 2.0, 2.0)) - 1.0 / 7.0).abs();
    vec![
        CheckResult::new("iou-symmetry", cfg.trials, sym, EXACT_TOLERANCE),
        CheckResult::new("iou-self", cfg.trials, selfi, EXACT_TOLERANCE),
        CheckResult::new("iou-range", cfg.trials, range, EXACT_TOLERANCE),
        CheckResult::new("iou-worked-case", 1, worked, EXACT_TOLERANCE),
        CheckResult::new("offset-inverse", cfg.trials, inverse, EXACT_TOLERANCE),
    ]
}
