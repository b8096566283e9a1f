//! Smooth-L1 box regression and the trajectory losses.
//!
//! All losses are sums over frames and the four box coordinates. Frames whose
//! ground truth is invalid contribute nothing. Gradients are returned with
//! respect to the predicted offsets and the keyframe box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{offset_between, BBox, Offset};
use crate::trajectory::{pseudo_track, GroundTruthTrack, PseudoTrajectorySpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothL1Config {
    pub beta: f64,
}

impl Default for SmoothL1Config {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

impl SmoothL1Config {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("smooth-L1 beta must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }
}

/// Loss value with gradients.
///
/// For the offset losses `grad_offsets[k]` is the derivative with respect to
/// the `k+1`-th offset and `grad_keyframe` the derivative with respect to the
/// keyframe box. [`loss_bag`] operates on boxes directly; there
/// `grad_keyframe` is the derivative with respect to box 0 and
/// `grad_offsets[k]` the derivative with respect to box `k+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_offsets: Vec<Offset>,
    pub grad_keyframe: Offset,
}

impl LossResult {
    fn zeros(horizon: usize) -> Self {
        Self { value: 0.0, grad_offsets: vec![Offset::ZERO; horizon], grad_keyframe: Offset::ZERO }
    }

    fn add(mut self, other: &LossResult) -> Self {
        self.value += other.value;
        for (g, o) in self.grad_offsets.iter_mut().zip(&other.grad_offsets) {
            *g += *o;
        }
        self.grad_keyframe += other.grad_keyframe;
        self
    }

    fn scaled(mut self, w: f64) -> Self {
        let scale = |o: Offset| Offset::from_array(o.to_array().map(|v| v * w));
        self.value *= w;
        self.grad_offsets.iter_mut().for_each(|g| *g = scale(*g));
        self.grad_keyframe = scale(self.grad_keyframe);
        self
    }
}

/// `0.5 x^2 / beta` for `|x| < beta`, `|x| - 0.5 beta` otherwise, with its derivative.
pub fn smooth_l1(x: f64, cfg: &SmoothL1Config) -> (f64, f64) {
    let ax = x.abs();
    if ax < cfg.beta {
        (0.5 * x * x / cfg.beta, x / cfg.beta)
    } else {
        (ax - 0.5 * cfg.beta, x.signum())
    }
}

/// Sum of smooth-L1 over the four coordinates of `residual`, with per-coordinate derivatives.
fn smooth_l1_4(residual: [f64; 4], cfg: &SmoothL1Config) -> (f64, [f64; 4]) {
    let mut value = 0.0;
    let mut deriv = [0.0; 4];
    for c in 0..4 {
        let (v, d) = smooth_l1(residual[c], cfg);
        value += v;
        deriv[c] = d;
    }
    (value, deriv)
}

fn sub(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

fn check_len(gt: &GroundTruthTrack, frames: usize) -> Result<()> {
    if gt.boxes.len() != frames || gt.valid.len() != frames {
        return Err(Error::LengthMismatch { expected: frames, actual: gt.boxes.len().min(gt.valid.len()) });
    }
    Ok(())
}

/// Boxes treated as an unordered bag: `sum_l SL1(B*_l - B_l)`.
pub fn loss_bag(pred_boxes: &[BBox], gt: &GroundTruthTrack, cfg: &SmoothL1Config) -> Result<LossResult> {
    if pred_boxes.is_empty() {
        return Err(Error::InvalidArgument("empty prediction".into()));
    }
    check_len(gt, pred_boxes.len())?;
    let horizon = pred_boxes.len() - 1;
    let mut out = LossResult::zeros(horizon);
    for (l, pred) in pred_boxes.iter().enumerate() {
        if !gt.valid[l] {
            continue;
        }
        let (v, d) = smooth_l1_4(sub(gt.boxes[l].to_array(), pred.to_array()), cfg);
        out.value += v;
        let g = Offset::from_array(d.map(|x| -x));
        if l == 0 {
            out.grad_keyframe += g;
        } else {
            out.grad_offsets[l - 1] += g;
        }
    }
    Ok(out)
}

/// Cumulative trajectory loss:
/// `sum_l SL1((B*_{t+l} - B_t) - sum_{k<=l} delta_{t+k})`, the `l = 0` term being `SL1(B*_t - B_t)`.
pub fn loss_sum(traj: &Trajectory, gt: &GroundTruthTrack, cfg: &SmoothL1Config) -> Result<LossResult> {
    let horizon = traj.horizon();
    check_len(gt, horizon + 1)?;
    let key = traj.keyframe_box.to_array();
    let mut out = LossResult::zeros(horizon);
    // per-frame derivative of the loss w.r.t. the residual, zero for invalid frames
    let mut frame_deriv = vec![[0.0; 4]; horizon + 1];
    let mut cumulative = [0.0; 4];
    for l in 0..=horizon {
        if l > 0 {
            let d = traj.offsets[l - 1].to_array();
            for c in 0..4 {
                cumulative[c] += d[c];
            }
        }
        if !gt.valid[l] {
            continue;
        }
        let residual = sub(sub(gt.boxes[l].to_array(), key), cumulative);
        let (v, d) = smooth_l1_4(residual, cfg);
        out.value += v;
        frame_deriv[l] = d;
    }
    // d residual_l / d delta_k = -1 for every k <= l; accumulate from the end
    let mut suffix = [0.0; 4];
    for l in (1..=horizon).rev() {
        for c in 0..4 {
            suffix[c] -= frame_deriv[l][c];
        }
        out.grad_offsets[l - 1] = Offset::from_array(suffix);
    }
    let mut gk = [0.0; 4];
    for d in &frame_deriv {
        for c in 0..4 {
            gk[c] -= d[c];
        }
    }
    out.grad_keyframe = Offset::from_array(gk);
    Ok(out)
}

/// Bag of offsets: `sum_l SL1(delta*_{t+l} - delta_{t+l})`, where a term
/// needs both frames `l - 1` and `l` valid.
pub fn loss_bag_delta(traj: &Trajectory, gt: &GroundTruthTrack, cfg: &SmoothL1Config) -> Result<LossResult> {
    let horizon = traj.horizon();
    check_len(gt, horizon + 1)?;
    let mut out = LossResult::zeros(horizon);
    for l in 1..=horizon {
        if !(gt.valid[l] && gt.valid[l - 1]) {
            continue;
        }
        let target = offset_between(&gt.boxes[l - 1], &gt.boxes[l]).to_array();
        let (v, d) = smooth_l1_4(sub(target, traj.offsets[l - 1].to_array()), cfg);
        out.value += v;
        out.grad_offsets[l - 1] = Offset::from_array(d.map(|x| -x));
    }
    Ok(out)
}

/// Relative weights of the two trajectory-loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajLossWeights {
    pub sum: f64,
    pub bag_delta: f64,
}

impl Default for TrajLossWeights {
    fn default() -> Self {
        Self { sum: 1.0, bag_delta: 1.0 }
    }
}

/// `loss_sum + loss_bag_delta`.
pub fn loss_traj(traj: &Trajectory, gt: &GroundTruthTrack, cfg: &SmoothL1Config) -> Result<LossResult> {
    let sum = loss_sum(traj, gt, cfg)?;
    let delta = loss_bag_delta(traj, gt, cfg)?;
    Ok(sum.add(&delta))
}

pub fn loss_traj_weighted(
    traj: &Trajectory,
    gt: &GroundTruthTrack,
    cfg: &SmoothL1Config,
    weights: TrajLossWeights,
) -> Result<LossResult> {
    if weights == TrajLossWeights::default() {
        return loss_traj(traj, gt, cfg);
    }
    let sum = loss_sum(traj, gt, cfg)?.scaled(weights.sum);
    let delta = loss_bag_delta(traj, gt, cfg)?.scaled(weights.bag_delta);
    Ok(sum.add(&delta))
}

/// Which trajectory-loss terms the sparse variant evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseTerms {
    #[default]
    Both,
    SumOnly,
    BagDeltaOnly,
}

/// Trajectory loss against a pseudo track that joins the two annotated
/// keyframes `T` frames apart.
pub fn loss_traj_sparse(
    traj: &Trajectory,
    keyframe_start: BBox,
    keyframe_end: BBox,
    spec: &PseudoTrajectorySpec,
    terms: SparseTerms,
    cfg: &SmoothL1Config,
) -> Result<LossResult> {
    let pseudo = pseudo_track(keyframe_start, keyframe_end, traj.horizon(), spec, traj.class_id)?;
    match terms {
        SparseTerms::Both => loss_traj(traj, &pseudo.track, cfg),
        SparseTerms::SumOnly => loss_sum(traj, &pseudo.track, cfg),
        SparseTerms::BagDeltaOnly => loss_bag_delta(traj, &pseudo.track, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Draw a random box sequence of `horizon + 1` frames.
pub(crate) fn random_boxes(rng: &mut impl Rng, horizon: usize, spread: f64) -> Vec<BBox> {
    (0..=horizon)
        .map(|_| {
            BBox::new(
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
                rng.random_range(1.0..spread),
                rng.random_range(1.0..spread),
            )
        })
        .collect()
}

/// Offsets between consecutive boxes, anchored at the first box.
pub fn trajectory_from_boxes(boxes: &[BBox], class_id: u32) -> Result<Trajectory> {
    let offsets = boxes.windows(2).map(|w| offset_between(&w[0], &w[1])).collect();
    Trajectory::new(boxes[0], class_id, offsets, 0)
}

/// Checks that the cumulative loss on consecutive-difference offsets matches
/// the bag loss on the boxes themselves, over random instances with
/// `T` in {1, 4, 8} and random validity masks.
pub fn verify_bag_sum_equivalence(seed: u64, trials: usize, cfg: &SmoothL1Config) -> Result<EquivalenceReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    const TOLERANCE: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation: f64 = 0.0;
    for trial in 0..trials {
        let horizon = [1usize, 4, 8][trial % 3];
        let pred = random_boxes(&mut rng, horizon, 20.0);
        let gt_boxes = random_boxes(&mut rng, horizon, 20.0);
        let valid = (0..=horizon).map(|_| rng.random_bool(0.85)).collect();
        let gt = GroundTruthTrack::new(gt_boxes, valid, 0)?;
        let traj = trajectory_from_boxes(&pred, 0)?;
        let bag = loss_bag(&pred, &gt, cfg)?.value;
        let sum = loss_sum(&traj, &gt, cfg)?.value;
        max_deviation = max_deviation.max((bag - sum).abs());
    }
    Ok(EquivalenceReport { trials, max_deviation, tolerance: TOLERANCE, passed: max_deviation < TOLERANCE })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SmoothL1Config {
        SmoothL1Config::default()
    }

    fn stationary(b: BBox, frames: usize) -> GroundTruthTrack {
        GroundTruthTrack::fully_valid(vec![b; frames], 0)
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0, &cfg()), (0.0, 0.0));
        assert_eq!(smooth_l1(0.5, &cfg()), (0.125, 0.5));
        assert_eq!(smooth_l1(2.0, &cfg()), (1.5, 1.0));
        assert_eq!(smooth_l1(-2.0, &cfg()), (1.5, -1.0));
        // continuity at the transition
        let b = SmoothL1Config::new(0.7).unwrap();
        let below = smooth_l1(0.7 - 1e-12, &b);
        let at = smooth_l1(0.7, &b);
        assert!((below.0 - at.0).abs() < 1e-11 && (below.1 - at.1).abs() < 1e-11);
        assert!(SmoothL1Config::new(0.0).is_err());
    }

    #[test]
    fn bag_examples() {
        let boxes = vec![BBox::new(0.0, 0.0, 4.0, 4.0), BBox::new(1.0, 1.0, 4.0, 4.0)];
        let gt = GroundTruthTrack::fully_valid(boxes.clone(), 0);
        assert_eq!(loss_bag(&boxes, &gt, &cfg()).unwrap().value, 0.0);
        let mut off = boxes.clone();
        off[1].x += 0.5;
        assert_eq!(loss_bag(&off, &gt, &cfg()).unwrap().value, 0.125);
        let masked = GroundTruthTrack::new(boxes.clone(), vec![false, false], 0).unwrap();
        assert_eq!(loss_bag(&off, &masked, &cfg()).unwrap().value, 0.0);
        assert!(loss_bag(&off[..1], &gt, &cfg()).is_err());
    }

    #[test]
    fn sum_examples() {
        let b = BBox::new(0.0, 0.0, 4.0, 4.0);
        let traj = Trajectory::new(b, 0, vec![Offset::new(1.0, 0.0, 0.0, 0.0)], 0).unwrap();
        let r = loss_sum(&traj, &stationary(b, 2), &cfg()).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.grad_offsets[0], Offset::new(1.0, 0.0, 0.0, 0.0));

        let gt_boxes = vec![b, BBox::new(2.0, 1.0, 4.0, 5.0), BBox::new(3.0, 3.0, 5.0, 5.0)];
        let gt = GroundTruthTrack::fully_valid(gt_boxes.clone(), 0);
        let exact = trajectory_from_boxes(&gt_boxes, 0).unwrap();
        assert_eq!(loss_sum(&exact, &gt, &cfg()).unwrap().value, 0.0);
        assert!(loss_sum(&traj, &gt, &cfg()).is_err());
    }

    #[test]
    fn bag_delta_examples() {
        let b = BBox::new(0.0, 0.0, 4.0, 4.0);
        let traj = Trajectory::new(b, 0, vec![Offset::new(1.0, 0.0, 0.0, 0.0)], 0).unwrap();
        let r = loss_bag_delta(&traj, &stationary(b, 2), &cfg()).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.grad_keyframe, Offset::ZERO);

        // frame 2 invalid: terms 2 and 3 are skipped
        let gt = GroundTruthTrack::new(vec![b; 5], vec![true, true, false, true, true], 0).unwrap();
        let off = Trajectory::new(b, 0, vec![Offset::new(1.0, 0.0, 0.0, 0.0); 4], 0).unwrap();
        let r = loss_bag_delta(&off, &gt, &cfg()).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.grad_offsets[1], Offset::ZERO);
        assert_eq!(r.grad_offsets[2], Offset::ZERO);
        assert_ne!(r.grad_offsets[0], Offset::ZERO);
    }

    #[test]
    fn traj_is_sum_of_terms() {
        let b = BBox::new(0.0, 0.0, 4.0, 4.0);
        let traj = Trajectory::new(b, 0, vec![Offset::new(1.0, 0.0, 0.0, 0.0)], 0).unwrap();
        let gt = stationary(b, 2);
        let r = loss_traj(&traj, &gt, &cfg()).unwrap();
        assert_eq!(r.value, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let pred = random_boxes(&mut rng, 6, 10.0);
            let mut traj = trajectory_from_boxes(&pred, 0).unwrap();
            traj.offsets[2].dx += rng.random_range(-3.0..3.0);
            let gt = GroundTruthTrack::new(random_boxes(&mut rng, 6, 10.0), (0..7).map(|_| rng.random_bool(0.8)).collect(), 0).unwrap();
            let s = loss_sum(&traj, &gt, &cfg()).unwrap();
            let d = loss_bag_delta(&traj, &gt, &cfg()).unwrap();
            let t = loss_traj(&traj, &gt, &cfg()).unwrap();
            assert_eq!(t.value, s.value + d.value);
            for k in 0..6 {
                let expect = s.grad_offsets[k] + d.grad_offsets[k];
                assert_eq!(t.grad_offsets[k], expect);
            }
            assert_eq!(t.grad_keyframe, s.grad_keyframe + d.grad_keyframe);
            let w = loss_traj_weighted(&traj, &gt, &cfg(), TrajLossWeights::default()).unwrap();
            assert_eq!(w, t);
        }
    }

    #[test]
    fn weighted_terms() {
        let b = BBox::new(0.0, 0.0, 4.0, 4.0);
        let traj = Trajectory::new(b, 0, vec![Offset::new(1.0, 0.0, 0.0, 0.0)], 0).unwrap();
        let r = loss_traj_weighted(&traj, &stationary(b, 2), &cfg(), TrajLossWeights { sum: 2.0, bag_delta: 0.0 }).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn sparse_examples() {
        let s = BBox::new(0.0, 0.0, 10.0, 10.0);
        let e = BBox::new(8.0, 4.0, 10.0, 14.0);
        let lin = crate::trajectory::linear_pseudo_track(s, e, 4, 0).unwrap();
        let on_track = trajectory_from_boxes(&lin.boxes, 0).unwrap();
        let spec = PseudoTrajectorySpec::linear();
        let r = loss_traj_sparse(&on_track, s, e, &spec, SparseTerms::Both, &cfg()).unwrap();
        assert_eq!(r.value, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pred = random_boxes(&mut rng, 4, 10.0);
        let traj = trajectory_from_boxes(&pred, 0).unwrap();
        let a = loss_traj_sparse(&traj, s, e, &spec, SparseTerms::Both, &cfg()).unwrap();
        let b = loss_traj(&traj, &lin, &cfg()).unwrap();
        assert_eq!(a, b);
        let only_sum = loss_traj_sparse(&traj, s, e, &spec, SparseTerms::SumOnly, &cfg()).unwrap();
        assert_eq!(only_sum, loss_sum(&traj, &lin, &cfg()).unwrap());

        // on the f = 8 parabola through centers (0,0) and (16,8)
        let ps = BBox::from_center(0.0, 0.0, 6.0, 6.0);
        let pe = BBox::from_center(16.0, 8.0, 6.0, 6.0);
        let samples: Vec<BBox> = (0..=4)
            .map(|l| {
                let x = 4.0 * l as f64;
                BBox::from_center(x, x * x / 32.0, 6.0, 6.0)
            })
            .collect();
        let on_parabola = trajectory_from_boxes(&samples, 0).unwrap();
        let r = loss_traj_sparse(&on_parabola, ps, pe, &PseudoTrajectorySpec::parabola(), SparseTerms::Both, &cfg()).unwrap();
        assert!(r.value < 1e-9);
    }

    #[test]
    fn equivalence_holds() {
        let rep = verify_bag_sum_equivalence(1, 1000, &cfg()).unwrap();
        assert!(rep.passed, "max deviation {}", rep.max_deviation);
        assert!(verify_bag_sum_equivalence(1, 0, &cfg()).is_err());
    }

    #[test]
    fn equivalence_single_step_exact() {
        let pred = [BBox::new(1.0, 2.0, 3.0, 4.0), BBox::new(2.5, 1.0, 3.5, 4.0)];
        let gt = GroundTruthTrack::fully_valid(vec![BBox::new(0.0, 2.0, 3.0, 5.0), BBox::new(2.0, 2.0, 3.0, 4.0)], 0);
        let traj = trajectory_from_boxes(&pred, 0).unwrap();
        assert_eq!(loss_sum(&traj, &gt, &cfg()).unwrap().value, loss_bag(&pred, &gt, &cfg()).unwrap().value);
    }

    #[test]
    fn equivalence_breaks_for_perturbed_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pred = random_boxes(&mut rng, 4, 20.0);
        let gt = GroundTruthTrack::fully_valid(random_boxes(&mut rng, 4, 20.0), 0);
        let mut traj = trajectory_from_boxes(&pred, 0).unwrap();
        traj.offsets[1].dx += 5.0;
        let bag = loss_bag(&pred, &gt, &cfg()).unwrap().value;
        let sum = loss_sum(&traj, &gt, &cfg()).unwrap().value;
        assert!((bag - sum).abs() > 1e-3);
    }

    #[test]
    fn sum_is_order_sensitive_bag_is_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gt_boxes = random_boxes(&mut rng, 4, 20.0);
        let pred = random_boxes(&mut rng, 4, 20.0);
        let perm = [0usize, 3, 1, 4, 2];
        let gt = GroundTruthTrack::fully_valid(gt_boxes.clone(), 0);
        let gt_p = GroundTruthTrack::fully_valid(perm.iter().map(|&i| gt_boxes[i]).collect(), 0);
        let pred_p: Vec<BBox> = perm.iter().map(|&i| pred[i]).collect();
        let bag = loss_bag(&pred, &gt, &cfg()).unwrap().value;
        let bag_p = loss_bag(&pred_p, &gt_p, &cfg()).unwrap().value;
        assert!((bag - bag_p).abs() < 1e-9);
        let traj = Trajectory::new(pred[0], 0, vec![Offset::new(1.0, -1.0, 0.5, 0.0); 4], 0).unwrap();
        let s = loss_sum(&traj, &gt, &cfg()).unwrap().value;
        let s_p = loss_sum(&traj, &gt_p, &cfg()).unwrap().value;
        assert!((s - s_p).abs() > 1e-6);
    }
}
