//! Trajectory head and keyframe box refiner as batched dense layers with
//! hand-written backpropagation.
//!
//! Head: the time index `l / T`, the keyframe box (normalized by frame size)
//! and the box feature each pass through their own linear embedding of equal
//! width; the concatenation goes through two ReLU layers and a linear output
//! of four values, scaled back to pixels.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::feature::{FeatureVector, FEATURE_LEN};
use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameSize, Offset};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `output x input`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn uniform(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = Array2::from_shape_simple_fn((output, input), || rng.random_range(-bound..bound));
        let b = Array1::from_shape_simple_fn(output, || rng.random_range(-bound..bound));
        Self { w, b }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: Array2::zeros((output, input)), b: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    /// Accumulate parameter gradients into `grad` and return the input gradient.
    pub fn backward(&self, x: ArrayView2<f64>, grad_out: ArrayView2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.w += &grad_out.t().dot(&x);
        grad.b += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.w)
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim())
    }
}

/// How the head's output at index `l` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputParam {
    /// Offset between boxes `l - 1` and `l`.
    Increments,
    /// Box `l` minus the keyframe box, predicted independently per index.
    KeyframeRelative,
}

/// Where the correction of the detector's keyframe box comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeCorrection {
    /// Keyframe box used as detected.
    Off,
    /// Separate refiner MLP of width `refiner_dim`.
    Refiner,
    /// The head's own output at time index `l = 0`.
    Head,
}

impl std::str::FromStr for KeyframeCorrection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Self::Off),
            "refiner" => Ok(Self::Refiner),
            "head" => Ok(Self::Head),
            other => Err(Error::InvalidArgument(format!("unknown keyframe correction '{other}'"))),
        }
    }
}

impl KeyframeCorrection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Off => "off",
            Self::Refiner => "refiner",
            Self::Head => "head",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub frame_size: FrameSize,
    /// Pixels per unit of raw head and refiner output.
    pub output_unit: f64,
    pub feature_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub keyframe: KeyframeCorrection,
    /// Hidden width of the separate refiner.
    pub refiner_dim: usize,
    pub use_box_input: bool,
    pub use_feature_input: bool,
    pub output: OutputParam,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frame_size: FrameSize::new(64, 64),
            output_unit: 2.0,
            feature_len: FEATURE_LEN,
            embed_dim: 64,
            hidden_dim: 128,
            keyframe: KeyframeCorrection::Head,
            refiner_dim: 64,
            use_box_input: true,
            use_feature_input: true,
            output: OutputParam::Increments,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryHeadParams {
    pub time_embed: Dense,
    pub box_embed: Dense,
    pub feature_embed: Dense,
    pub hidden1: Dense,
    pub hidden2: Dense,
    pub output: Dense,
}

/// Predicts a pixel correction for the detector's keyframe box from the
/// same box feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerParams {
    pub hidden: Dense,
    pub output: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryModel {
    pub config: ModelConfig,
    pub head: TrajectoryHeadParams,
    pub refiner: Option<RefinerParams>,
}

impl TrajectoryHeadParams {
    fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let (e, h) = (cfg.embed_dim, cfg.hidden_dim);
        Self {
            time_embed: Dense::uniform(1, e, rng),
            box_embed: Dense::uniform(4, e, rng),
            feature_embed: Dense::uniform(cfg.feature_len, e, rng),
            hidden1: Dense::uniform(3 * e, h, rng),
            hidden2: Dense::uniform(h, h, rng),
            output: Dense::uniform(h, 4, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            time_embed: self.time_embed.zeros_like(),
            box_embed: self.box_embed.zeros_like(),
            feature_embed: self.feature_embed.zeros_like(),
            hidden1: self.hidden1.zeros_like(),
            hidden2: self.hidden2.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    fn layers(&self) -> [(&'static str, &Dense); 6] {
        [
            ("time_embed", &self.time_embed),
            ("box_embed", &self.box_embed),
            ("feature_embed", &self.feature_embed),
            ("hidden1", &self.hidden1),
            ("hidden2", &self.hidden2),
            ("output", &self.output),
        ]
    }

    fn layers_mut(&mut self) -> [(&'static str, &mut Dense); 6] {
        [
            ("time_embed", &mut self.time_embed),
            ("box_embed", &mut self.box_embed),
            ("feature_embed", &mut self.feature_embed),
            ("hidden1", &mut self.hidden1),
            ("hidden2", &mut self.hidden2),
            ("output", &mut self.output),
        ]
    }
}

impl RefinerParams {
    /// The output layer starts at zero so an untrained refiner leaves boxes unchanged.
    fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        Self { hidden: Dense::uniform(cfg.feature_len + 4, cfg.refiner_dim, rng), output: Dense::zeros(cfg.refiner_dim, 4) }
    }

    fn zeros_like(&self) -> Self {
        Self { hidden: self.hidden.zeros_like(), output: self.output.zeros_like() }
    }
}

/// Activations kept for the backward pass of the head.
pub struct HeadCache {
    x_time: Array2<f64>,
    x_box: Array2<f64>,
    x_feat: Array2<f64>,
    concat: Array2<f64>,
    pre1: Array2<f64>,
    act1: Array2<f64>,
    pre2: Array2<f64>,
    act2: Array2<f64>,
}

impl HeadCache {
    /// Every ReLU pre-activation, for kink filtering in gradient checks.
    pub fn pre_activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.pre1.iter().chain(self.pre2.iter()).copied()
    }
}

pub struct ForwardCache {
    pub head: HeadCache,
    pub refiner: Option<RefinerCache>,
    horizon: usize,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.head.pre_activations().chain(self.refiner.iter().flat_map(|r| r.pre_activations()))
    }
}

pub struct RefinerCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl RefinerCache {
    pub fn pre_activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.pre.iter().copied()
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn relu_backward(pre: &Array2<f64>, grad: Array2<f64>) -> Array2<f64> {
    let mut g = grad;
    g.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    g
}

impl TrajectoryModel {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.embed_dim == 0 || config.hidden_dim == 0 || config.feature_len == 0 {
            return Err(Error::InvalidArgument("model widths must be positive".into()));
        }
        if !(config.output_unit > 0.0 && config.output_unit.is_finite()) {
            return Err(Error::InvalidArgument("output unit must be positive".into()));
        }
        let head = TrajectoryHeadParams::init(&config, rng);
        if config.keyframe == KeyframeCorrection::Refiner && config.refiner_dim == 0 {
            return Err(Error::InvalidArgument("refiner width must be positive".into()));
        }
        let refiner = (config.keyframe == KeyframeCorrection::Refiner).then(|| RefinerParams::init(&config, rng));
        Ok(Self { config, head, refiner })
    }

    /// All weights and biases zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        let mut m = Self::new(config, &mut crate::seed::stream(0, "zero"))?;
        for (_, t) in m.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(m)
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self { config: self.config.clone(), head: self.head.zeros_like(), refiner: self.refiner.as_ref().map(RefinerParams::zeros_like) }
    }

    fn scale_row(&self) -> Array1<f64> {
        Array1::from_elem(4, self.config.output_unit)
    }

    fn normalized_box(&self, b: &BBox) -> [f64; 4] {
        let s = self.config.frame_size.box_scale();
        let a = b.to_array();
        [a[0] / s[0], a[1] / s[1], a[2] / s[2], a[3] / s[3]]
    }

    fn check_feature(&self, f: &FeatureVector) -> Result<()> {
        if f.len() != self.config.feature_len {
            return Err(Error::ShapeMismatch { name: "feature".into(), expected: vec![self.config.feature_len], actual: vec![f.len()] });
        }
        Ok(())
    }

    /// Head outputs in pixels for every sample and every index `1..=horizon`.
    ///
    /// Row `i * horizon + (l - 1)` belongs to sample `i` and index `l`.
    pub fn head_forward(&self, boxes: &[BBox], features: &[&FeatureVector], horizon: usize) -> Result<(Array2<f64>, HeadCache)> {
        self.head_forward_from(boxes, features, horizon, 1)
    }

    /// Head outputs for indices `first..=horizon`, `horizon + 1 - first` rows per sample.
    fn head_forward_from(&self, boxes: &[BBox], features: &[&FeatureVector], horizon: usize, first: usize) -> Result<(Array2<f64>, HeadCache)> {
        if boxes.len() != features.len() {
            return Err(Error::LengthMismatch { expected: boxes.len(), actual: features.len() });
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let per = horizon + 1 - first;
        let rows = boxes.len() * per;
        let fl = self.config.feature_len;
        let mut x_time = Array2::zeros((rows, 1));
        let mut x_box = Array2::zeros((rows, 4));
        let mut x_feat = Array2::zeros((rows, fl));
        for (i, (b, f)) in boxes.iter().zip(features).enumerate() {
            self.check_feature(f)?;
            let nb = self.normalized_box(b);
            for l in first..=horizon {
                let r = i * per + l - first;
                x_time[[r, 0]] = l as f64 / horizon as f64;
                if self.config.use_box_input {
                    for c in 0..4 {
                        x_box[[r, c]] = nb[c];
                    }
                }
                if self.config.use_feature_input {
                    x_feat.row_mut(r).assign(&ndarray::ArrayView1::from(&f.0[..]));
                }
            }
        }
        let h = &self.head;
        let concat = concatenate![
            Axis(1),
            h.time_embed.forward(x_time.view()),
            h.box_embed.forward(x_box.view()),
            h.feature_embed.forward(x_feat.view())
        ];
        let pre1 = h.hidden1.forward(concat.view());
        let act1 = relu(&pre1);
        let pre2 = h.hidden2.forward(act1.view());
        let act2 = relu(&pre2);
        let mut out = h.output.forward(act2.view());
        out *= &self.scale_row();
        Ok((out, HeadCache { x_time, x_box, x_feat, concat, pre1, act1, pre2, act2 }))
    }

    /// Backpropagate pixel-space output gradients into `grads.head`.
    pub fn head_backward(&self, cache: &HeadCache, grad_out: &Array2<f64>, grads: &mut TrajectoryModel) {
        let h = &self.head;
        let g = &mut grads.head;
        let g_out = grad_out * &self.scale_row();
        let g_act2 = h.output.backward(cache.act2.view(), g_out.view(), &mut g.output);
        let g_pre2 = relu_backward(&cache.pre2, g_act2);
        let g_act1 = h.hidden2.backward(cache.act1.view(), g_pre2.view(), &mut g.hidden2);
        let g_pre1 = relu_backward(&cache.pre1, g_act1);
        let g_concat = h.hidden1.backward(cache.concat.view(), g_pre1.view(), &mut g.hidden1);
        let e = self.config.embed_dim;
        h.time_embed.backward(cache.x_time.view(), g_concat.slice(s![.., 0..e]), &mut g.time_embed);
        h.box_embed.backward(cache.x_box.view(), g_concat.slice(s![.., e..2 * e]), &mut g.box_embed);
        h.feature_embed.backward(cache.x_feat.view(), g_concat.slice(s![.., 2 * e..3 * e]), &mut g.feature_embed);
    }

    /// Pixel corrections from the separate refiner; zero rows without one.
    fn refiner_forward(&self, boxes: &[BBox], features: &[&FeatureVector]) -> Result<(Array2<f64>, Option<RefinerCache>)> {
        let Some(r) = &self.refiner else {
            return Ok((Array2::zeros((boxes.len(), 4)), None));
        };
        let fl = self.config.feature_len;
        let mut x = Array2::zeros((boxes.len(), fl + 4));
        for (i, (b, f)) in boxes.iter().zip(features).enumerate() {
            self.check_feature(f)?;
            x.slice_mut(s![i, 0..fl]).assign(&ndarray::ArrayView1::from(&f.0[..]));
            let nb = self.normalized_box(b);
            for c in 0..4 {
                x[[i, fl + c]] = nb[c];
            }
        }
        let pre = r.hidden.forward(x.view());
        let act = relu(&pre);
        let mut out = r.output.forward(act.view());
        out *= &self.scale_row();
        Ok((out, Some(RefinerCache { x, pre, act })))
    }

    fn refiner_backward(&self, cache: &RefinerCache, grad_out: &Array2<f64>, grads: &mut TrajectoryModel) {
        let (Some(r), Some(g)) = (&self.refiner, grads.refiner.as_mut()) else {
            return;
        };
        let g_out = grad_out * &self.scale_row();
        let g_act = r.output.backward(cache.act.view(), g_out.view(), &mut g.output);
        let g_pre = relu_backward(&cache.pre, g_act);
        r.hidden.backward(cache.x.view(), g_pre.view(), &mut g.hidden);
    }

    /// Keyframe corrections (`N x 4`) and head outputs for `l = 1..=horizon`
    /// (`N * horizon x 4`), both in pixels.
    pub fn forward_batch(&self, boxes: &[BBox], features: &[&FeatureVector], horizon: usize) -> Result<(Array2<f64>, Array2<f64>, ForwardCache)> {
        match self.config.keyframe {
            KeyframeCorrection::Head => {
                let (all, head) = self.head_forward_from(boxes, features, horizon, 0)?;
                let per = horizon + 1;
                let mut corr = Array2::zeros((boxes.len(), 4));
                let mut out = Array2::zeros((boxes.len() * horizon, 4));
                for i in 0..boxes.len() {
                    corr.row_mut(i).assign(&all.row(i * per));
                    out.slice_mut(s![i * horizon..(i + 1) * horizon, ..]).assign(&all.slice(s![i * per + 1..(i + 1) * per, ..]));
                }
                Ok((corr, out, ForwardCache { head, refiner: None, horizon }))
            }
            KeyframeCorrection::Off | KeyframeCorrection::Refiner => {
                let (corr, refiner) = self.refiner_forward(boxes, features)?;
                let (out, head) = self.head_forward(boxes, features, horizon)?;
                Ok((corr, out, ForwardCache { head, refiner, horizon }))
            }
        }
    }

    /// Backpropagate gradients of the corrections and head outputs into `grads`.
    pub fn backward_batch(&self, cache: &ForwardCache, grad_corr: &Array2<f64>, grad_out: &Array2<f64>, grads: &mut TrajectoryModel) {
        match self.config.keyframe {
            KeyframeCorrection::Head => {
                let (t, per) = (cache.horizon, cache.horizon + 1);
                let n = grad_corr.nrows();
                let mut all = Array2::zeros((n * per, 4));
                for i in 0..n {
                    all.row_mut(i * per).assign(&grad_corr.row(i));
                    all.slice_mut(s![i * per + 1..(i + 1) * per, ..]).assign(&grad_out.slice(s![i * t..(i + 1) * t, ..]));
                }
                self.head_backward(&cache.head, &all, grads);
            }
            KeyframeCorrection::Off | KeyframeCorrection::Refiner => {
                self.head_backward(&cache.head, grad_out, grads);
                if let Some(rc) = &cache.refiner {
                    self.refiner_backward(rc, grad_corr, grads);
                }
            }
        }
    }

    /// Corrected keyframe box for one detection.
    pub fn refine(&self, detection: &BBox, feature: &FeatureVector) -> Result<BBox> {
        let (c, _, _) = self.forward_batch(std::slice::from_ref(detection), &[feature], 1)?;
        let a = detection.to_array();
        Ok(BBox::from_array([a[0] + c[[0, 0]], a[1] + c[[0, 1]], a[2] + c[[0, 2]], a[3] + c[[0, 3]]]))
    }

    fn named_layers(&self) -> Vec<(String, &Dense)> {
        let mut layers: Vec<(String, &Dense)> = self.head.layers().into_iter().map(|(n, d)| (format!("head.{n}"), d)).collect();
        if let Some(r) = &self.refiner {
            layers.push(("refiner.hidden".into(), &r.hidden));
            layers.push(("refiner.output".into(), &r.output));
        }
        layers
    }

    /// Named parameter tensors in a fixed order, with their shapes.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (name, d) in self.named_layers() {
            out.push((format!("{name}.w"), d.w.shape().to_vec(), d.w.as_slice().expect("standard layout")));
            out.push((format!("{name}.b"), d.b.shape().to_vec(), d.b.as_slice().expect("standard layout")));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut layers: Vec<(String, &mut Dense)> =
            self.head.layers_mut().into_iter().map(|(n, d)| (format!("head.{n}"), d)).collect();
        if let Some(r) = &mut self.refiner {
            layers.push(("refiner.hidden".into(), &mut r.hidden));
            layers.push(("refiner.output".into(), &mut r.output));
        }
        let mut out = Vec::new();
        for (name, d) in layers {
            out.push((format!("{name}.w"), d.w.as_slice_mut().expect("standard layout")));
            out.push((format!("{name}.b"), d.b.as_slice_mut().expect("standard layout")));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }
}

/// Raw head output at index `l` of a `horizon`-step trajectory, in pixels.
pub fn forward(model: &TrajectoryModel, l: usize, horizon: usize, keyframe_box: &BBox, feature: &FeatureVector) -> Result<Offset> {
    if l == 0 || l > horizon {
        return Err(Error::InvalidArgument(format!("trajectory index {l} outside 1..={horizon}")));
    }
    let (out, _) = model.head_forward(std::slice::from_ref(keyframe_box), &[feature], horizon)?;
    let row = out.row(l - 1);
    Ok(Offset::new(row[0], row[1], row[2], row[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn small() -> ModelConfig {
        ModelConfig { embed_dim: 5, hidden_dim: 7, refiner_dim: 3, feature_len: 6, ..Default::default() }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = TrajectoryModel::zeroed(ModelConfig::default()).unwrap();
        let f = FeatureVector(vec![0.3; 64]);
        for l in 1..=4 {
            assert_eq!(forward(&m, l, 4, &BBox::new(3.0, 4.0, 10.0, 10.0), &f).unwrap(), Offset::ZERO);
        }
    }

    #[test]
    fn batch_shape_and_determinism() {
        let m = TrajectoryModel::new(small(), &mut seed::stream(1, "init")).unwrap();
        let f = FeatureVector(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let b = BBox::new(10.0, 12.0, 16.0, 16.0);
        let (out, _) = m.head_forward(&[b], &[&f], 4).unwrap();
        assert_eq!(out.shape(), &[4, 4]);
        let (again, _) = m.head_forward(&[b], &[&f], 4).unwrap();
        assert_eq!(out, again);
        let single = forward(&m, 3, 4, &b, &f).unwrap();
        assert_eq!(single.to_array(), [out[[2, 0]], out[[2, 1]], out[[2, 2]], out[[2, 3]]]);
        assert!(forward(&m, 0, 4, &b, &f).is_err());
        assert!(forward(&m, 5, 4, &b, &f).is_err());
        assert!(forward(&m, 1, 4, &b, &FeatureVector(vec![0.0; 3])).is_err());
    }

    #[test]
    fn embedding_widths_equal() {
        for e in [1, 3, 17] {
            let m = TrajectoryModel::new(ModelConfig { embed_dim: e, ..small() }, &mut seed::stream(2, "init")).unwrap();
            let h = &m.head;
            assert_eq!(h.time_embed.output_dim(), e);
            assert_eq!(h.box_embed.output_dim(), e);
            assert_eq!(h.feature_embed.output_dim(), e);
            assert_eq!(h.hidden1.input_dim(), 3 * e);
        }
    }

    #[test]
    fn untrained_refiner_is_identity() {
        let cfg = ModelConfig { keyframe: KeyframeCorrection::Refiner, ..small() };
        let m = TrajectoryModel::new(cfg, &mut seed::stream(3, "init")).unwrap();
        let b = BBox::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(m.refine(&b, &FeatureVector(vec![0.5; 6])).unwrap(), b);
    }

    #[test]
    fn init_bounds() {
        let m = TrajectoryModel::new(ModelConfig::default(), &mut seed::stream(3, "init")).unwrap();
        let bound = 1.0 / (192f64).sqrt();
        assert!(m.head.hidden1.w.iter().all(|v| v.abs() <= bound));
    }
}
