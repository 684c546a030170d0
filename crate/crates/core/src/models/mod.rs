//! Differentiable image classifiers.
//!
//! A [`Classifier`] is a convolutional body followed by either a dense head
//! (flatten + fully connected layers) or a global-average-pool + linear head.
//! Only the latter exposes class activation maps.

mod checkpoint;
pub mod layers;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array4, ArrayD, ArrayView4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load, save, ModelMetadata};
use layers::{BatchNorm2d, Conv2d, Layer, LayerCache, Linear, Pass, Residual};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ArchitectureId {
    /// Two 5x5 conv + max-pool stages then two dense layers.
    MnistCnn,
    /// Four 3x3 convs in two pooled stages then two dense layers.
    SmallCnn,
    /// Pre-activation wide residual network.
    Wrn,
    /// Stem conv, four residual blocks (3x3 then 1x1), global average pool,
    /// one linear layer.
    CamBackbone,
}

impl ArchitectureId {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchitectureId::MnistCnn => "mnist_cnn",
            ArchitectureId::SmallCnn => "small_cnn",
            ArchitectureId::Wrn => "wrn_28_10",
            ArchitectureId::CamBackbone => "cam_backbone",
        }
    }

    /// Widths used when a spec leaves them unset.
    pub fn default_widths(self) -> Vec<usize> {
        match self {
            ArchitectureId::MnistCnn => vec![32, 64, 1024],
            ArchitectureId::SmallCnn => vec![32, 64, 256],
            // depth, widen factor
            ArchitectureId::Wrn => vec![28, 10],
            ArchitectureId::CamBackbone => vec![16, 16, 32, 32],
        }
    }
}

impl FromStr for ArchitectureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist_cnn" => Ok(ArchitectureId::MnistCnn),
            "small_cnn" => Ok(ArchitectureId::SmallCnn),
            "wrn_28_10" | "wrn" => Ok(ArchitectureId::Wrn),
            "cam_backbone" => Ok(ArchitectureId::CamBackbone),
            other => Err(Error::UnknownArchitecture(other.to_string())),
        }
    }
}

impl TryFrom<String> for ArchitectureId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ArchitectureId> for String {
    fn from(id: ArchitectureId) -> String {
        id.as_str().to_string()
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub id: ArchitectureId,
    pub num_classes: usize,
    /// `(channels, height, width)`
    pub input_shape: (usize, usize, usize),
    /// Architecture-specific widths; see [`ArchitectureId::default_widths`].
    #[serde(default)]
    pub widths: Option<Vec<usize>>,
}

impl ArchitectureSpec {
    pub fn new(id: ArchitectureId, num_classes: usize, input_shape: (usize, usize, usize)) -> Self {
        Self {
            id,
            num_classes,
            input_shape,
            widths: None,
        }
    }

    pub fn for_dataset(id: ArchitectureId, spec: &DatasetSpec) -> Self {
        Self::new(id, spec.num_classes, spec.image_shape)
    }

    pub fn with_widths(mut self, widths: Vec<usize>) -> Self {
        self.widths = Some(widths);
        self
    }

    pub fn widths(&self) -> Vec<usize> {
        self.widths.clone().unwrap_or_else(|| self.id.default_widths())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub enum Head<R> {
    /// Flatten, then alternating linear / ReLU layers.
    Dense(Vec<DenseLayer<R>>),
    /// Global average pool then one linear layer.
    GapLinear(Linear<R>),
}

#[derive(Debug, Clone)]
pub enum DenseLayer<R> {
    Linear(Linear<R>),
    Relu,
}

enum HeadCache<R> {
    Dense {
        in_dim: (usize, usize, usize, usize),
        inputs: Vec<Array2<R>>,
    },
    Gap {
        in_dim: (usize, usize, usize, usize),
        pooled: Array2<R>,
    },
}

/// Everything the backward pass needs from one forward pass.
pub struct Trace<R> {
    body: Vec<LayerCache<R>>,
    head: HeadCache<R>,
}

/// Final conv activations plus the linear head that reads them.
#[derive(Debug, Clone)]
pub struct CamParts<R> {
    /// `(batch, K, h, w)`
    pub features: Array4<R>,
    /// `(num_classes, K)`
    pub weights: Array2<R>,
    pub bias: Array1<R>,
}

#[derive(Debug, Clone)]
pub struct Classifier<R = f32> {
    pub spec: ArchitectureSpec,
    pub mode: Mode,
    pub metadata: ModelMetadata,
    body: Vec<Layer<R>>,
    head: Head<R>,
}

fn conv_relu<R: Real>(in_c: usize, out_c: usize, k: usize, rng: &mut ChaCha8Rng) -> [Layer<R>; 2] {
    [Layer::Conv(Conv2d::new(in_c, out_c, k, 1, k / 2, rng)), Layer::Relu]
}

/// Builds a freshly initialized model; identical seeds give identical weights.
pub fn build(spec: &ArchitectureSpec, seed: u64) -> Result<Classifier> {
    Classifier::<f32>::build(spec, seed)
}

impl<R: Real> Classifier<R> {
    pub fn build(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, h, w) = spec.input_shape;
        if spec.num_classes == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidConfig(format!("degenerate architecture spec {spec:?}")));
        }
        let widths = spec.widths();
        let need = |n: usize| -> Result<()> {
            if widths.len() != n || widths.iter().any(|&v| v == 0) {
                Err(Error::InvalidConfig(format!(
                    "{} expects {n} positive widths, got {widths:?}",
                    spec.id
                )))
            } else {
                Ok(())
            }
        };
        let (body, head) = match spec.id {
            ArchitectureId::MnistCnn => {
                need(3)?;
                if h % 4 != 0 || w % 4 != 0 {
                    return Err(Error::InvalidConfig("mnist_cnn needs sides divisible by 4".into()));
                }
                let mut body = Vec::new();
                body.extend(conv_relu(c, widths[0], 5, &mut rng));
                body.push(Layer::MaxPool(2));
                body.extend(conv_relu(widths[0], widths[1], 5, &mut rng));
                body.push(Layer::MaxPool(2));
                let flat = widths[1] * (h / 4) * (w / 4);
                let head = Head::Dense(vec![
                    DenseLayer::Linear(Linear::new(flat, widths[2], &mut rng)),
                    DenseLayer::Relu,
                    DenseLayer::Linear(Linear::new(widths[2], spec.num_classes, &mut rng)),
                ]);
                (body, head)
            }
            ArchitectureId::SmallCnn => {
                need(3)?;
                if h % 4 != 0 || w % 4 != 0 {
                    return Err(Error::InvalidConfig("small_cnn needs sides divisible by 4".into()));
                }
                let mut body = Vec::new();
                body.extend(conv_relu(c, widths[0], 3, &mut rng));
                body.extend(conv_relu(widths[0], widths[0], 3, &mut rng));
                body.push(Layer::MaxPool(2));
                body.extend(conv_relu(widths[0], widths[1], 3, &mut rng));
                body.extend(conv_relu(widths[1], widths[1], 3, &mut rng));
                body.push(Layer::MaxPool(2));
                let flat = widths[1] * (h / 4) * (w / 4);
                let head = Head::Dense(vec![
                    DenseLayer::Linear(Linear::new(flat, widths[2], &mut rng)),
                    DenseLayer::Relu,
                    DenseLayer::Linear(Linear::new(widths[2], spec.num_classes, &mut rng)),
                ]);
                (body, head)
            }
            ArchitectureId::Wrn => {
                need(2)?;
                let (depth, widen) = (widths[0], widths[1]);
                if depth < 10 || (depth - 4) % 6 != 0 {
                    return Err(Error::InvalidConfig(format!("wide resnet depth {depth} is not 6n+4")));
                }
                let per_group = (depth - 4) / 6;
                let mut body = vec![Layer::Conv(Conv2d::new(c, 16, 3, 1, 1, &mut rng))];
                let mut in_c = 16;
                for (g, stride) in [1usize, 2, 2].into_iter().enumerate() {
                    let out_c = 16 * widen << g;
                    for b in 0..per_group {
                        let s = if b == 0 { stride } else { 1 };
                        let shortcut = (in_c != out_c || s != 1).then(|| Conv2d::new(in_c, out_c, 1, s, 0, &mut rng));
                        body.push(Layer::Residual(Residual {
                            branch: vec![
                                Layer::BatchNorm(BatchNorm2d::new(in_c)),
                                Layer::Relu,
                                Layer::Conv(Conv2d::new(in_c, out_c, 3, s, 1, &mut rng)),
                                Layer::BatchNorm(BatchNorm2d::new(out_c)),
                                Layer::Relu,
                                Layer::Conv(Conv2d::new(out_c, out_c, 3, 1, 1, &mut rng)),
                            ],
                            shortcut,
                        }));
                        in_c = out_c;
                    }
                }
                body.push(Layer::BatchNorm(BatchNorm2d::new(in_c)));
                body.push(Layer::Relu);
                (body, Head::GapLinear(Linear::new(in_c, spec.num_classes, &mut rng)))
            }
            ArchitectureId::CamBackbone => {
                need(4)?;
                let strides = [1usize, 1, 2, 1];
                let mut body = Vec::new();
                body.extend(conv_relu(c, widths[0], 3, &mut rng));
                let mut in_c = widths[0];
                for (&out_c, &s) in widths.iter().zip(&strides) {
                    let shortcut = (in_c != out_c || s != 1).then(|| Conv2d::new(in_c, out_c, 1, s, 0, &mut rng));
                    body.push(Layer::Residual(Residual {
                        branch: vec![
                            Layer::Conv(Conv2d::new(in_c, out_c, 3, s, 1, &mut rng)),
                            Layer::Relu,
                            Layer::Conv(Conv2d::new(out_c, out_c, 1, 1, 0, &mut rng)),
                        ],
                        shortcut,
                    }));
                    body.push(Layer::Relu);
                    in_c = out_c;
                }
                (body, Head::GapLinear(Linear::new(in_c, spec.num_classes, &mut rng)))
            }
        };
        Ok(Self {
            spec: spec.clone(),
            mode: Mode::Eval,
            metadata: ModelMetadata {
                seed,
                ..ModelMetadata::default()
            },
            body,
            head,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn input_spec(&self) -> DatasetSpec {
        DatasetSpec::new(self.spec.id.as_str(), self.spec.num_classes, self.spec.input_shape)
    }

    /// `(K, h, w)` of the body output.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        self.body.iter().fold(self.spec.input_shape, |s, l| l.out_shape(s))
    }

    pub fn has_cam_head(&self) -> bool {
        matches!(self.head, Head::GapLinear(_))
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn check_input(&self, x: &ArrayView4<'_, R>) -> Result<()> {
        let (n, c, h, w) = x.dim();
        if (c, h, w) != self.spec.input_shape || n == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("(n>=1, {:?})", self.spec.input_shape),
                actual: format!("{:?}", x.dim()),
            });
        }
        Ok(())
    }

    fn check_labels(&self, labels: &[usize], n: usize) -> Result<()> {
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.spec.num_classes) {
            return Err(Error::InvalidLabel {
                label,
                num_classes: self.spec.num_classes,
            });
        }
        Ok(())
    }

    fn run(&self, x: ArrayView4<'_, R>, pass: Pass) -> (Array2<R>, Array4<R>, Trace<R>) {
        let mut h = x.to_owned();
        let mut caches = Vec::with_capacity(self.body.len());
        for layer in &self.body {
            let (y, c) = layer.forward(h, pass);
            h = y;
            caches.push(c);
        }
        let features = h;
        let (logits, head_cache) = match &self.head {
            Head::Dense(layers) => {
                let in_dim = features.dim();
                let (n, k, fh, fw) = in_dim;
                let mut z = features
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order((n, k * fh * fw))
                    .expect("contiguous");
                let mut inputs = Vec::new();
                for layer in layers {
                    if pass.record {
                        inputs.push(z.clone());
                    }
                    z = match layer {
                        DenseLayer::Linear(lin) => lin.forward(&z),
                        DenseLayer::Relu => z.mapv_into(|v| if v > R::zero() { v } else { R::zero() }),
                    };
                }
                (z, HeadCache::Dense { in_dim, inputs })
            }
            Head::GapLinear(lin) => {
                let in_dim = features.dim();
                let pooled = spatial_mean(&features);
                let logits = lin.forward(&pooled);
                (logits, HeadCache::Gap { in_dim, pooled })
            }
        };
        (logits, features, Trace { body: caches, head: head_cache })
    }

    fn pass(&self, record: bool) -> Pass {
        Pass {
            batch_stats: self.mode == Mode::Train,
            record,
        }
    }

    /// Logits, `(batch, num_classes)`.
    pub fn forward(&self, x: ArrayView4<'_, R>) -> Result<Array2<R>> {
        self.check_input(&x)?;
        Ok(self.run(x, self.pass(false)).0)
    }

    pub fn predict(&self, x: ArrayView4<'_, R>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(x)?))
    }

    /// Mean cross-entropy and its gradient with respect to the input batch.
    pub fn loss_and_input_gradient(&self, x: ArrayView4<'_, R>, labels: &[usize]) -> Result<(R, Array4<R>)> {
        self.check_input(&x)?;
        self.check_labels(labels, x.dim().0)?;
        let (logits, _, trace) = self.run(x, self.pass(true));
        let (loss, dlogits) = cross_entropy(&logits, labels);
        let (dx, _) = self.backward(&trace, dlogits, true, false);
        Ok((loss, dx.expect("input gradient requested")))
    }

    /// Mean cross-entropy and parameter gradients in [`Classifier::params`]
    /// order. In train mode batch-norm running statistics are updated.
    pub fn loss_and_param_gradients(&mut self, x: ArrayView4<'_, R>, labels: &[usize]) -> Result<(R, Vec<ArrayD<R>>)> {
        self.check_input(&x)?;
        self.check_labels(labels, x.dim().0)?;
        let (logits, _, trace) = self.run(x, self.pass(true));
        let (loss, dlogits) = cross_entropy(&logits, labels);
        let (_, grads) = self.backward(&trace, dlogits, false, true);
        if self.mode == Mode::Train {
            for (layer, cache) in self.body.iter_mut().zip(&trace.body) {
                layer.absorb_stats(cache);
            }
        }
        Ok((loss, grads))
    }

    fn backward(&self, trace: &Trace<R>, dlogits: Array2<R>, need_dx: bool, need_params: bool) -> (Option<Array4<R>>, Vec<ArrayD<R>>) {
        let (mut d, head_grads) = match (&self.head, &trace.head) {
            (Head::Dense(layers), HeadCache::Dense { in_dim, inputs }) => {
                let mut g = dlogits;
                let mut grads_rev = Vec::new();
                for (layer, input) in layers.iter().zip(inputs).rev() {
                    match layer {
                        DenseLayer::Linear(lin) => {
                            let (dx, pg) = lin.backward(input, &g, need_params);
                            grads_rev.push(pg);
                            g = dx;
                        }
                        DenseLayer::Relu => g.zip_mut_with(input, |v, &x| {
                            if x <= R::zero() {
                                *v = R::zero()
                            }
                        }),
                    }
                }
                let grads: Vec<ArrayD<R>> = grads_rev.into_iter().rev().flatten().collect();
                (
                    g.into_shape_with_order(*in_dim).expect("same size"),
                    grads,
                )
            }
            (Head::GapLinear(lin), HeadCache::Gap { in_dim, pooled }) => {
                let (dpooled, grads) = lin.backward(pooled, &dlogits, need_params);
                let (n, k, h, w) = *in_dim;
                let scale = R::one() / R::lit((h * w) as f64);
                let d = Array4::from_shape_fn((n, k, h, w), |(i, c, _, _)| dpooled[[i, c]] * scale);
                (d, grads)
            }
            _ => unreachable!("head cache always matches head"),
        };
        let mut body_grads_rev = Vec::with_capacity(self.body.len());
        let last = self.body.len();
        for (i, (layer, cache)) in self.body.iter().zip(&trace.body).enumerate().rev() {
            let want_dx = i > 0 || need_dx;
            let (dx, g) = layer.backward(cache, d, want_dx, need_params);
            body_grads_rev.push(g);
            d = match dx {
                Some(dx) => dx,
                None => {
                    debug_assert_eq!(i, 0, "only the first layer may skip its input gradient ({last})");
                    Array4::zeros((0, 0, 0, 0))
                }
            };
        }
        let mut grads: Vec<ArrayD<R>> = body_grads_rev.into_iter().rev().flatten().collect();
        grads.extend(head_grads);
        (need_dx.then_some(d), grads)
    }

    /// Final conv feature maps and the GAP-linear head weights.
    pub fn feature_maps_and_head(&self, x: ArrayView4<'_, R>) -> Result<CamParts<R>> {
        let Head::GapLinear(lin) = &self.head else {
            return Err(Error::UnsupportedArchitecture(self.spec.id.to_string()));
        };
        self.check_input(&x)?;
        let (_, features, _) = self.run(x, self.pass(false));
        Ok(CamParts {
            features,
            weights: lin.weight.clone(),
            bias: lin.bias.clone(),
        })
    }

    /// Learnable tensors with stable dotted names.
    pub fn params(&self) -> Vec<(String, ndarray::ArrayViewD<'_, R>)> {
        let mut out = Vec::new();
        for (i, layer) in self.body.iter().enumerate() {
            layer.visit_params(&format!("body.{i}"), &mut |n, v| out.push((n, v)));
        }
        match &self.head {
            Head::Dense(layers) => {
                for (i, layer) in layers.iter().enumerate() {
                    if let DenseLayer::Linear(lin) = layer {
                        out.push((format!("head.{i}.weight"), lin.weight.view().into_dyn()));
                        out.push((format!("head.{i}.bias"), lin.bias.view().into_dyn()));
                    }
                }
            }
            Head::GapLinear(lin) => {
                out.push(("head.fc.weight".to_string(), lin.weight.view().into_dyn()));
                out.push(("head.fc.bias".to_string(), lin.bias.view().into_dyn()));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, ndarray::ArrayViewMutD<'_, R>)> {
        let mut out = Vec::new();
        for (i, layer) in self.body.iter_mut().enumerate() {
            layer.visit_params_mut(&format!("body.{i}"), &mut |n, v| out.push((n, v)));
        }
        match &mut self.head {
            Head::Dense(layers) => {
                for (i, layer) in layers.iter_mut().enumerate() {
                    if let DenseLayer::Linear(lin) = layer {
                        out.push((format!("head.{i}.weight"), lin.weight.view_mut().into_dyn()));
                        out.push((format!("head.{i}.bias"), lin.bias.view_mut().into_dyn()));
                    }
                }
            }
            Head::GapLinear(lin) => {
                out.push(("head.fc.weight".to_string(), lin.weight.view_mut().into_dyn()));
                out.push(("head.fc.bias".to_string(), lin.bias.view_mut().into_dyn()));
            }
        }
        out
    }

    /// Non-learnable state such as batch-norm running statistics.
    pub fn buffers(&self) -> Vec<(String, ndarray::ArrayViewD<'_, R>)> {
        let mut out = Vec::new();
        for (i, layer) in self.body.iter().enumerate() {
            layer.visit_buffers(&format!("body.{i}"), &mut |n, v| out.push((n, v)));
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, ndarray::ArrayViewMutD<'_, R>)> {
        let mut out = Vec::new();
        for (i, layer) in self.body.iter_mut().enumerate() {
            layer.visit_buffers_mut(&format!("body.{i}"), &mut |n, v| out.push((n, v)));
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Same network in another precision.
    pub fn cast<S: Real>(&self) -> Classifier<S> {
        let f = |v: R| S::lit(v.to_f64_lossy());
        Classifier {
            spec: self.spec.clone(),
            mode: self.mode,
            metadata: self.metadata.clone(),
            body: self.body.iter().map(|l| l.map(&f)).collect(),
            head: match &self.head {
                Head::Dense(layers) => Head::Dense(
                    layers
                        .iter()
                        .map(|l| match l {
                            DenseLayer::Linear(lin) => DenseLayer::Linear(lin.map(&f)),
                            DenseLayer::Relu => DenseLayer::Relu,
                        })
                        .collect(),
                ),
                Head::GapLinear(lin) => Head::GapLinear(lin.map(&f)),
            },
        }
    }

    /// Scales every parameter of the first learnable layer by zero, making
    /// the network's output independent of its input.
    pub fn zero_first_layer(&mut self) {
        if let Some((_, mut p)) = self.params_mut().into_iter().next() {
            p.fill(R::zero());
        }
    }

    /// Zeroes the final linear layer: every input then maps to the same logits.
    pub fn zero_output_layer(&mut self) {
        let mut params = self.params_mut();
        let n = params.len();
        for (_, p) in params.iter_mut().skip(n.saturating_sub(2)) {
            p.fill(R::zero());
        }
    }
}

fn spatial_mean<R: Real>(x: &Array4<R>) -> Array2<R> {
    let (n, k, h, w) = x.dim();
    let inv = R::one() / R::lit((h * w) as f64);
    let mut out = Array2::<R>::zeros((n, k));
    for ((i, c, _, _), &v) in x.indexed_iter() {
        out[[i, c]] += v;
    }
    out.mapv_inplace(|v| v * inv);
    out
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy<R: Real>(logits: &Array2<R>, labels: &[usize]) -> (R, Array2<R>) {
    let n = logits.nrows();
    let inv_n = R::one() / R::lit(n as f64);
    let mut grad = Array2::<R>::zeros(logits.raw_dim());
    let mut total = R::zero();
    for ((row, mut g), &y) in logits.axis_iter(Axis(0)).zip(grad.axis_iter_mut(Axis(0))).zip(labels) {
        let max = row.iter().fold(R::neg_infinity(), |m, &v| m.max(v));
        let sum: R = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[y];
        for (gj, &v) in g.iter_mut().zip(row.iter()) {
            *gj = (v - log_z).exp() * inv_n;
        }
        g[y] -= inv_n;
    }
    (total * inv_n, grad)
}

/// Index of the largest value per row, lowest index on ties.
pub fn argmax_rows<R: Real>(logits: &Array2<R>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
