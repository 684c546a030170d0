//! Layers with explicit forward caches and hand-written backward passes.
//!
//! Convolutions lower to a single GEMM per batch via im2col. A layer never
//! mutates itself during forward or backward; batch-norm running statistics
//! are folded in afterwards by the owner of the network.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayD, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::real::Real;

/// How a forward pass should treat normalization and caching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pass {
    /// Normalize with batch statistics instead of running statistics.
    pub batch_stats: bool,
    /// Keep the intermediate values a backward pass needs.
    pub record: bool,
}

impl Pass {
    pub const EVAL: Pass = Pass {
        batch_stats: false,
        record: false,
    };
}

fn he_normal<R: Real, D: ndarray::Dimension, Sh: ndarray::ShapeBuilder<Dim = D>>(
    shape: Sh,
    fan_in: usize,
    rng: &mut impl Rng,
) -> ndarray::Array<R, D> {
    let std = (2.0 / fan_in as f64).sqrt();
    ndarray::Array::from_shape_simple_fn(shape, || {
        let z: f64 = StandardNormal.sample(rng);
        R::lit(z * std)
    })
}

#[derive(Debug, Clone)]
pub struct Conv2d<R> {
    /// `(out_channels, in_channels, k, k)`
    pub weight: Array4<R>,
    pub bias: Array1<R>,
    pub stride: usize,
    pub padding: usize,
}

impl<R: Real> Conv2d<R> {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, padding: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: he_normal((out_c, in_c, k, k), in_c * k * k, rng),
            bias: Array1::zeros(out_c),
            stride,
            padding,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h + 2 * self.padding - k) / self.stride + 1,
            (w + 2 * self.padding - k) / self.stride + 1,
        )
    }

    fn weight_matrix(&self) -> ndarray::ArrayView2<'_, R> {
        let (o, c, k, _) = self.weight.dim();
        self.weight
            .view()
            .into_shape_with_order((o, c * k * k))
            .expect("conv weights are contiguous")
    }

    fn forward(&self, x: &Array4<R>) -> Array4<R> {
        let (n, c, h, w) = x.dim();
        let (ho, wo) = self.out_size(h, w);
        let k = self.kernel();
        let out_c = self.weight.dim().0;
        let plane = ho * wo;
        let (rows, width) = (c * k * k, n * plane);
        let mut y = Array2::<R>::zeros((out_c, width));
        R::with_scratch(0, rows * width, |buf| {
            im2col(x, k, self.stride, self.padding, ho, wo, buf);
            let cols = ArrayView2::from_shape((rows, width), &*buf).expect("sized");
            general_mat_mul(R::one(), &self.weight_matrix(), &cols, R::zero(), &mut y);
        });
        let mut out = Array4::<R>::zeros((n, out_c, ho, wo));
        let ys = y.as_slice().expect("fresh array");
        let os = out.as_slice_mut().expect("fresh array");
        for o in 0..out_c {
            let b = self.bias[o];
            for i in 0..n {
                let src = &ys[o * width + i * plane..o * width + (i + 1) * plane];
                let dst = &mut os[(i * out_c + o) * plane..(i * out_c + o + 1) * plane];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + b;
                }
            }
        }
        out
    }

    fn backward(&self, x: &Array4<R>, dout: &Array4<R>, need_dx: bool, need_params: bool) -> (Option<Array4<R>>, Vec<ArrayD<R>>) {
        let (n, out_c, ho, wo) = dout.dim();
        let (_, c, _, _) = x.dim();
        let k = self.kernel();
        let plane = ho * wo;
        let (rows, width) = (c * k * k, n * plane);
        // (out_c, n*ho*wo), matching the im2col column order
        let dout = dout.as_standard_layout();
        let ds = dout.as_slice().expect("standard layout");
        let mut dm = Array2::<R>::zeros((out_c, width));
        {
            let dms = dm.as_slice_mut().expect("fresh array");
            for o in 0..out_c {
                for i in 0..n {
                    dms[o * width + i * plane..o * width + (i + 1) * plane]
                        .copy_from_slice(&ds[(i * out_c + o) * plane..(i * out_c + o + 1) * plane]);
                }
            }
        }
        let mut grads = Vec::new();
        if need_params {
            let mut dw = Array2::<R>::zeros((out_c, rows));
            R::with_scratch(0, rows * width, |buf| {
                im2col(x, k, self.stride, self.padding, ho, wo, buf);
                let cols = ArrayView2::from_shape((rows, width), &*buf).expect("sized");
                general_mat_mul(R::one(), &dm, &cols.t(), R::zero(), &mut dw);
            });
            let db = dm.sum_axis(Axis(1));
            grads.push(dw.into_shape_with_order(self.weight.raw_dim()).expect("same size").into_dyn());
            grads.push(db.into_dyn());
        }
        let dx = need_dx.then(|| {
            R::with_scratch(1, rows * width, |buf| {
                let mut dcols = ArrayViewMut2::from_shape((rows, width), &mut *buf).expect("sized");
                general_mat_mul(R::one(), &self.weight_matrix().t(), &dm, R::zero(), &mut dcols);
                col2im(buf, x.dim(), k, self.stride, self.padding, ho, wo)
            })
        });
        (dx, grads)
    }
}

/// Output columns `lo..hi` whose kernel tap `kj` lands inside the input row.
fn valid_cols(kj: usize, stride: usize, pad: usize, w: usize, wo: usize) -> (usize, usize) {
    // need ow*stride + kj >= pad and ow*stride + kj < w + pad
    let lo = if kj >= pad { 0 } else { (pad - kj).div_ceil(stride) };
    let hi = if w + pad > kj { ((w + pad - kj).div_ceil(stride)).min(wo) } else { 0 };
    (lo, hi.max(lo))
}

/// Writes the `(c*k*k, n*ho*wo)` column matrix of `x` into `cols`.
fn im2col<R: Real>(x: &Array4<R>, k: usize, stride: usize, pad: usize, ho: usize, wo: usize, cols: &mut [R]) {
    let (n, c, h, w) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let width = n * ho * wo;
    cols.fill(R::zero());
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * width..(row + 1) * width];
                let (lo, hi) = valid_cols(kj, stride, pad, w, wo);
                for ni in 0..n {
                    let base = (ni * c + ci) * h * w;
                    for oh in 0..ho {
                        let ih = (oh * stride + ki) as isize - pad as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let src = &xs[base + ih as usize * w..base + (ih as usize + 1) * w];
                        let drow = &mut dst[(ni * ho + oh) * wo..(ni * ho + oh + 1) * wo];
                        if stride == 1 {
                            let off = lo + kj - pad;
                            drow[lo..hi].copy_from_slice(&src[off..off + hi - lo]);
                        } else {
                            for ow in lo..hi {
                                drow[ow] = src[ow * stride + kj - pad];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<R: Real>(
    cs: &[R],
    (n, c, h, w): (usize, usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Array4<R> {
    let width = n * ho * wo;
    let mut dx = vec![R::zero(); n * c * h * w];
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cs[row * width..(row + 1) * width];
                let (lo, hi) = valid_cols(kj, stride, pad, w, wo);
                for ni in 0..n {
                    let base = (ni * c + ci) * h * w;
                    for oh in 0..ho {
                        let ih = (oh * stride + ki) as isize - pad as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let srow = &src[(ni * ho + oh) * wo..(ni * ho + oh + 1) * wo];
                        let drow = &mut dx[base + ih as usize * w..base + (ih as usize + 1) * w];
                        if stride == 1 {
                            let off = lo + kj - pad;
                            for (d, &s) in drow[off..off + hi - lo].iter_mut().zip(&srow[lo..hi]) {
                                *d += s;
                            }
                        } else {
                            for ow in lo..hi {
                                drow[ow * stride + kj - pad] += srow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    Array4::from_shape_vec((n, c, h, w), dx).expect("sized above")
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d<R> {
    pub gamma: Array1<R>,
    pub beta: Array1<R>,
    pub running_mean: Array1<R>,
    pub running_var: Array1<R>,
    pub momentum: f64,
    pub eps: f64,
}

impl<R: Real> BatchNorm2d<R> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Returns the output, the backward cache when recording, and the batch
    /// mean / unbiased variance when normalizing with batch statistics.
    #[allow(clippy::type_complexity)]
    fn forward(&self, x: &Array4<R>, pass: Pass) -> (Array4<R>, Option<BnCache<R>>, Option<(Array1<R>, Array1<R>)>) {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let (mean, var) = if pass.batch_stats {
            let mut mean = Array1::<R>::zeros(c);
            for ((_, ch, _, _), &v) in x.indexed_iter() {
                mean[ch] += v;
            }
            mean.mapv_inplace(|v| v / R::lit(m));
            let mut var = Array1::<R>::zeros(c);
            for ((_, ch, _, _), &v) in x.indexed_iter() {
                let d = v - mean[ch];
                var[ch] += d * d;
            }
            var.mapv_inplace(|v| v / R::lit(m));
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std = var.mapv(|v| R::one() / (v + R::lit(self.eps)).sqrt());
        let mut x_hat = x.clone();
        for ((_, ch, _, _), v) in x_hat.indexed_iter_mut() {
            *v = (*v - mean[ch]) * inv_std[ch];
        }
        let mut y = x_hat.clone();
        for ((_, ch, _, _), v) in y.indexed_iter_mut() {
            *v = *v * self.gamma[ch] + self.beta[ch];
        }
        let stats = pass.batch_stats.then(|| {
            let unbiased = if m > 1.0 { var.mapv(|v| v * R::lit(m / (m - 1.0))) } else { var.clone() };
            (mean, unbiased)
        });
        let cache = pass.record.then(|| BnCache {
            x_hat,
            inv_std,
            batch_stats: pass.batch_stats,
        });
        (y, cache, stats)
    }

    fn backward(&self, cache: &BnCache<R>, dout: &Array4<R>, need_params: bool) -> (Array4<R>, Vec<ArrayD<R>>) {
        let (n, c, h, w) = dout.dim();
        let m = R::lit((n * h * w) as f64);
        let mut dgamma = Array1::<R>::zeros(c);
        let mut dbeta = Array1::<R>::zeros(c);
        for (((_, ch, _, _), &dy), &xh) in dout.indexed_iter().zip(cache.x_hat.iter()) {
            dgamma[ch] += dy * xh;
            dbeta[ch] += dy;
        }
        let mut dx = dout.clone();
        if cache.batch_stats {
            for (((_, ch, _, _), v), &xh) in dx.indexed_iter_mut().zip(cache.x_hat.iter()) {
                let scale = self.gamma[ch] * cache.inv_std[ch] / m;
                *v = scale * (m * *v - dbeta[ch] - xh * dgamma[ch]);
            }
        } else {
            for ((_, ch, _, _), v) in dx.indexed_iter_mut() {
                *v = *v * self.gamma[ch] * cache.inv_std[ch];
            }
        }
        let grads = if need_params {
            vec![dgamma.into_dyn(), dbeta.into_dyn()]
        } else {
            Vec::new()
        };
        (dx, grads)
    }

    pub(crate) fn absorb(&mut self, mean: &Array1<R>, var: &Array1<R>) {
        let mom = R::lit(self.momentum);
        self.running_mean.zip_mut_with(mean, |r, &b| *r = (R::one() - mom) * *r + mom * b);
        self.running_var.zip_mut_with(var, |r, &b| *r = (R::one() - mom) * *r + mom * b);
    }
}

#[derive(Debug, Clone)]
pub struct BnCache<R> {
    x_hat: Array4<R>,
    inv_std: Array1<R>,
    batch_stats: bool,
}

/// A residual unit: `branch(x) + shortcut(x)`, the shortcut being identity
/// when absent.
#[derive(Debug, Clone)]
pub struct Residual<R> {
    pub branch: Vec<Layer<R>>,
    pub shortcut: Option<Conv2d<R>>,
}

#[derive(Debug, Clone)]
pub enum Layer<R> {
    Conv(Conv2d<R>),
    Relu,
    MaxPool(usize),
    BatchNorm(BatchNorm2d<R>),
    Residual(Residual<R>),
}

/// What a layer remembers for its backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<R> {
    None,
    Conv {
        input: Array4<R>,
    },
    Relu {
        out: Array4<R>,
    },
    MaxPool {
        argmax: Vec<usize>,
        in_dim: (usize, usize, usize, usize),
    },
    BatchNorm {
        cache: BnCache<R>,
        stats: Option<(Array1<R>, Array1<R>)>,
    },
    Residual {
        branch: Vec<LayerCache<R>>,
        shortcut: Option<Box<LayerCache<R>>>,
    },
}

impl<R: Real> Layer<R> {
    pub fn forward(&self, x: Array4<R>, pass: Pass) -> (Array4<R>, LayerCache<R>) {
        match self {
            Layer::Conv(conv) => {
                let y = conv.forward(&x);
                let cache = if pass.record {
                    LayerCache::Conv { input: x }
                } else {
                    LayerCache::None
                };
                (y, cache)
            }
            Layer::Relu => {
                let y = x.mapv_into(|v| if v > R::zero() { v } else { R::zero() });
                let cache = if pass.record {
                    LayerCache::Relu { out: y.clone() }
                } else {
                    LayerCache::None
                };
                (y, cache)
            }
            Layer::MaxPool(size) => {
                let (y, argmax) = max_pool(&x, *size);
                let cache = if pass.record {
                    LayerCache::MaxPool { argmax, in_dim: x.dim() }
                } else {
                    LayerCache::None
                };
                (y, cache)
            }
            Layer::BatchNorm(bn) => {
                let (y, cache, stats) = bn.forward(&x, pass);
                match cache {
                    Some(cache) => (y, LayerCache::BatchNorm { cache, stats }),
                    None => (y, LayerCache::None),
                }
            }
            Layer::Residual(res) => {
                let (short, short_cache) = match &res.shortcut {
                    Some(conv) => {
                        let s = conv.forward(&x);
                        (s, pass.record.then(|| Box::new(LayerCache::Conv { input: x.clone() })))
                    }
                    None => (x.clone(), None),
                };
                let mut h = x;
                let mut caches = Vec::with_capacity(res.branch.len());
                for layer in &res.branch {
                    let (y, c) = layer.forward(h, pass);
                    h = y;
                    caches.push(c);
                }
                h += &short;
                let cache = if pass.record {
                    LayerCache::Residual {
                        branch: caches,
                        shortcut: short_cache,
                    }
                } else {
                    LayerCache::None
                };
                (h, cache)
            }
        }
    }

    /// Returns the input gradient (when requested) and this layer's
    /// parameter gradients in [`Layer::visit_params`] order.
    pub fn backward(
        &self,
        cache: &LayerCache<R>,
        dout: Array4<R>,
        need_dx: bool,
        need_params: bool,
    ) -> (Option<Array4<R>>, Vec<ArrayD<R>>) {
        match (self, cache) {
            (Layer::Conv(conv), LayerCache::Conv { input }) => {
                conv.backward(input, &dout, need_dx, need_params)
            }
            (Layer::Relu, LayerCache::Relu { out }) => {
                let mut d = dout;
                d.zip_mut_with(out, |g, &y| {
                    if y <= R::zero() {
                        *g = R::zero()
                    }
                });
                (Some(d), Vec::new())
            }
            (Layer::MaxPool(_), LayerCache::MaxPool { argmax, in_dim }) => {
                let mut dx = vec![R::zero(); in_dim.0 * in_dim.1 * in_dim.2 * in_dim.3];
                let dout = dout.as_standard_layout();
                for (&idx, &g) in argmax.iter().zip(dout.iter()) {
                    dx[idx] += g;
                }
                (Some(Array4::from_shape_vec(*in_dim, dx).expect("sized")), Vec::new())
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNorm { cache, .. }) => {
                let (dx, grads) = bn.backward(cache, &dout, need_params);
                (Some(dx), grads)
            }
            (Layer::Residual(res), LayerCache::Residual { branch, shortcut }) => {
                let mut grads_rev: Vec<Vec<ArrayD<R>>> = Vec::new();
                let mut d = dout.clone();
                for (i, (layer, c)) in res.branch.iter().zip(branch).enumerate().rev() {
                    // the first branch layer only needs dx when the block does
                    let want_dx = i > 0 || need_dx;
                    let (dx, g) = layer.backward(c, d, want_dx, need_params);
                    grads_rev.push(g);
                    d = dx.unwrap_or_else(|| Array4::zeros((0, 0, 0, 0)));
                }
                let mut grads: Vec<ArrayD<R>> = grads_rev.into_iter().rev().flatten().collect();
                let dx = match (&res.shortcut, shortcut) {
                    (Some(conv), Some(sc)) => {
                        let LayerCache::Conv { input } = sc.as_ref() else {
                            panic!("shortcut cache mismatch");
                        };
                        let (sdx, g) = conv.backward(input, &dout, need_dx, need_params);
                        grads.extend(g);
                        match (need_dx, sdx) {
                            (true, Some(s)) => Some(d + &s),
                            _ => None,
                        }
                    }
                    _ => need_dx.then(|| d + &dout),
                };
                (dx, grads)
            }
            (layer, cache) => panic!(
                "backward through {:?} without a recorded cache ({})",
                layer.kind(),
                cache.kind()
            ),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Relu => "relu",
            Layer::MaxPool(_) => "maxpool",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Residual(_) => "residual",
        }
    }

    pub fn out_shape(&self, (c, h, w): (usize, usize, usize)) -> (usize, usize, usize) {
        match self {
            Layer::Conv(conv) => {
                let (ho, wo) = conv.out_size(h, w);
                (conv.weight.dim().0, ho, wo)
            }
            Layer::Relu | Layer::BatchNorm(_) => (c, h, w),
            Layer::MaxPool(s) => (c, h / s, w / s),
            Layer::Residual(res) => res.branch.iter().fold((c, h, w), |shape, l| l.out_shape(shape)),
        }
    }

    /// Visits learnable tensors in a fixed order shared with `backward`.
    pub fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ndarray::ArrayViewD<'a, R>)) {
        match self {
            Layer::Conv(conv) => {
                f(format!("{prefix}.weight"), conv.weight.view().into_dyn());
                f(format!("{prefix}.bias"), conv.bias.view().into_dyn());
            }
            Layer::BatchNorm(bn) => {
                f(format!("{prefix}.weight"), bn.gamma.view().into_dyn());
                f(format!("{prefix}.bias"), bn.beta.view().into_dyn());
            }
            Layer::Residual(res) => {
                for (i, l) in res.branch.iter().enumerate() {
                    l.visit_params(&format!("{prefix}.branch.{i}"), f);
                }
                if let Some(conv) = &res.shortcut {
                    f(format!("{prefix}.shortcut.weight"), conv.weight.view().into_dyn());
                    f(format!("{prefix}.shortcut.bias"), conv.bias.view().into_dyn());
                }
            }
            Layer::Relu | Layer::MaxPool(_) => {}
        }
    }

    pub fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ndarray::ArrayViewMutD<'a, R>)) {
        match self {
            Layer::Conv(conv) => {
                f(format!("{prefix}.weight"), conv.weight.view_mut().into_dyn());
                f(format!("{prefix}.bias"), conv.bias.view_mut().into_dyn());
            }
            Layer::BatchNorm(bn) => {
                f(format!("{prefix}.weight"), bn.gamma.view_mut().into_dyn());
                f(format!("{prefix}.bias"), bn.beta.view_mut().into_dyn());
            }
            Layer::Residual(res) => {
                for (i, l) in res.branch.iter_mut().enumerate() {
                    l.visit_params_mut(&format!("{prefix}.branch.{i}"), f);
                }
                if let Some(conv) = &mut res.shortcut {
                    f(format!("{prefix}.shortcut.weight"), conv.weight.view_mut().into_dyn());
                    f(format!("{prefix}.shortcut.bias"), conv.bias.view_mut().into_dyn());
                }
            }
            Layer::Relu | Layer::MaxPool(_) => {}
        }
    }

    /// Non-learnable state (batch-norm running statistics).
    pub fn visit_buffers_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ndarray::ArrayViewMutD<'a, R>)) {
        match self {
            Layer::BatchNorm(bn) => {
                f(format!("{prefix}.running_mean"), bn.running_mean.view_mut().into_dyn());
                f(format!("{prefix}.running_var"), bn.running_var.view_mut().into_dyn());
            }
            Layer::Residual(res) => {
                for (i, l) in res.branch.iter_mut().enumerate() {
                    l.visit_buffers_mut(&format!("{prefix}.branch.{i}"), f);
                }
            }
            _ => {}
        }
    }

    pub fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ndarray::ArrayViewD<'a, R>)) {
        match self {
            Layer::BatchNorm(bn) => {
                f(format!("{prefix}.running_mean"), bn.running_mean.view().into_dyn());
                f(format!("{prefix}.running_var"), bn.running_var.view().into_dyn());
            }
            Layer::Residual(res) => {
                for (i, l) in res.branch.iter().enumerate() {
                    l.visit_buffers(&format!("{prefix}.branch.{i}"), f);
                }
            }
            _ => {}
        }
    }

    /// Folds batch statistics recorded in `cache` into running statistics.
    pub fn absorb_stats(&mut self, cache: &LayerCache<R>) {
        match (self, cache) {
            (Layer::BatchNorm(bn), LayerCache::BatchNorm { stats: Some((m, v)), .. }) => bn.absorb(m, v),
            (Layer::Residual(res), LayerCache::Residual { branch, .. }) => {
                for (l, c) in res.branch.iter_mut().zip(branch) {
                    l.absorb_stats(c);
                }
            }
            _ => {}
        }
    }

    pub fn map<S: Real>(&self, f: &impl Fn(R) -> S) -> Layer<S> {
        match self {
            Layer::Conv(c) => Layer::Conv(c.map(f)),
            Layer::Relu => Layer::Relu,
            Layer::MaxPool(s) => Layer::MaxPool(*s),
            Layer::BatchNorm(bn) => Layer::BatchNorm(BatchNorm2d {
                gamma: bn.gamma.mapv(f),
                beta: bn.beta.mapv(f),
                running_mean: bn.running_mean.mapv(f),
                running_var: bn.running_var.mapv(f),
                momentum: bn.momentum,
                eps: bn.eps,
            }),
            Layer::Residual(res) => Layer::Residual(Residual {
                branch: res.branch.iter().map(|l| l.map(f)).collect(),
                shortcut: res.shortcut.as_ref().map(|c| c.map(f)),
            }),
        }
    }
}

impl<R: Real> Conv2d<R> {
    fn map<S: Real>(&self, f: &impl Fn(R) -> S) -> Conv2d<S> {
        Conv2d {
            weight: self.weight.mapv(f),
            bias: self.bias.mapv(f),
            stride: self.stride,
            padding: self.padding,
        }
    }
}

impl<R> LayerCache<R> {
    fn kind(&self) -> &'static str {
        match self {
            LayerCache::None => "none",
            LayerCache::Conv { .. } => "conv",
            LayerCache::Relu { .. } => "relu",
            LayerCache::MaxPool { .. } => "maxpool",
            LayerCache::BatchNorm { .. } => "batchnorm",
            LayerCache::Residual { .. } => "residual",
        }
    }
}

fn max_pool<R: Real>(x: &Array4<R>, size: usize) -> (Array4<R>, Vec<usize>) {
    let (n, c, h, w) = x.dim();
    let (ho, wo) = (h / size, w / size);
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oh in 0..ho {
            for ow in 0..wo {
                let mut best = base + oh * size * w + ow * size;
                for di in 0..size {
                    for dj in 0..size {
                        let idx = base + (oh * size + di) * w + ow * size + dj;
                        if xs[idx] > xs[best] {
                            best = idx;
                        }
                    }
                }
                out.push(xs[best]);
                argmax.push(best);
            }
        }
    }
    (Array4::from_shape_vec((n, c, ho, wo), out).expect("sized"), argmax)
}

#[derive(Debug, Clone)]
pub struct Linear<R> {
    /// `(out_features, in_features)`
    pub weight: Array2<R>,
    pub bias: Array1<R>,
}

impl<R: Real> Linear<R> {
    pub fn new(in_f: usize, out_f: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: he_normal((out_f, in_f), in_f, rng),
            bias: Array1::zeros(out_f),
        }
    }

    pub fn forward(&self, x: &Array2<R>) -> Array2<R> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    /// `(dx, [dweight, dbias])`
    pub fn backward(&self, x: &Array2<R>, dout: &Array2<R>, need_params: bool) -> (Array2<R>, Vec<ArrayD<R>>) {
        let dx = dout.dot(&self.weight);
        let grads = if need_params {
            vec![dout.t().dot(x).into_dyn(), dout.sum_axis(Axis(0)).into_dyn()]
        } else {
            Vec::new()
        };
        (dx, grads)
    }

    pub fn map<S: Real>(&self, f: &impl Fn(R) -> S) -> Linear<S> {
        Linear {
            weight: self.weight.mapv(f),
            bias: self.bias.mapv(f),
        }
    }
}
