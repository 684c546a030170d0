//! FGSM and projected gradient descent under l∞ and l2 balls.
//!
//! PGD keeps the perturbation `delta` explicitly. Each step moves it along
//! the gradient direction, projects it back onto the ball, then clips
//! `x0 + delta` into `[0, 1]` and re-derives `delta` from the clipped image.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array4, ArrayViewMut3, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::models::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Linf,
    L2,
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::Linf => "linf",
            Norm::L2 => "l2",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linf" => Ok(Norm::Linf),
            "l2" => Ok(Norm::L2),
            other => Err(Error::InvalidConfig(format!("unknown norm `{other}` (expected linf or l2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackLoss {
    #[default]
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub norm: Norm,
    /// Ball radius on the `[0, 1]` pixel scale.
    pub epsilon: f64,
    pub step_size: f64,
    pub num_steps: usize,
    pub random_start: bool,
    #[serde(default)]
    pub loss: AttackLoss,
}

/// Step count of the inner attack used during adversarial training.
pub const TRAINING_STEPS: usize = 7;
/// Step count of robustness-sweep evaluation attacks.
pub const EVALUATION_STEPS: usize = 10;

impl AttackConfig {
    /// Step size `2.5 * epsilon / num_steps`, random start.
    pub fn with_default_step(norm: Norm, epsilon: f64, num_steps: usize) -> Self {
        Self {
            norm,
            epsilon,
            step_size: if num_steps == 0 { 0.0 } else { 2.5 * epsilon / num_steps as f64 },
            num_steps,
            random_start: true,
            loss: AttackLoss::CrossEntropy,
        }
    }

    /// Inner maximization for adversarial training.
    pub fn training(epsilon: f64) -> Self {
        Self::with_default_step(Norm::Linf, epsilon, TRAINING_STEPS)
    }

    /// Sweep attack: 10 steps, random start.
    pub fn evaluation(norm: Norm, epsilon: f64) -> Self {
        Self::with_default_step(norm, epsilon, EVALUATION_STEPS)
    }

    /// One signed step of size `epsilon`.
    pub fn fgsm(epsilon: f64) -> Self {
        Self {
            norm: Norm::Linf,
            epsilon,
            step_size: epsilon,
            num_steps: 1,
            random_start: false,
            loss: AttackLoss::CrossEntropy,
        }
    }

    /// High-epsilon untargeted preset: `epsilon = 32/255`, step `1.6/255`,
    /// 50 steps, no random start.
    pub fn large_eps(norm: Norm) -> Self {
        Self {
            norm,
            epsilon: 32.0 / 255.0,
            step_size: 1.6 / 255.0,
            num_steps: 50,
            random_start: false,
            loss: AttackLoss::CrossEntropy,
        }
    }

    /// Leaves everything untouched: no steps, no random start.
    pub fn identity(norm: Norm, epsilon: f64) -> Self {
        Self {
            norm,
            epsilon,
            step_size: 0.0,
            num_steps: 0,
            random_start: false,
            loss: AttackLoss::CrossEntropy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidConfig(format!("attack epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !self.step_size.is_finite() || self.step_size < 0.0 {
            return Err(Error::InvalidConfig(format!("attack step size must be >= 0, got {}", self.step_size)));
        }
        if self.step_size == 0.0 && self.epsilon > 0.0 && self.num_steps > 0 {
            return Err(Error::InvalidConfig("attack step size must be > 0 when epsilon > 0".into()));
        }
        Ok(())
    }
}

/// Untargeted attacks raise the loss of the true label; targeted attacks
/// lower the loss of the given target labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal<'a> {
    Untargeted,
    Targeted(&'a [usize]),
}

impl<'a> Goal<'a> {
    /// Builds a goal from a flag plus optional targets, rejecting a
    /// targeted request without labels.
    pub fn from_parts(targeted: bool, target_labels: Option<&'a [usize]>) -> Result<Self> {
        match (targeted, target_labels) {
            (false, _) => Ok(Goal::Untargeted),
            (true, Some(t)) => Ok(Goal::Targeted(t)),
            (true, None) => Err(Error::InvalidConfig("targeted attack needs target labels".into())),
        }
    }
}

/// Attack result with the configuration that produced it.
#[derive(Debug, Clone)]
pub struct Adversarial {
    pub images: ImageBatch,
    pub config: AttackConfig,
    pub targeted: bool,
}

fn l2_norm(v: &ArrayViewMut3<'_, f32>) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Largest `f32` not above `epsilon`, so clamped coordinates stay inside
/// the ball when measured in `f64`.
fn radius_f32(epsilon: f64) -> f32 {
    let e = epsilon as f32;
    if e as f64 > epsilon {
        e.next_down()
    } else {
        e
    }
}

fn project_image(mut d: ArrayViewMut3<'_, f32>, norm: Norm, epsilon: f64) {
    match norm {
        Norm::Linf => {
            let e = radius_f32(epsilon);
            d.mapv_inplace(|v| v.clamp(-e, e));
        }
        Norm::L2 => {
            let n = l2_norm(&d);
            if n <= epsilon {
                return;
            }
            let orig = d.to_owned();
            let mut scale = epsilon / n;
            // shrink until the rounded result is inside, so a second
            // projection is the identity
            loop {
                Zip::from(&mut d).and(&orig).for_each(|v, &o| *v = (o as f64 * scale) as f32);
                if l2_norm(&d) <= epsilon {
                    break;
                }
                scale *= 1.0 - 1e-7;
            }
        }
    }
}

/// Per-image projection onto the `norm` ball of radius `epsilon`, in place.
pub fn project_in_place(delta: &mut Array4<f32>, norm: Norm, epsilon: f64) {
    for d in delta.axis_iter_mut(Axis(0)) {
        project_image(d, norm, epsilon);
    }
}

/// Per-image projection onto the `norm` ball of radius `epsilon`.
/// l∞ clamps every coordinate; l2 rescales images whose norm exceeds
/// `epsilon`. Idempotent.
pub fn project(delta: &Array4<f32>, norm: Norm, epsilon: f64) -> Array4<f32> {
    let mut out = delta.clone();
    project_in_place(&mut out, norm, epsilon);
    out
}

/// Per-image distance `||a - b||` under `norm`, in `f64`.
pub fn distances(a: &Array4<f32>, b: &Array4<f32>, norm: Norm) -> Vec<f64> {
    a.axis_iter(Axis(0))
        .zip(b.axis_iter(Axis(0)))
        .map(|(x, y)| {
            let diffs = x.iter().zip(y.iter()).map(|(&p, &q)| p as f64 - q as f64);
            match norm {
                Norm::Linf => diffs.fold(0.0f64, |m, d| m.max(d.abs())),
                Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            }
        })
        .collect()
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clamp(x + epsilon * sign(grad), 0, 1)` with `sign(0) = 0`.
pub fn fgsm(model: &Classifier, batch: &ImageBatch, labels: &[usize], epsilon: f64) -> Result<ImageBatch> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidConfig(format!("attack epsilon must be >= 0, got {epsilon}")));
    }
    let (_, grad) = model.loss_and_input_gradient(batch.view(), labels)?;
    let e = radius_f32(epsilon);
    let mut out = batch.pixels().clone();
    Zip::from(&mut out).and(&grad).for_each(|x, &g| *x = (*x + e * sign(g)).clamp(0.0, 1.0));
    ImageBatch::new(out)
}

/// Unit step direction: sign for l∞, per-image normalized gradient for l2.
fn direction(grad: &Array4<f32>, norm: Norm) -> Array4<f32> {
    match norm {
        Norm::Linf => grad.mapv(sign),
        Norm::L2 => {
            let mut out = grad.clone();
            for mut g in out.axis_iter_mut(Axis(0)) {
                let n = l2_norm(&g);
                if n > 0.0 {
                    g.mapv_inplace(|v| (v as f64 / n) as f32);
                } else {
                    g.fill(0.0);
                }
            }
            out
        }
    }
}

fn random_start<G: Rng + ?Sized>(shape: (usize, usize, usize, usize), norm: Norm, epsilon: f64, rng: &mut G) -> Array4<f32> {
    match norm {
        Norm::Linf => Array4::from_shape_simple_fn(shape, || rng.gen_range(-1.0f64..=1.0) as f32 * epsilon as f32),
        Norm::L2 => {
            let (n, c, h, w) = shape;
            let dim = (c * h * w) as f64;
            let mut out = Array4::<f32>::zeros(shape);
            for i in 0..n {
                let g: Vec<f64> = (0..c * h * w).map(|_| StandardNormal.sample(rng)).collect();
                let len = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radius = epsilon * rng.gen::<f64>().powf(1.0 / dim);
                let scale = if len > 0.0 { radius / len } else { 0.0 };
                for (dst, v) in out.index_axis_mut(Axis(0), i).iter_mut().zip(g) {
                    *dst = (v * scale) as f32;
                }
            }
            out
        }
    }
}

/// Projected gradient descent from `batch` under `config`.
///
/// `rng` is only drawn from when `config.random_start` is set.
pub fn pgd<G: Rng + ?Sized>(
    model: &Classifier,
    batch: &ImageBatch,
    labels: &[usize],
    config: &AttackConfig,
    goal: Goal<'_>,
    rng: &mut G,
) -> Result<Adversarial> {
    config.validate()?;
    let x0 = batch.pixels();
    let n = x0.dim().0;
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let (loss_labels, ascend) = match goal {
        Goal::Untargeted => (labels, true),
        Goal::Targeted(t) => {
            if t.len() != n {
                return Err(Error::LengthMismatch { images: n, labels: t.len() });
            }
            (t, false)
        }
    };
    let mut delta = if config.random_start {
        random_start(x0.dim(), config.norm, config.epsilon, rng)
    } else {
        Array4::zeros(x0.dim())
    };
    let mut x = x0.clone();
    let settle = |delta: &mut Array4<f32>, x: &mut Array4<f32>| {
        project_in_place(delta, config.norm, config.epsilon);
        Zip::from(&mut *x).and(x0).and(&mut *delta).for_each(|xv, &o, d| {
            *xv = (o + *d).clamp(0.0, 1.0);
            *d = *xv - o;
        });
    };
    if config.random_start {
        settle(&mut delta, &mut x);
    }
    let alpha = if ascend { config.step_size as f32 } else { -(config.step_size as f32) };
    for _ in 0..config.num_steps {
        let (_, grad) = model.loss_and_input_gradient(x.view(), loss_labels)?;
        let dir = direction(&grad, config.norm);
        Zip::from(&mut delta).and(&dir).for_each(|d, &g| *d += alpha * g);
        settle(&mut delta, &mut x);
    }
    Ok(Adversarial {
        images: ImageBatch::new(x)?,
        config: *config,
        targeted: !ascend,
    })
}

/// Untargeted PGD with [`AttackConfig::large_eps`].
pub fn large_eps_untargeted(model: &Classifier, batch: &ImageBatch, labels: &[usize], norm: Norm) -> Result<Adversarial> {
    let config = AttackConfig::large_eps(norm);
    // no random start, so the generator is never consulted
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    pgd(model, batch, labels, &config, Goal::Untargeted, &mut rng)
}

#[cfg(test)]
mod tests {
    use ndarray::Array4;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::{build, ArchitectureId, ArchitectureSpec};

    fn tiny_model(seed: u64) -> Classifier {
        let spec = ArchitectureSpec::new(ArchitectureId::MnistCnn, 10, (1, 8, 8)).with_widths(vec![3, 4, 16]);
        build(&spec, seed).unwrap()
    }

    fn tiny_rgb_model(seed: u64) -> Classifier {
        let spec = ArchitectureSpec::new(ArchitectureId::CamBackbone, 3, (3, 8, 8)).with_widths(vec![4, 4, 4, 4]);
        build(&spec, seed).unwrap()
    }

    fn random_batch(n: usize, shape: (usize, usize, usize), rng: &mut ChaCha8Rng) -> ImageBatch {
        ImageBatch::new(Array4::from_shape_simple_fn((n, shape.0, shape.1, shape.2), || rng.gen_range(0.0f32..=1.0))).unwrap()
    }

    #[test]
    fn linf_projection_clamps() {
        let d = Array4::from_shape_vec((1, 1, 1, 3), vec![0.2f32, -0.3, 0.05]).unwrap();
        let p = project(&d, Norm::Linf, 0.1);
        let v = p.as_slice().unwrap();
        // 0.1 itself is not representable; the radius rounds toward zero
        assert!((v[0] as f64 - 0.1).abs() < 1e-7 && v[0] as f64 <= 0.1);
        assert_eq!(v[1], -v[0]);
        assert_eq!(v[2], 0.05);
    }

    #[test]
    fn l2_projection_rescales() {
        let d = Array4::from_shape_vec((1, 1, 1, 2), vec![2.4f32, 3.2]).unwrap();
        let p = project(&d, Norm::L2, 2.0);
        let v = p.as_slice().unwrap();
        assert!((v[0] as f64 - 1.2).abs() < 1e-6 && (v[1] as f64 - 1.6).abs() < 1e-6);
        assert!(distances(&p, &Array4::zeros((1, 1, 1, 2)), Norm::L2)[0] <= 2.0);
    }

    #[test]
    fn projection_inside_ball_is_identity() {
        let d = Array4::from_shape_vec((2, 1, 1, 2), vec![0.01f32, -0.02, 0.03, 0.0]).unwrap();
        assert_eq!(project(&d, Norm::Linf, 0.1), d);
        assert_eq!(project(&d, Norm::L2, 0.1), d);
    }

    #[test]
    fn zero_epsilon_projects_to_zero() {
        let d = Array4::from_elem((1, 1, 2, 2), 0.3f32);
        assert!(project(&d, Norm::Linf, 0.0).iter().all(|&v| v == 0.0));
        assert!(project(&d, Norm::L2, 0.0).iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(seed in any::<u64>(), eps in 0.0f64..3.0, l2 in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let norm = if l2 { Norm::L2 } else { Norm::Linf };
            let d = Array4::from_shape_simple_fn((3, 2, 4, 4), || rng.gen_range(-2.0f32..2.0));
            let once = project(&d, norm, eps);
            prop_assert_eq!(project(&once, norm, eps), once.clone());
            let zero = Array4::zeros(d.dim());
            for v in distances(&once, &zero, norm) {
                prop_assert!(v <= eps);
            }
        }
    }

    #[test]
    fn fgsm_zero_epsilon_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = tiny_model(0);
        let b = random_batch(3, (1, 8, 8), &mut rng);
        assert_eq!(fgsm(&model, &b, &[0, 1, 2], 0.0).unwrap(), b);
    }

    #[test]
    fn fgsm_steps_follow_gradient_sign() {
        // gradient (+, -, 0) at 0.5 with eps 0.1 gives (0.6, 0.4, 0.5)
        let x = ndarray::arr1(&[0.5f32, 0.5, 0.5]);
        let g = ndarray::arr1(&[0.3f32, -2.0, 0.0]);
        let out: Vec<f32> = x.iter().zip(g.iter()).map(|(&x, &g)| (x + 0.1 * sign(g)).clamp(0.0, 1.0)).collect();
        assert_eq!(out, vec![0.6, 0.4, 0.5]);
        // and the full attack moves dead pixels nowhere
        let mut model = tiny_model(1);
        model.zero_first_layer();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_batch(2, (1, 8, 8), &mut rng);
        assert_eq!(fgsm(&model, &b, &[3, 4], 0.1).unwrap(), b);
    }

    #[test]
    fn fgsm_equals_single_step_pgd() {
        let model = tiny_model(4);
        let rgb = tiny_rgb_model(5);
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eps = rng.gen_range(0.001..0.5);
            let (m, shape, k) = if seed % 2 == 0 { (&model, (1, 8, 8), 10) } else { (&rgb, (3, 8, 8), 3) };
            let b = random_batch(4, shape, &mut rng);
            let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..k)).collect();
            let f = fgsm(m, &b, &labels, eps).unwrap();
            let p = pgd(m, &b, &labels, &AttackConfig::fgsm(eps), Goal::Untargeted, &mut rng).unwrap();
            assert_eq!(f, p.images, "seed {seed}");
        }
    }

    #[test]
    fn zero_steps_without_random_start_is_identity() {
        let model = tiny_model(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_batch(3, (1, 8, 8), &mut rng);
        for norm in [Norm::Linf, Norm::L2] {
            let out = pgd(&model, &b, &[1, 2, 3], &AttackConfig::identity(norm, 0.3), Goal::Untargeted, &mut rng).unwrap();
            assert_eq!(out.images, b);
        }
    }

    #[test]
    fn zero_steps_with_random_start_stays_in_ball() {
        let model = tiny_model(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_batch(3, (1, 8, 8), &mut rng);
        let mut cfg = AttackConfig::identity(Norm::L2, 0.5);
        cfg.random_start = true;
        let out = pgd(&model, &b, &[1, 2, 3], &cfg, Goal::Untargeted, &mut rng).unwrap();
        assert_ne!(out.images, b);
        for d in distances(out.images.pixels(), b.pixels(), Norm::L2) {
            assert!(d <= 0.5 + 1e-6);
        }
    }

    #[test]
    fn targeted_requires_labels() {
        assert!(Goal::from_parts(true, None).is_err());
        assert_eq!(Goal::from_parts(false, None).unwrap(), Goal::Untargeted);
        let t = [1usize];
        assert_eq!(Goal::from_parts(true, Some(&t)).unwrap(), Goal::Targeted(&t));
    }

    #[test]
    fn invalid_configs_rejected() {
        let model = tiny_model(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = random_batch(1, (1, 8, 8), &mut rng);
        let mut cfg = AttackConfig::evaluation(Norm::Linf, 0.1);
        cfg.epsilon = -0.1;
        assert!(matches!(pgd(&model, &b, &[0], &cfg, Goal::Untargeted, &mut rng), Err(Error::InvalidConfig(_))));
        assert!(fgsm(&model, &b, &[0], f64::NAN).is_err());
        let wrong = random_batch(1, (1, 4, 4), &mut rng);
        assert!(matches!(
            pgd(&model, &wrong, &[0], &AttackConfig::fgsm(0.1), Goal::Untargeted, &mut rng),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn random_attacks_respect_constraints() {
        let model = tiny_model(6);
        let rgb = tiny_rgb_model(7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for run in 0..200 {
            let norm = if run % 2 == 0 { Norm::Linf } else { Norm::L2 };
            let eps = rng.gen_range(0.0..if norm == Norm::L2 { 3.0 } else { 0.5 });
            let cfg = AttackConfig {
                norm,
                epsilon: eps,
                step_size: rng.gen_range(0.01..1.0),
                num_steps: rng.gen_range(0..6),
                random_start: rng.gen_bool(0.5),
                loss: AttackLoss::CrossEntropy,
            };
            let (m, shape, k) = if run % 3 == 0 { (&rgb, (3, 8, 8), 3) } else { (&model, (1, 8, 8), 10) };
            let b = random_batch(2, shape, &mut rng);
            let labels = [rng.gen_range(0..k), rng.gen_range(0..k)];
            let targets = [rng.gen_range(0..k), rng.gen_range(0..k)];
            let goal = if rng.gen_bool(0.3) { Goal::Targeted(&targets) } else { Goal::Untargeted };
            let out = pgd(m, &b, &labels, &cfg, goal, &mut rng).unwrap();
            for d in distances(out.images.pixels(), b.pixels(), norm) {
                assert!(d <= eps + 1e-6, "run {run}: {d} > {eps}");
            }
            assert!(out.images.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn linf_distance_grows_with_epsilon() {
        let model = tiny_model(8);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = ImageBatch::new(Array4::from_shape_simple_fn((4, 1, 8, 8), || rng.gen_range(0.3f32..0.7))).unwrap();
        let labels = [0, 1, 2, 3];
        for steps in [1usize, 10] {
            let mut prev = vec![0.0; 4];
            for k in 1..=12 {
                let eps = k as f64 * 0.02;
                let mut cfg = AttackConfig::with_default_step(Norm::Linf, eps, steps);
                cfg.random_start = false;
                if steps == 1 {
                    cfg.step_size = eps;
                }
                let out = pgd(&model, &b, &labels, &cfg, Goal::Untargeted, &mut rng).unwrap();
                let d = distances(out.images.pixels(), b.pixels(), Norm::Linf);
                for (now, before) in d.iter().zip(&prev) {
                    assert!(*now + 1e-6 >= *before && *now <= eps + 1e-6);
                }
                prev = d;
            }
        }
    }

    #[test]
    fn untargeted_attack_raises_loss_and_targeted_lowers_it() {
        let model = tiny_model(9);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = random_batch(8, (1, 8, 8), &mut rng);
        let labels = [0, 1, 2, 3, 4, 5, 6, 7];
        let (clean, _) = model.loss_and_input_gradient(b.view(), &labels).unwrap();
        let mut cfg = AttackConfig::evaluation(Norm::Linf, 0.1);
        cfg.random_start = false;
        let adv = pgd(&model, &b, &labels, &cfg, Goal::Untargeted, &mut rng).unwrap();
        let (up, _) = model.loss_and_input_gradient(adv.images.view(), &labels).unwrap();
        assert!(up > clean);
        let targets = [9; 8];
        let (before, _) = model.loss_and_input_gradient(b.view(), &targets).unwrap();
        let adv = pgd(&model, &b, &labels, &cfg, Goal::Targeted(&targets), &mut rng).unwrap();
        assert!(adv.targeted);
        let (after, _) = model.loss_and_input_gradient(adv.images.view(), &targets).unwrap();
        assert!(after < before);
    }

    #[test]
    fn large_eps_preset_and_constraints() {
        let cfg = AttackConfig::large_eps(Norm::L2);
        assert_eq!((cfg.epsilon, cfg.step_size, cfg.num_steps, cfg.random_start), (32.0 / 255.0, 1.6 / 255.0, 50, false));
        let model = tiny_model(10);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let b = random_batch(2, (1, 8, 8), &mut rng);
        for norm in [Norm::Linf, Norm::L2] {
            let out = large_eps_untargeted(&model, &b, &[1, 2], norm).unwrap();
            assert_eq!(out.config, AttackConfig::large_eps(norm));
            let d = distances(out.images.pixels(), b.pixels(), Norm::Linf);
            assert!(d.iter().all(|&v| v <= 32.0 / 255.0 + 1e-6));
        }
        let mut flat = tiny_model(10);
        flat.zero_output_layer();
        for norm in [Norm::Linf, Norm::L2] {
            assert_eq!(large_eps_untargeted(&flat, &b, &[1, 2], norm).unwrap().images, b);
        }
    }

    #[test]
    fn config_serde_round_trip() {
        let cfg = AttackConfig::training(0.3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"norm\":\"linf\""));
        let back: AttackConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<AttackConfig>(&text.replace("\"loss\"", "\"lose\"")).is_err());
        assert!((cfg.step_size - 2.5 * 0.3 / 7.0).abs() < 1e-15);
    }
}
