//! Standard, adversarial and gaussian-noise training with SGD.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array4, ArrayD, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attacks::{pgd, AttackConfig, Goal};
use crate::data::{ImageBatch, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::evaluation::accuracy;
use crate::models::{save, Classifier, Mode};
use crate::provenance::canonical_digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Clean batches.
    Standard,
    /// Every batch replaced by the inner attack's output.
    Adversarial,
    /// Per-pixel gaussian noise, then clamped to `[0, 1]`.
    Gaussian,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Standard => "standard",
            TrainMode::Adversarial => "adversarial",
            TrainMode::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    /// Multiply the rate by `gamma` at each milestone step.
    StepDecay { milestones: Vec<usize>, gamma: f64 },
}

impl Schedule {
    pub fn rate(&self, base: f64, step: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::StepDecay { milestones, gamma } => {
                let passed = milestones.iter().filter(|&&m| step >= m).count();
                base * gamma.powi(passed as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_weight_decay() -> f64 {
    5e-4
}

fn default_schedule() -> Schedule {
    Schedule::Constant
}

impl OptimizerConfig {
    /// Momentum 0.9, weight decay 5e-4, rate divided by 10 at half and
    /// three quarters of `total_steps`.
    pub fn sgd(learning_rate: f64, total_steps: usize) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            schedule: Schedule::StepDecay {
                milestones: vec![total_steps / 2, total_steps * 3 / 4],
                gamma: 0.1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Attack radius (adversarial) or noise standard deviation (gaussian).
    #[serde(default)]
    pub epsilon_or_sigma: f64,
    /// Inner maximization; defaults to 7-step l∞ PGD with random start.
    #[serde(default)]
    pub inner_attack: Option<AttackConfig>,
    pub batch_size: usize,
    pub total_steps: usize,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    /// Loss is recorded every `log_every` steps (and at the last step).
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Adversarial mode only: the inner attack radius (and step) ramps
    /// linearly from ε/W to ε over the first W steps. 0 disables the ramp.
    #[serde(default)]
    pub epsilon_warmup_steps: usize,
}

fn default_log_every() -> usize {
    1
}

impl TrainConfig {
    pub fn standard(batch_size: usize, total_steps: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            mode: TrainMode::Standard,
            epsilon_or_sigma: 0.0,
            inner_attack: None,
            batch_size,
            total_steps,
            optimizer: OptimizerConfig::sgd(learning_rate, total_steps),
            seed,
            log_every: 1,
            epsilon_warmup_steps: 0,
        }
    }

    pub fn with_warmup(mut self, steps: usize) -> Self {
        self.epsilon_warmup_steps = steps;
        self
    }

    /// Same schedule, adversarial at `epsilon` with the default inner attack.
    pub fn adversarial(mut self, epsilon: f64) -> Self {
        self.mode = TrainMode::Adversarial;
        self.epsilon_or_sigma = epsilon;
        self.inner_attack = Some(AttackConfig::training(epsilon));
        self
    }

    /// Same schedule, one FGSM step as the inner attack.
    pub fn adversarial_fgsm(mut self, epsilon: f64) -> Self {
        self.mode = TrainMode::Adversarial;
        self.epsilon_or_sigma = epsilon;
        self.inner_attack = Some(AttackConfig::fgsm(epsilon));
        self
    }

    /// Same schedule, gaussian noise with standard deviation `sigma`.
    pub fn gaussian(mut self, sigma: f64) -> Self {
        self.mode = TrainMode::Gaussian;
        self.epsilon_or_sigma = sigma;
        self.inner_attack = None;
        self
    }

    /// Inner attack actually used in adversarial mode.
    pub fn attack(&self) -> AttackConfig {
        self.inner_attack.unwrap_or_else(|| AttackConfig::training(self.epsilon_or_sigma))
    }

    /// Inner attack used at `step`, after the ε warmup.
    pub fn attack_at(&self, step: usize) -> AttackConfig {
        let attack = self.attack();
        let w = self.epsilon_warmup_steps;
        if w == 0 || step + 1 >= w {
            return attack;
        }
        let f = (step + 1) as f64 / w as f64;
        AttackConfig {
            epsilon: attack.epsilon * f,
            step_size: attack.step_size * f,
            ..attack
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        let o = &self.optimizer;
        if !(o.learning_rate.is_finite() && o.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", o.learning_rate));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", o.momentum));
        }
        if !(o.weight_decay.is_finite() && o.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", o.weight_decay));
        }
        if let Schedule::StepDecay { gamma, .. } = o.schedule {
            if !(gamma.is_finite() && gamma > 0.0) {
                return bad(format!("schedule gamma must be positive, got {gamma}"));
            }
        }
        if !(self.epsilon_or_sigma.is_finite() && self.epsilon_or_sigma >= 0.0) {
            return bad(format!("epsilon_or_sigma must be >= 0, got {}", self.epsilon_or_sigma));
        }
        match self.mode {
            TrainMode::Adversarial => {
                let attack = self.attack();
                attack.validate()?;
                if attack.epsilon != self.epsilon_or_sigma {
                    return bad(format!(
                        "inner attack epsilon {} differs from epsilon_or_sigma {}",
                        attack.epsilon, self.epsilon_or_sigma
                    ));
                }
            }
            TrainMode::Standard | TrainMode::Gaussian => {
                if self.inner_attack.is_some() {
                    return bad(format!("inner_attack only applies to adversarial mode, not {}", self.mode));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub log: Vec<LogRow>,
    /// Clean accuracy on the validation split, when one was given.
    pub final_validation_accuracy: Option<f64>,
    pub wall_clock_secs: f64,
    pub config_digest: String,
}

impl TrainReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.log.first().map(|r| r.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.log.last().map(|r| r.loss)
    }

    /// `step,loss,lr` CSV.
    /// Loss log as CSV, preceded by `# key: value` provenance lines.
    pub fn write_log_csv(&self, path: impl AsRef<Path>, provenance: &[(&str, String)]) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for (k, v) in provenance {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.log {
            w.serialize(row).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        }
        let body = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Observes training; every method defaults to doing nothing.
pub trait TrainHook {
    /// Called before each gradient step with the clean batch and the batch
    /// actually trained on.
    fn on_batch(&mut self, _step: usize, _clean: &ImageBatch, _trained_on: &ImageBatch, _labels: &[usize]) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, _row: &LogRow) {}
}

/// Hook that observes nothing.
pub struct NoHook;

impl TrainHook for NoHook {}

/// SGD with momentum and coupled weight decay:
/// `v = mu * v + (g + wd * p)`, `p -= lr * v`.
struct Sgd {
    velocity: Vec<ArrayD<f32>>,
    momentum: f32,
    weight_decay: f32,
}

impl Sgd {
    fn new(model: &Classifier, cfg: &OptimizerConfig) -> Self {
        Self {
            velocity: model.params().iter().map(|(_, p)| ArrayD::zeros(p.raw_dim())).collect(),
            momentum: cfg.momentum as f32,
            weight_decay: cfg.weight_decay as f32,
        }
    }

    fn step(&mut self, model: &mut Classifier, grads: &[ArrayD<f32>], lr: f32) {
        let (mu, wd) = (self.momentum, self.weight_decay);
        for (((_, mut p), g), v) in model.params_mut().into_iter().zip(grads).zip(&mut self.velocity) {
            Zip::from(&mut p).and(g).and(v).for_each(|p, &g, v| {
                *v = mu * *v + g + wd * *p;
                *p -= lr * *v;
            });
        }
    }
}

/// Endless stream of shuffled mini-batch index lists, reshuffled per epoch.
/// A trailing partial batch is dropped unless the dataset is smaller than
/// one batch.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, batch: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            batch: batch.min(n),
            rng,
        }
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let s = &self.order[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        s
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Trains `model` in place and returns it with a report. Without a hook,
/// see [`train`].
pub fn train_with_hook(
    mut model: Classifier,
    dataset: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    config: &TrainConfig,
    hook: &mut dyn TrainHook,
) -> Result<(Classifier, TrainReport)> {
    config.validate()?;
    if dataset.split != Split::Train {
        return Err(Error::InvalidConfig(format!("training needs the train split, got {}", dataset.split)));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.spec.num_classes != model.num_classes() {
        return Err(Error::ClassCountMismatch {
            dataset: dataset.spec.num_classes,
            model: model.num_classes(),
        });
    }
    let start = Instant::now();
    let digest = canonical_digest(config);
    let mut sampler = Sampler::new(dataset.len(), config.batch_size, stream(config.seed, 0));
    let mut attack_rng = stream(config.seed, 1);
    let mut noise_rng = stream(config.seed, 2);
    let mut opt = Sgd::new(&model, &config.optimizer);
    let mut log = Vec::new();

    for step in 0..config.total_steps {
        let indices = sampler.next().to_vec();
        let (clean, labels) = dataset.batch(&indices)?;
        let trained_on = match config.mode {
            TrainMode::Standard => clean.clone(),
            TrainMode::Adversarial => {
                model.set_mode(Mode::Eval);
                let adv = pgd(&model, &clean, &labels, &config.attack_at(step), Goal::Untargeted, &mut attack_rng)?;
                adv.images
            }
            TrainMode::Gaussian => {
                let sigma = config.epsilon_or_sigma;
                if sigma == 0.0 {
                    clean.clone()
                } else {
                    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                    let noise: Array4<f32> = Array4::from_shape_simple_fn(clean.pixels().dim(), || normal.sample(&mut noise_rng) as f32);
                    ImageBatch::from_clamped(clean.pixels() + &noise)?
                }
            }
        };
        hook.on_batch(step, &clean, &trained_on, &labels)?;
        model.set_mode(Mode::Train);
        let (loss, grads) = model.loss_and_param_gradients(trained_on.view(), &labels)?;
        let loss = loss as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        let lr = config.optimizer.schedule.rate(config.optimizer.learning_rate, step);
        opt.step(&mut model, &grads, lr as f32);
        if step % config.log_every == 0 || step + 1 == config.total_steps {
            let row = LogRow { step, loss, lr };
            hook.on_step(&row);
            log.push(row);
        }
    }
    model.set_mode(Mode::Eval);
    model.metadata.step_count += config.total_steps as u64;
    model.metadata.config_digest = digest.clone();
    model.metadata.train_mode = Some(config.mode.to_string());
    model.metadata.epsilon_or_sigma = (config.mode != TrainMode::Standard).then_some(config.epsilon_or_sigma);
    let final_validation_accuracy = validation.map(|v| accuracy(&model, v)).transpose()?;
    Ok((
        model,
        TrainReport {
            log,
            final_validation_accuracy,
            wall_clock_secs: start.elapsed().as_secs_f64(),
            config_digest: digest,
        },
    ))
}

/// Trains `model` on the train split of `dataset`.
pub fn train(model: Classifier, dataset: &LabeledDataset, validation: Option<&LabeledDataset>, config: &TrainConfig) -> Result<(Classifier, TrainReport)> {
    train_with_hook(model, dataset, validation, config, &mut NoHook)
}

/// Display name: `Natural`, `AT-<e>` or `N-<s>`, with the strength
/// multiplied by `label_scale` (e.g. 255 for `AT-8` meaning 8/255).
pub fn member_label(mode: TrainMode, strength: f64, label_scale: f64) -> String {
    let shown = (strength * label_scale * 1e4).round() / 1e4;
    match mode {
        TrainMode::Standard => "Natural".to_string(),
        TrainMode::Adversarial => format!("AT-{shown}"),
        TrainMode::Gaussian => format!("N-{shown}"),
    }
}

/// File-name friendly form of a member label.
pub fn label_slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    /// Adversarial or gaussian members share everything but their strength.
    pub base: TrainConfig,
    pub strengths: Vec<f64>,
    #[serde(default = "default_true")]
    pub include_natural: bool,
    #[serde(default = "default_label_scale")]
    pub label_scale: f64,
}

fn default_true() -> bool {
    true
}

fn default_label_scale() -> f64 {
    1.0
}

pub struct FamilyMember {
    pub label: String,
    /// `None` for the natural model.
    pub strength: Option<f64>,
    pub outcome: Result<(Classifier, TrainReport)>,
    pub checkpoint: Option<PathBuf>,
}

pub struct FamilyOutcome {
    pub members: Vec<FamilyMember>,
}

impl FamilyOutcome {
    pub fn failures(&self) -> usize {
        self.members.iter().filter(|m| m.outcome.is_err()).count()
    }

    pub fn is_partial(&self) -> bool {
        let f = self.failures();
        f > 0 && f < self.members.len()
    }

    pub fn models(&self) -> Vec<(&str, &Classifier)> {
        self.members
            .iter()
            .filter_map(|m| m.outcome.as_ref().ok().map(|(c, _)| (m.label.as_str(), c)))
            .collect()
    }
}

/// Trains the natural model (if requested) and one model per strength.
/// Every member starts from `init()`. A failing member is recorded and the
/// rest still run. With `checkpoint_dir`, each trained member is saved as
/// `<label slug>.pgck`.
pub fn train_family(
    dataset: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    family: &FamilyConfig,
    init: &dyn Fn() -> Result<Classifier>,
    checkpoint_dir: Option<&Path>,
) -> Result<FamilyOutcome> {
    if family.base.mode == TrainMode::Standard && !family.strengths.is_empty() {
        return Err(Error::InvalidConfig("family strengths need an adversarial or gaussian base mode".into()));
    }
    if family.strengths.is_empty() && !family.include_natural {
        return Err(Error::InvalidConfig("family has no members".into()));
    }
    let mut plans: Vec<(String, Option<f64>, TrainConfig)> = Vec::new();
    if family.include_natural {
        let mut natural = family.base.clone();
        natural.mode = TrainMode::Standard;
        natural.epsilon_or_sigma = 0.0;
        natural.inner_attack = None;
        plans.push(("Natural".into(), None, natural));
    }
    for &s in &family.strengths {
        let mut cfg = family.base.clone();
        cfg.epsilon_or_sigma = s;
        if cfg.mode == TrainMode::Adversarial {
            // keep the base attack's step-to-radius ratio
            cfg.inner_attack = Some(match family.base.inner_attack {
                Some(a) if a.epsilon > 0.0 => AttackConfig {
                    epsilon: s,
                    step_size: a.step_size * s / a.epsilon,
                    ..a
                },
                _ => AttackConfig::training(s),
            });
        }
        plans.push((member_label(cfg.mode, s, family.label_scale), Some(s), cfg));
    }
    let mut members = Vec::new();
    for (label, strength, cfg) in plans {
        let outcome = init().and_then(|m| train(m, dataset, validation, &cfg)).map(|(mut m, r)| {
            m.metadata.label = Some(label.clone());
            (m, r)
        });
        let mut checkpoint = None;
        let outcome = match (outcome, checkpoint_dir) {
            (Ok((m, r)), Some(dir)) => {
                let path = dir.join(format!("{}.pgck", label_slug(&label)));
                match save(&m, &path) {
                    Ok(()) => {
                        checkpoint = Some(path);
                        Ok((m, r))
                    }
                    Err(e) => Err(e),
                }
            }
            (other, _) => other,
        };
        members.push(FamilyMember {
            label,
            strength,
            outcome,
            checkpoint,
        });
    }
    Ok(FamilyOutcome { members })
}
