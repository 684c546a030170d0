//! TOML experiment configs. Every section rejects unknown keys.

use std::path::{Path, PathBuf};

use pagkit::attacks::AttackConfig;
use pagkit::data::{load_dataset, SynthKind};
use pagkit::models::build;
use pagkit::provenance::canonical_digest;
use pagkit::training::{FamilyConfig, OptimizerConfig, OptimizerKind, Schedule, TrainConfig};
use pagkit::{ArchitectureId, ArchitectureSpec, Classifier, DatasetSpec, LabeledDataset, Norm, Split, TrainMode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the directory that holds one folder per dataset.
pub const DATA_ENV: &str = "PAGKIT_DATA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dataset: String,
    /// Defaults to `$PAGKIT_DATA/<dataset>`, then `data/<dataset>`.
    #[serde(default)]
    pub root: Option<PathBuf>,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub validation_limit: Option<usize>,
}

impl DataSection {
    pub fn spec(&self) -> Result<DatasetSpec, CliError> {
        DatasetSpec::by_name(&self.dataset).map_err(CliError::config)
    }

    pub fn root(&self) -> PathBuf {
        if let Some(root) = &self.root {
            return root.clone();
        }
        match std::env::var_os(DATA_ENV) {
            Some(base) => Path::new(&base).join(&self.dataset),
            None => Path::new("data").join(&self.dataset),
        }
    }

    pub fn load(&self, split: Split) -> Result<LabeledDataset, CliError> {
        let ds = load_dataset(&self.spec()?, split, self.root()).map_err(CliError::runtime)?;
        let limit = match split {
            Split::Train => self.train_limit,
            Split::Validation => self.validation_limit,
        };
        Ok(match limit {
            Some(n) => ds.take(n),
            None => ds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: ArchitectureId,
    #[serde(default)]
    pub widths: Option<Vec<usize>>,
}

impl ModelSection {
    pub fn spec(&self, data: &DatasetSpec) -> ArchitectureSpec {
        let spec = ArchitectureSpec::for_dataset(self.architecture, data);
        match &self.widths {
            Some(w) => spec.with_widths(w.clone()),
            None => spec,
        }
    }

    pub fn build(&self, data: &DatasetSpec, seed: u64) -> Result<Classifier, CliError> {
        build(&self.spec(data), seed).map_err(CliError::config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// Divide the rate by 10 at 1/2 and 3/4 of the run.
    #[default]
    StepDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub mode: TrainMode,
    #[serde(default)]
    pub epsilon_or_sigma: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub epsilon_warmup_steps: usize,
    #[serde(default)]
    pub inner_attack: Option<AttackConfig>,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_weight_decay() -> f64 {
    5e-4
}

fn default_log_every() -> usize {
    10
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        let schedule = match self.schedule {
            ScheduleKind::Constant => Schedule::Constant,
            ScheduleKind::StepDecay => Schedule::StepDecay {
                milestones: vec![self.total_steps / 2, self.total_steps * 3 / 4],
                gamma: 0.1,
            },
        };
        let inner_attack = match (self.mode, self.inner_attack) {
            (TrainMode::Adversarial, None) => Some(AttackConfig::training(self.epsilon_or_sigma)),
            (_, a) => a,
        };
        TrainConfig {
            mode: self.mode,
            epsilon_or_sigma: self.epsilon_or_sigma,
            inner_attack,
            batch_size: self.batch_size,
            total_steps: self.total_steps,
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Sgd,
                learning_rate: self.learning_rate,
                momentum: self.momentum,
                weight_decay: self.weight_decay,
                schedule,
            },
            seed,
            log_every: self.log_every,
            epsilon_warmup_steps: self.epsilon_warmup_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub strengths: Vec<f64>,
    #[serde(default = "default_true")]
    pub include_natural: bool,
    #[serde(default = "default_scale")]
    pub label_scale: f64,
}

fn default_true() -> bool {
    true
}

fn default_scale() -> f64 {
    1.0
}

impl FamilySection {
    pub fn to_config(&self, base: TrainConfig) -> FamilyConfig {
        FamilyConfig {
            base,
            strengths: self.strengths.clone(),
            include_natural: self.include_natural,
            label_scale: self.label_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    #[serde(default)]
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    #[serde(default)]
    pub family: Option<FamilySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSection {
    /// Defaults to `<out>/checkpoints`.
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_eval_steps")]
    pub steps: usize,
    #[serde(default = "default_norm")]
    pub norm: Norm,
    /// Column headers show ε multiplied by this, e.g. 255.
    #[serde(default = "default_scale")]
    pub label_scale: f64,
}

fn default_eval_steps() -> usize {
    pagkit::attacks::EVALUATION_STEPS
}

fn default_norm() -> Norm {
    Norm::Linf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessFile {
    #[serde(default)]
    pub seed: u64,
    pub data: DataSection,
    pub eval: RobustnessSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSection {
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroShotFile {
    #[serde(default)]
    pub seed: u64,
    pub source: DataSection,
    pub target: DataSection,
    #[serde(default = "default_checkpoints")]
    pub eval: CheckpointSection,
}

fn default_checkpoints() -> CheckpointSection {
    CheckpointSection { checkpoints: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualizeSection {
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
    /// Rows in the gradient grid and the galleries.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_norms")]
    pub norms: Vec<Norm>,
    /// Validation images used for the gradient alignment score.
    #[serde(default = "default_alignment")]
    pub alignment_images: usize,
}

fn default_count() -> usize {
    8
}

fn default_norms() -> Vec<Norm> {
    vec![Norm::Linf, Norm::L2]
}

fn default_alignment() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualizeFile {
    #[serde(default)]
    pub seed: u64,
    pub data: DataSection,
    pub visualize: VisualizeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSection {
    #[serde(default = "default_fixture_classes")]
    pub classes: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
    #[serde(default = "default_side")]
    pub side: usize,
}

fn default_fixture_classes() -> usize {
    3
}

fn default_side() -> usize {
    32
}

impl FixtureSection {
    pub fn kind(&self, samples: usize) -> SynthKind {
        SynthKind::Localization {
            num_classes: self.classes,
            samples,
            side: self.side,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubSection {
    pub root: PathBuf,
    #[serde(default = "default_cub_side")]
    pub side: usize,
    #[serde(default = "default_cub_classes")]
    pub num_classes: usize,
    /// A pre-trained checkpoint; CUB training is not run from here.
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub limit: Option<usize>,
}

fn default_cub_side() -> usize {
    224
}

fn default_cub_classes() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WsolSection {
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    /// Images drawn with heatmap and boxes.
    #[serde(default = "default_count")]
    pub annotate: usize,
}

fn default_thresholds() -> Vec<f64> {
    vec![pagkit::wsol::DEFAULT_THRESHOLD]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WsolFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fixture: Option<FixtureSection>,
    #[serde(default)]
    pub cub: Option<CubSection>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default = "default_wsol")]
    pub wsol: WsolSection,
}

fn default_wsol() -> WsolSection {
    WsolSection {
        thresholds: default_thresholds(),
        annotate: default_count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertFile {
    pub data: DataSection,
}

/// Seed plumbing shared by every config file.
pub trait Seeded {
    fn seed_mut(&mut self) -> Option<&mut u64>;
}

macro_rules! seeded {
    ($($t:ty),*) => {
        $(impl Seeded for $t {
            fn seed_mut(&mut self) -> Option<&mut u64> {
                Some(&mut self.seed)
            }
        })*
    };
}

seeded!(TrainFile, RobustnessFile, ZeroShotFile, VisualizeFile, WsolFile);

impl Seeded for ConvertFile {
    fn seed_mut(&mut self) -> Option<&mut u64> {
        None
    }
}

/// A parsed config with the command-line seed applied, and its digest.
pub struct Loaded<T> {
    pub config: T,
    pub digest: String,
    pub seed: u64,
}

pub fn parse<T: DeserializeOwned + Serialize + Seeded>(text: &str, seed: Option<u64>) -> Result<Loaded<T>, CliError> {
    let mut config: T = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if let (Some(s), Some(slot)) = (seed, config.seed_mut()) {
        *slot = s;
    }
    let seed = config.seed_mut().map(|s| *s).unwrap_or(0);
    let digest = canonical_digest(&config);
    Ok(Loaded { config, digest, seed })
}

pub fn load<T: DeserializeOwned + Serialize + Seeded>(path: &Path, seed: Option<u64>) -> Result<Loaded<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRAIN: &str = r#"
seed = 3
[data]
dataset = "mnist"
train_limit = 100
[model]
architecture = "mnist_cnn"
widths = [4, 8, 16]
[train]
mode = "adversarial"
epsilon_or_sigma = 0.1
batch_size = 8
total_steps = 10
learning_rate = 0.05
[family]
strengths = [0.05, 0.1]
"#;

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TRAIN.replace("train_limit", "trian_limit");
        assert!(matches!(parse::<TrainFile>(&bad, None), Err(CliError::Config(_))));
        let bad = format!("{TRAIN}\n[extra]\nx = 1\n");
        assert!(parse::<TrainFile>(&bad, None).is_err());
    }

    #[test]
    fn digest_ignores_key_order_but_not_values() {
        let reordered = TRAIN.replace("batch_size = 8\ntotal_steps = 10", "total_steps = 10\nbatch_size = 8");
        assert_ne!(reordered, TRAIN);
        let a = parse::<TrainFile>(TRAIN, None).unwrap();
        let b = parse::<TrainFile>(&reordered, None).unwrap();
        assert_eq!(a.digest, b.digest);
        let c = parse::<TrainFile>(&TRAIN.replace("0.05, 0.1", "0.05, 0.2"), None).unwrap();
        assert_ne!(a.digest, c.digest);
    }

    #[test]
    fn command_line_seed_wins_and_changes_digest() {
        let a = parse::<TrainFile>(TRAIN, None).unwrap();
        let b = parse::<TrainFile>(TRAIN, Some(9)).unwrap();
        assert_eq!((a.seed, b.seed), (3, 9));
        assert_ne!(a.digest, b.digest);
    }

    #[test]
    fn train_section_defaults() {
        let f = parse::<TrainFile>(TRAIN, None).unwrap().config;
        let c = f.train.to_config(3);
        assert_eq!(c.optimizer.momentum, 0.9);
        assert_eq!(c.optimizer.weight_decay, 5e-4);
        assert_eq!(c.attack(), AttackConfig::training(0.1));
        assert!(c.validate().is_ok());
        assert_eq!(f.family.unwrap().strengths, vec![0.05, 0.1]);
    }
}
