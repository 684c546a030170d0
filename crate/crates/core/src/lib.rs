//! Adversarial training and analysis toolkit.
//!
//! Trains small image classifiers with adversarial or noisy inputs, attacks
//! them, and inspects their input gradients and class activation maps.

pub mod attacks;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod interpretability;
pub mod models;
pub mod provenance;
pub mod real;
pub mod training;
pub mod wsol;

pub use attacks::{AttackConfig, Norm};
pub use data::{DatasetSpec, ImageBatch, LabeledDataset, Split};
pub use error::{Error, Result};
pub use evaluation::{RobustnessReport, ZeroShotReport};
pub use interpretability::ImageGrid;
pub use models::{ArchitectureId, ArchitectureSpec, Classifier, Mode};
pub use real::Real;
pub use training::{TrainConfig, TrainMode, TrainReport};
pub use wsol::{BoundingBox, Heatmap, LocalizationReport};
