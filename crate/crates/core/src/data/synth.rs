//! Deterministic synthetic datasets for fast tests and the localization fixture.

use std::path::PathBuf;

use ndarray::{Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CubAnnotation, DatasetSpec, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::wsol::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Each class is a fixed blob pattern plus per-sample noise and gain.
    Classification {
        num_classes: usize,
        samples: usize,
        image_shape: (usize, usize, usize),
    },
    /// RGB noise images carrying one bright rectangular patch. The patch's
    /// colour channel is the class and its extent is the ground-truth box.
    Localization {
        num_classes: usize,
        samples: usize,
        side: usize,
    },
}

#[derive(Debug, Clone)]
pub struct SynthFixture {
    pub dataset: LabeledDataset,
    /// Empty for the classification kind.
    pub annotations: Vec<CubAnnotation>,
}

/// Balanced labels (`i % num_classes`) in a seeded shuffle.
fn balanced_labels(rng: &mut ChaCha8Rng, samples: usize, num_classes: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..samples).map(|i| i % num_classes).collect();
    labels.shuffle(rng);
    labels
}

pub fn synth_fixture(kind: SynthKind, seed: u64) -> Result<SynthFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::Classification {
            num_classes,
            samples,
            image_shape,
        } => {
            if num_classes == 0 || samples == 0 {
                return Err(Error::InvalidConfig("fixture needs classes and samples".into()));
            }
            let (c, h, w) = image_shape;
            let prototypes: Vec<Array3<f32>> = (0..num_classes)
                .map(|_| {
                    let blobs: Vec<(f32, f32, f32, usize)> = (0..3)
                        .map(|_| {
                            (
                                rng.gen_range(0.0..h as f32),
                                rng.gen_range(0.0..w as f32),
                                rng.gen_range(1.0..(h.min(w) as f32 / 4.0).max(1.5)),
                                rng.gen_range(0..c),
                            )
                        })
                        .collect();
                    Array3::from_shape_fn((c, h, w), |(ch, r, col)| {
                        blobs
                            .iter()
                            .filter(|b| b.3 == ch || c == 1)
                            .map(|&(br, bc, s, _)| {
                                let d2 = (r as f32 - br).powi(2) + (col as f32 - bc).powi(2);
                                (-d2 / (2.0 * s * s)).exp()
                            })
                            .sum::<f32>()
                            .min(1.0)
                    })
                })
                .collect();
            let labels = balanced_labels(&mut rng, samples, num_classes);
            let mut images = Array4::<f32>::zeros((samples, c, h, w));
            for (mut img, &label) in images.axis_iter_mut(Axis(0)).zip(&labels) {
                let gain = rng.gen_range(0.7f32..1.0);
                for (dst, &p) in img.iter_mut().zip(prototypes[label].iter()) {
                    *dst = (p * gain + rng.gen_range(-0.15f32..0.15)).clamp(0.0, 1.0);
                }
            }
            let spec = DatasetSpec::new("synth_classification", num_classes, image_shape);
            Ok(SynthFixture {
                dataset: LabeledDataset::new(images, labels, Split::Train, spec)?,
                annotations: Vec::new(),
            })
        }
        SynthKind::Localization {
            num_classes,
            samples,
            side,
        } => {
            if num_classes == 0 || num_classes > 3 || samples == 0 {
                return Err(Error::InvalidConfig("localization fixture supports 1..=3 classes".into()));
            }
            if side < 16 {
                return Err(Error::InvalidConfig("localization fixture needs side >= 16".into()));
            }
            let labels = balanced_labels(&mut rng, samples, num_classes);
            let mut images = Array4::<f32>::zeros((samples, 3, side, side));
            let mut annotations = Vec::with_capacity(samples);
            let (min_extent, max_extent) = (side / 2, side * 3 / 4);
            for (i, (mut img, &label)) in images.axis_iter_mut(Axis(0)).zip(&labels).enumerate() {
                img.mapv_inplace(|_| rng.gen_range(0.0f32..0.15));
                let pw = rng.gen_range(min_extent..=max_extent);
                let ph = rng.gen_range(min_extent..=max_extent);
                let x0 = rng.gen_range(0..=side - pw);
                let y0 = rng.gen_range(0..=side - ph);
                for ch in 0..3 {
                    for r in y0..y0 + ph {
                        for col in x0..x0 + pw {
                            img[[ch, r, col]] = if ch == label {
                                rng.gen_range(0.85f32..1.0)
                            } else {
                                rng.gen_range(0.0f32..0.1)
                            };
                        }
                    }
                }
                let gt_box = BoundingBox::new(x0 as f64, y0 as f64, (x0 + pw) as f64, (y0 + ph) as f64)?;
                annotations.push(CubAnnotation {
                    image_id: format!("synth-{i:05}"),
                    image_path: PathBuf::new(),
                    class_label: label,
                    gt_box,
                    image_size: (side as u32, side as u32),
                });
            }
            let spec = DatasetSpec::new("synth_localization", num_classes, (3, side, side));
            Ok(SynthFixture {
                dataset: LabeledDataset::new(images, labels, Split::Train, spec)?,
                annotations,
            })
        }
    }
}
