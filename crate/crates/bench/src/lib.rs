//! Inputs shared by the benchmarks.

use ndarray::{Array2, Array4};
use pagkit::models::build;
use pagkit::{ArchitectureId, ArchitectureSpec, Classifier, DatasetSpec, ImageBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The desk-scale MNIST network used for training runs.
pub fn mnist_model() -> Classifier {
    let spec = ArchitectureSpec::for_dataset(ArchitectureId::MnistCnn, &DatasetSpec::mnist()).with_widths(vec![8, 16, 64]);
    build(&spec, 0).expect("valid spec")
}

pub fn cam_model(side: usize) -> Classifier {
    build(&ArchitectureSpec::new(ArchitectureId::CamBackbone, 3, (3, side, side)), 0).expect("valid spec")
}

pub fn uniform_batch(n: usize, shape: (usize, usize, usize), seed: u64) -> ImageBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBatch::new(Array4::from_shape_fn((n, shape.0, shape.1, shape.2), |_| rng.gen::<f32>())).expect("values in [0,1]")
}

pub fn labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % classes).collect()
}

/// A smooth blob plus noise, the shape CAM heatmaps usually take.
pub fn blob_heatmap(side: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = side as f64 / 2.0;
    Array2::from_shape_fn((side, side), |(y, x)| {
        let d2 = (y as f64 - c).powi(2) + (x as f64 - c * 0.8).powi(2);
        (-d2 / (2.0 * (side as f64 / 6.0).powi(2))).exp() + 0.05 * rng.gen::<f64>()
    })
}
