//! Datasets, image batches and domain adaptation.
//!
//! Every pixel handled by the toolkit lives on the `[0, 1]` scale, so attack
//! radii such as `8/255` mean the same thing for every loader.

mod adapt;
mod cifar;
pub mod container;
mod cub;
mod mnist;
mod optdigits;
mod svhn;
mod synth;
mod usps;

use std::fmt;
use std::path::Path;

use ndarray::{s, Array4, ArrayView4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adapt::{adapt_domain, resize_bilinear, resize_plane, DomainAdapter};
pub use cub::{load_cub_annotations, load_cub_images, CubAnnotation};
pub use synth::{synth_fixture, SynthFixture, SynthKind};

/// Rank-4 `(batch, channels, height, width)` tensor with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pixels: Array4<f32>,
}

impl ImageBatch {
    pub fn new(pixels: Array4<f32>) -> Result<Self> {
        let (n, c, h, w) = pixels.dim();
        if n == 0 {
            return Err(Error::InvalidBatch("batch must hold at least one image".into()));
        }
        if c != 1 && c != 3 {
            return Err(Error::InvalidBatch(format!("{c} channels, expected 1 or 3")));
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidBatch("zero spatial extent".into()));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidBatch(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    /// Clamps into `[0, 1]` instead of rejecting out-of-range values.
    pub fn from_clamped(mut pixels: Array4<f32>) -> Result<Self> {
        pixels.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self::new(pixels)
    }

    pub fn pixels(&self) -> &Array4<f32> {
        &self.pixels
    }

    pub fn view(&self) -> ArrayView4<'_, f32> {
        self.pixels.view()
    }

    pub fn into_inner(self) -> Array4<f32> {
        self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(channels, height, width)` of each image.
    pub fn image_shape(&self) -> (usize, usize, usize) {
        let (_, c, h, w) = self.pixels.dim();
        (c, h, w)
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.pixels.select(Axis(0), indices))
    }

    /// `(min, max)` over every pixel.
    pub fn min_max(&self) -> (f32, f32) {
        self.pixels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Name, class count and per-image shape of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub num_classes: usize,
    /// `(channels, height, width)`
    pub image_shape: (usize, usize, usize),
}

impl DatasetSpec {
    pub fn new(name: impl Into<String>, num_classes: usize, image_shape: (usize, usize, usize)) -> Self {
        Self {
            name: name.into(),
            num_classes,
            image_shape,
        }
    }

    pub fn mnist() -> Self {
        Self::new("mnist", 10, (1, 28, 28))
    }

    pub fn usps() -> Self {
        Self::new("usps", 10, (1, 16, 16))
    }

    pub fn svhn() -> Self {
        Self::new("svhn", 10, (3, 32, 32))
    }

    pub fn cifar10() -> Self {
        Self::new("cifar10", 10, (3, 32, 32))
    }

    /// UCI optical handwritten digits, 8x8 counts rescaled to `[0, 1]`.
    pub fn optdigits() -> Self {
        Self::new("optdigits", 10, (1, 8, 8))
    }

    pub fn restricted_imagenet() -> Self {
        Self::new("restricted_imagenet", 9, (3, 224, 224))
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "mnist" => Ok(Self::mnist()),
            "usps" => Ok(Self::usps()),
            "svhn" => Ok(Self::svhn()),
            "cifar10" | "cifar-10" => Ok(Self::cifar10()),
            "optdigits" => Ok(Self::optdigits()),
            "restricted_imagenet" => Ok(Self::restricted_imagenet()),
            other => Err(Error::InvalidConfig(format!("unknown dataset `{other}`"))),
        }
    }

    pub fn pixels_per_image(&self) -> usize {
        let (c, h, w) = self.image_shape;
        c * h * w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

/// Images with one integer label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Array4<f32>,
    labels: Vec<usize>,
    pub split: Split,
    pub spec: DatasetSpec,
}

impl LabeledDataset {
    pub fn new(images: Array4<f32>, labels: Vec<usize>, split: Split, spec: DatasetSpec) -> Result<Self> {
        let n = images.len_of(Axis(0));
        if n != labels.len() {
            return Err(Error::LengthMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        let (_, c, h, w) = images.dim();
        if (c, h, w) != spec.image_shape {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", spec.image_shape),
                actual: format!("{:?}", (c, h, w)),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= spec.num_classes) {
            return Err(Error::InvalidLabel {
                label,
                num_classes: spec.num_classes,
            });
        }
        if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidBatch(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            images,
            labels,
            split,
            spec,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &Array4<f32> {
        &self.images
    }

    /// Gathers the given rows into a batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(ImageBatch, Vec<usize>)> {
        let images = self.images.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((ImageBatch::new(images)?, labels))
    }

    /// Contiguous batches in dataset order. Each call owns its own cursor.
    pub fn batches(&self, batch_size: usize) -> Batches<'_> {
        Batches {
            dataset: self,
            batch_size: batch_size.max(1),
            cursor: 0,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
            spec: self.spec.clone(),
        }
    }

    /// First `n` samples (or all of them when `n >= len`).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images.slice(s![..n, .., .., ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
            spec: self.spec.clone(),
        }
    }

    /// Replaces the images, e.g. with a domain-adapted copy.
    pub fn with_images(&self, images: Array4<f32>, spec: DatasetSpec) -> Result<Self> {
        Self::new(images, self.labels.clone(), self.split, spec)
    }
}

pub struct Batches<'a> {
    dataset: &'a LabeledDataset,
    batch_size: usize,
    cursor: usize,
}

impl<'a> Iterator for Batches<'a> {
    type Item = (ImageBatch, &'a [usize]);

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.dataset.len();
        if self.cursor >= n {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(n);
        let images = self.dataset.images.slice(s![self.cursor..end, .., .., ..]).to_owned();
        let labels = &self.dataset.labels[self.cursor..end];
        self.cursor = end;
        Some((ImageBatch { pixels: images }, labels))
    }
}

/// Loads `spec` from `root`, the directory holding the dataset's standard
/// distribution files. A converted cache (see [`container`]) in the same
/// directory takes precedence.
pub fn load_dataset(spec: &DatasetSpec, split: Split, root: impl AsRef<Path>) -> Result<LabeledDataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    if let Some(cached) = container::load_cached(spec, split, root)? {
        return Ok(cached);
    }
    let (images, labels) = match spec.name.as_str() {
        "mnist" => mnist::load(root, split)?,
        "usps" => usps::load(root, split)?,
        "svhn" => svhn::load(root, split)?,
        "cifar10" => cifar::load(root, split)?,
        "optdigits" => optdigits::load(root, split)?,
        "restricted_imagenet" => {
            return Err(Error::Unsupported(
                "restricted_imagenet: expected <root>/{train,val}/<class>/*.JPEG grouped into 9 \
                 super-classes; ingestion is not implemented at this scale"
                    .into(),
            ))
        }
        other => return Err(Error::InvalidConfig(format!("no loader for dataset `{other}`"))),
    };
    if images.dim().1 != spec.image_shape.0
        || images.dim().2 != spec.image_shape.1
        || images.dim().3 != spec.image_shape.2
    {
        return Err(Error::corrupt(
            root,
            format!("images have shape {:?}, expected {:?}", images.dim(), spec.image_shape),
        ));
    }
    LabeledDataset::new(images, labels, split, spec.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn batch_rejects_out_of_range_pixels() {
        let mut px = Array4::<f32>::zeros((1, 1, 2, 2));
        px[[0, 0, 1, 1]] = 1.5;
        assert!(matches!(ImageBatch::new(px), Err(Error::InvalidBatch(_))));
    }

    #[test]
    fn batch_rejects_two_channels_and_empty() {
        assert!(ImageBatch::new(Array4::zeros((1, 2, 2, 2))).is_err());
        assert!(ImageBatch::new(Array4::zeros((0, 1, 2, 2))).is_err());
    }

    #[test]
    fn dataset_validates_labels() {
        let spec = DatasetSpec::new("toy", 2, (1, 2, 2));
        let err = LabeledDataset::new(Array4::zeros((2, 1, 2, 2)), vec![0, 2], Split::Train, spec.clone());
        assert!(matches!(err, Err(Error::InvalidLabel { label: 2, .. })));
        let err = LabeledDataset::new(Array4::zeros((2, 1, 2, 2)), vec![0], Split::Train, spec);
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn batches_cover_dataset_once() {
        let spec = DatasetSpec::new("toy", 3, (1, 1, 1));
        let images = Array4::from_shape_fn((7, 1, 1, 1), |(i, ..)| i as f32 / 10.0);
        let ds = LabeledDataset::new(images, vec![0, 1, 2, 0, 1, 2, 0], Split::Train, spec).unwrap();
        let sizes: Vec<usize> = ds.batches(3).map(|(b, l)| {
            assert_eq!(b.len(), l.len());
            l.len()
        }).collect();
        assert_eq!(sizes, vec![3, 3, 1]);
        // independent cursors
        let mut a = ds.batches(4);
        let mut b = ds.batches(4);
        a.next();
        assert_eq!(b.next().unwrap().1, &[0, 1, 2, 0]);
    }

    #[test]
    fn empty_root_is_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(&DatasetSpec::mnist(), Split::Train, dir.path()).unwrap_err();
        match err {
            Error::MissingFile(p) => assert!(p.to_string_lossy().contains("train-images-idx3-ubyte")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
