use ndarray::{Array2, Array4, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{DatasetSpec, ImageBatch, LabeledDataset};
use crate::error::{Error, Result};
use crate::real::Real;

/// Bilinear resize of one plane with half-pixel centres and edge clamping.
/// Outputs are convex combinations of inputs, so `[0, 1]` is preserved.
pub fn resize_bilinear(plane: ArrayView2<'_, f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    resize_plane(plane, out_h, out_w).mapv_into(|v| v.clamp(0.0, 1.0))
}

/// [`resize_bilinear`] without the final clamp, for any value range.
pub fn resize_plane<R: Real>(plane: ArrayView2<'_, R>, out_h: usize, out_w: usize) -> Array2<R> {
    let (in_h, in_w) = plane.dim();
    if (in_h, in_w) == (out_h, out_w) {
        return plane.to_owned();
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, R)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let lo = (src.floor() as usize).min(inp - 1);
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, R::lit((src - lo as f64).min(1.0)))
            })
            .collect()
    };
    let rows = axis(out_h, in_h);
    let cols = axis(out_w, in_w);
    let one = R::one();
    Array2::from_shape_fn((out_h, out_w), |(r, c)| {
        let (r0, r1, fr) = rows[r];
        let (c0, c1, fc) = cols[c];
        let top = plane[[r0, c0]] * (one - fc) + plane[[r0, c1]] * fc;
        let bottom = plane[[r1, c0]] * (one - fc) + plane[[r1, c1]] * fc;
        top * (one - fr) + bottom * fr
    })
}

/// Converts a batch shaped for `source` into the shape `target` expects:
/// grayscale is replicated to RGB, RGB is averaged to grayscale, and the
/// spatial size is changed by bilinear resizing.
pub fn adapt_domain(batch: &ImageBatch, source: &DatasetSpec, target: &DatasetSpec) -> Result<ImageBatch> {
    if batch.image_shape() != source.image_shape {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", source.image_shape),
            actual: format!("{:?}", batch.image_shape()),
        });
    }
    if source.image_shape == target.image_shape {
        return Ok(batch.clone());
    }
    let (src_c, _, _) = source.image_shape;
    let (dst_c, dst_h, dst_w) = target.image_shape;
    let px = batch.pixels();
    let n = batch.len();

    let converted: Array4<f32> = match (src_c, dst_c) {
        (a, b) if a == b => px.clone(),
        (1, 3) => {
            let (_, _, h, w) = px.dim();
            Array4::from_shape_fn((n, 3, h, w), |(i, _, r, c)| px[[i, 0, r, c]])
        }
        (3, 1) => {
            let (_, _, h, w) = px.dim();
            // f64 sum keeps (v + v + v) / 3 == v exact
            Array4::from_shape_fn((n, 1, h, w), |(i, _, r, c)| {
                let sum: f64 = (0..3).map(|ch| px[[i, ch, r, c]] as f64).sum();
                (sum / 3.0) as f32
            })
        }
        (from, to) => return Err(Error::UnsupportedConversion { from, to }),
    };

    let mut out = Array4::<f32>::zeros((n, dst_c, dst_h, dst_w));
    for (mut dst_img, src_img) in out.axis_iter_mut(Axis(0)).zip(converted.axis_iter(Axis(0))) {
        for (mut dst_plane, src_plane) in dst_img.axis_iter_mut(Axis(0)).zip(src_img.axis_iter(Axis(0))) {
            dst_plane.assign(&resize_bilinear(src_plane, dst_h, dst_w));
        }
    }
    ImageBatch::new(out)
}

/// A source-to-model domain conversion with a human-readable description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainAdapter {
    pub source: DatasetSpec,
    pub target: DatasetSpec,
}

impl DomainAdapter {
    pub fn new(source: DatasetSpec, target: DatasetSpec) -> Self {
        Self { source, target }
    }

    pub fn identity(spec: DatasetSpec) -> Self {
        Self::new(spec.clone(), spec)
    }

    pub fn describe(&self) -> String {
        let (sc, sh, sw) = self.source.image_shape;
        let (tc, th, tw) = self.target.image_shape;
        if (sc, sh, sw) == (tc, th, tw) {
            return format!("identity ({} as {})", self.source.name, self.target.name);
        }
        let mut parts = Vec::new();
        match (sc, tc) {
            (1, 3) => parts.push("grayscale replicated to 3 channels".to_string()),
            (3, 1) => parts.push("RGB averaged to grayscale".to_string()),
            _ => {}
        }
        if (sh, sw) != (th, tw) {
            parts.push(format!("bilinear resize {sh}x{sw} -> {th}x{tw}"));
        }
        format!("{} -> {}: {}", self.source.name, self.target.name, parts.join(", "))
    }

    /// Adapts a whole dataset, relabelling it with the target spec's shape
    /// while keeping the source name and labels.
    pub fn apply(&self, dataset: &LabeledDataset) -> Result<LabeledDataset> {
        let mut adapted = Vec::with_capacity(dataset.len());
        for (batch, _) in dataset.batches(512) {
            adapted.push(adapt_domain(&batch, &self.source, &self.target)?.into_inner());
        }
        let views: Vec<_> = adapted.iter().map(|a| a.view()).collect();
        let images = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::InvalidBatch(e.to_string()))?;
        let spec = DatasetSpec::new(
            self.source.name.clone(),
            self.source.num_classes,
            self.target.image_shape,
        );
        dataset.with_images(images, spec)
    }
}
