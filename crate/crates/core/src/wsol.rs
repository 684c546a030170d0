//! Weakly supervised localization from class activation maps.
//!
//! A heatmap is the class-weighted sum of the final feature maps, upsampled
//! to image resolution and rescaled to `[0, 1]`. Thresholding it and keeping
//! the largest 4-connected component gives a box, scored by IoU against the
//! annotation.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use ndarray::{s, Array2, ArrayView3, ArrayView4, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{resize_plane, CubAnnotation, LabeledDataset};
use crate::error::{Error, Result};
use crate::models::{argmax_rows, CamParts, Classifier};
use crate::real::Real;

/// Default binarization level as a fraction of the heatmap maximum.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

/// Axis-aligned box in continuous pixel coordinates. Pixel `(r, c)` covers
/// `[c, c+1) x [r, r+1)`, so area is plain `width * height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BoundingBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let finite = [xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite());
        if !finite || xmin >= xmax || ymin >= ymax {
            return Err(Error::InvalidBox(format!("({xmin}, {ymin}, {xmax}, {ymax})")));
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    /// Box covering a whole `width x height` image.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            xmin: 0.0,
            ymin: 0.0,
            xmax: width.max(1) as f64,
            ymax: height.max(1) as f64,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Intersection over union of two boxes, in `[0, 1]` and symmetric.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let h = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Non-negative map at image resolution with maximum 1, or all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    values: Array2<f64>,
}

impl Heatmap {
    /// Validates an already normalized map.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidBatch("empty heatmap".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidBatch("heatmap values must be finite and non-negative".into()));
        }
        Ok(Self { values })
    }

    /// Upsamples a raw activation map to `(height, width)` and min-max
    /// rescales it. A constant map becomes all zeros.
    pub fn from_raw(raw: &Array2<f64>, height: usize, width: usize) -> Self {
        let (lo, hi) = min_max(raw.iter().copied());
        if !(hi > lo) {
            return Self {
                values: Array2::zeros((height, width)),
            };
        }
        let up = resize_plane(raw.view(), height, width);
        let (lo, hi) = min_max(up.iter().copied());
        let span = hi - lo;
        Self {
            values: up.mapv(|v| (v - lo) / span),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// `(height, width)`
    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// `m(y, x) = sum_k w[class, k] * f_k(y, x)` for image `index`, in `f64`.
pub fn raw_cam<R: Real>(parts: &CamParts<R>, index: usize, class_id: usize) -> Result<Array2<f64>> {
    let (n, k, h, w) = parts.features.dim();
    if index >= n {
        return Err(Error::InvalidBatch(format!("image {index} out of {n}")));
    }
    if class_id >= parts.weights.nrows() {
        return Err(Error::InvalidLabel {
            label: class_id,
            num_classes: parts.weights.nrows(),
        });
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for kk in 0..k {
        let wk = parts.weights[[class_id, kk]].to_f64_lossy();
        let fmap = parts.features.slice(s![index, kk, .., ..]);
        out.zip_mut_with(&fmap, |o, &f| *o += wk * f.to_f64_lossy());
    }
    Ok(out)
}

/// Heatmaps for a batch of images, one class per image.
pub fn cam_batch<R: Real>(model: &Classifier<R>, images: ArrayView4<'_, R>, classes: &[usize]) -> Result<Vec<Heatmap>> {
    let (n, _, h, w) = images.dim();
    if classes.len() != n {
        return Err(Error::LengthMismatch {
            images: n,
            labels: classes.len(),
        });
    }
    let parts = model.feature_maps_and_head(images)?;
    classes
        .iter()
        .enumerate()
        .map(|(i, &c)| Ok(Heatmap::from_raw(&raw_cam(&parts, i, c)?, h, w)))
        .collect()
}

/// Class activation heatmap of one `(C, H, W)` image for `class_id`.
pub fn cam<R: Real>(model: &Classifier<R>, image: ArrayView3<'_, R>, class_id: usize) -> Result<Heatmap> {
    let batch = image.insert_axis(Axis(0));
    Ok(cam_batch(model, batch, &[class_id])?.remove(0))
}

/// Tight box around the largest 4-connected component of pixels strictly
/// above `threshold_frac * max`. Equal-sized components resolve to the one
/// reached first in row-major order. With no pixel above threshold the
/// full image box is returned.
pub fn heatmap_to_bbox(heatmap: &Heatmap, threshold_frac: f64) -> Result<BoundingBox> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold fraction {threshold_frac} not in (0, 1)")));
    }
    let v = heatmap.values();
    let (h, w) = v.dim();
    let cut = threshold_frac * heatmap.max();
    let mask = v.mapv(|x| x > cut);
    let mut seen = Array2::from_elem((h, w), false);
    // (size, rmin, cmin, rmax, cmax)
    let mut best: Option<(usize, usize, usize, usize, usize)> = None;
    let mut queue = VecDeque::new();
    for r0 in 0..h {
        for c0 in 0..w {
            if !mask[[r0, c0]] || seen[[r0, c0]] {
                continue;
            }
            seen[[r0, c0]] = true;
            queue.push_back((r0, c0));
            let mut comp = (0, r0, c0, r0, c0);
            while let Some((r, c)) = queue.pop_front() {
                comp.0 += 1;
                comp.1 = comp.1.min(r);
                comp.2 = comp.2.min(c);
                comp.3 = comp.3.max(r);
                comp.4 = comp.4.max(c);
                let neighbours = [
                    (r.wrapping_sub(1), c),
                    (r + 1, c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                ];
                for (nr, nc) in neighbours {
                    if nr < h && nc < w && mask[[nr, nc]] && !seen[[nr, nc]] {
                        seen[[nr, nc]] = true;
                        queue.push_back((nr, nc));
                    }
                }
            }
            if best.map_or(true, |b| comp.0 > b.0) {
                best = Some(comp);
            }
        }
    }
    Ok(match best {
        Some((_, rmin, cmin, rmax, cmax)) => BoundingBox {
            xmin: cmin as f64,
            ymin: rmin as f64,
            xmax: (cmax + 1) as f64,
            ymax: (rmax + 1) as f64,
        },
        None => BoundingBox::full(w, h),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    /// Percentage of images whose box has IoU > 0.5 with the annotation.
    pub gt_known_loc: f64,
    /// Percentage with the correct class and IoU > 0.5.
    pub top1_loc: f64,
    /// Percentage with the correct class.
    pub top1_acc: f64,
    pub count: usize,
}

/// Scores `(predicted_class, predicted_box)` pairs against aligned annotations.
pub fn localization_metrics(predictions: &[(usize, BoundingBox)], annotations: &[CubAnnotation]) -> Result<LocalizationReport> {
    if predictions.len() != annotations.len() {
        return Err(Error::CountMismatch {
            what: "predictions vs annotations".into(),
            expected: annotations.len(),
            actual: predictions.len(),
        });
    }
    if annotations.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut loc, mut both, mut correct) = (0usize, 0usize, 0usize);
    for ((class, pred), ann) in predictions.iter().zip(annotations) {
        let hit = iou(pred, &ann.gt_box) > 0.5;
        let right = *class == ann.class_label;
        loc += hit as usize;
        correct += right as usize;
        both += (hit && right) as usize;
    }
    let n = annotations.len();
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    Ok(LocalizationReport {
        gt_known_loc: pct(loc),
        top1_loc: pct(both),
        top1_acc: pct(correct),
        count: n,
    })
}

/// One line of the predictions interchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub predicted_class: usize,
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl PredictionRecord {
    pub fn new(image_id: impl Into<String>, predicted_class: usize, b: BoundingBox) -> Self {
        Self {
            image_id: image_id.into(),
            predicted_class,
            xmin: b.xmin,
            ymin: b.ymin,
            xmax: b.xmax,
            ymax: b.ymax,
        }
    }

    pub fn bbox(&self) -> Result<BoundingBox> {
        BoundingBox::new(self.xmin, self.ymin, self.xmax, self.ymax)
    }
}

/// Writes records as CSV, preceded by `# key: value` provenance lines.
pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord], provenance: &[(&str, String)]) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in records {
        wtr.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    let body = wtr.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    let mut text: String = provenance.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect();
    text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads records written by [`write_predictions`]; `#` lines are skipped.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{}: {other:?}", path.display())),
        }
    } else {
        Error::Parse(format!("{}: {e}", path.display()))
    }
}

/// Scores an interchange file, matching records to annotations by id.
pub fn score_predictions(records: &[PredictionRecord], annotations: &[CubAnnotation]) -> Result<LocalizationReport> {
    let by_id: BTreeMap<&str, &PredictionRecord> = records.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let preds = annotations
        .iter()
        .map(|a| {
            let r = by_id
                .get(a.image_id.as_str())
                .ok_or_else(|| Error::Parse(format!("no prediction for image {}", a.image_id)))?;
            Ok((r.predicted_class, r.bbox()?))
        })
        .collect::<Result<Vec<_>>>()?;
    localization_metrics(&preds, annotations)
}

/// Predicted class, its heatmap and the extracted box for one image.
#[derive(Debug, Clone)]
pub struct Localization {
    pub predicted_class: usize,
    pub heatmap: Heatmap,
    pub bbox: BoundingBox,
}

/// Classifies every image and localizes the predicted class.
pub fn localize_dataset<R: Real>(model: &Classifier<R>, dataset: &LabeledDataset, threshold_frac: f64, batch_size: usize) -> Result<Vec<Localization>> {
    let mut out = Vec::with_capacity(dataset.len());
    for (batch, _) in dataset.batches(batch_size.max(1)) {
        let x = batch.pixels().mapv(|v| R::lit(v as f64));
        let parts = model.feature_maps_and_head(x.view())?;
        let pooled = parts.features.mean_axis(Axis(3)).and_then(|m| m.mean_axis(Axis(2))).expect("non-empty features");
        let logits = pooled.dot(&parts.weights.t()) + &parts.bias;
        let (_, _, h, w) = x.dim();
        for (i, class) in argmax_rows(&logits).into_iter().enumerate() {
            let heatmap = Heatmap::from_raw(&raw_cam(&parts, i, class)?, h, w);
            let bbox = heatmap_to_bbox(&heatmap, threshold_frac)?;
            out.push(Localization {
                predicted_class: class,
                heatmap,
                bbox,
            });
        }
    }
    Ok(out)
}
