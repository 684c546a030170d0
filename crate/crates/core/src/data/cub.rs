//! CUB-200-2011 annotations: `images.txt` (`id path`),
//! `image_class_labels.txt` (`id class`, 1-based) and `bounding_boxes.txt`
//! (`id x y width height`). Image sizes are read from the image headers
//! under `images/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use ndarray::Array4;
use serde::{Deserialize, Serialize};

use super::{DatasetSpec, LabeledDataset, Split};

use crate::error::{Error, Result};
use crate::wsol::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubAnnotation {
    pub image_id: String,
    /// Relative to `<root>/images`.
    pub image_path: PathBuf,
    /// 0-based.
    pub class_label: usize,
    /// Corner form, pixel coordinates of the original image.
    pub gt_box: BoundingBox,
    /// `(width, height)` of the original image.
    pub image_size: (u32, u32),
}

fn read_table(path: &Path, columns: usize) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Parse(format!("cannot read {}: {e}", path.display()))
    })?;
    let mut rows = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != columns + 1 {
            return Err(Error::Parse(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                lineno + 1,
                columns + 1,
                fields.len()
            )));
        }
        rows.insert(fields[0].to_string(), fields[1..].iter().map(|s| s.to_string()).collect());
    }
    Ok(rows)
}

pub fn load_cub_annotations(root: impl AsRef<Path>) -> Result<Vec<CubAnnotation>> {
    let root = root.as_ref();
    let images = read_table(&root.join("images.txt"), 1)?;
    let classes = read_table(&root.join("image_class_labels.txt"), 1)?;
    let boxes = read_table(&root.join("bounding_boxes.txt"), 4)?;
    if images.len() != classes.len() || images.len() != boxes.len() {
        return Err(Error::Parse(format!(
            "inconsistent record counts: {} images, {} class labels, {} boxes",
            images.len(),
            classes.len(),
            boxes.len()
        )));
    }

    let mut ordered: Vec<(&String, &Vec<String>)> = images.iter().collect();
    // numeric ids sort numerically, anything else lexically
    ordered.sort_by(|a, b| match (a.0.parse::<u64>(), b.0.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.0.cmp(b.0),
    });

    let mut out = Vec::with_capacity(ordered.len());
    for (id, path_field) in ordered {
        let class = classes
            .get(id)
            .ok_or_else(|| Error::Parse(format!("image {id} has no class label")))?;
        let class: usize = class[0]
            .parse()
            .map_err(|_| Error::Parse(format!("image {id}: bad class `{}`", class[0])))?;
        if class == 0 {
            return Err(Error::Parse(format!("image {id}: class labels are 1-based")));
        }
        let raw = boxes
            .get(id)
            .ok_or_else(|| Error::Parse(format!("image {id} has no bounding box")))?;
        let nums: Vec<f64> = raw
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("image {id}: bad bounding box")))?;
        let image_path = PathBuf::from(&path_field[0]);
        let full = root.join("images").join(&image_path);
        let (width, height) = image::image_dimensions(&full).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&full, io),
            other => Error::corrupt(&full, other.to_string()),
        })?;
        let (x, y, w, h) = (nums[0], nums[1], nums[2], nums[3]);
        let gt_box = BoundingBox::new(
            x.max(0.0),
            y.max(0.0),
            (x + w).min(width as f64),
            (y + h).min(height as f64),
        )
        .map_err(|_| Error::Parse(format!("image {id}: degenerate box {x} {y} {w} {h}")))?;
        out.push(CubAnnotation {
            image_id: id.clone(),
            image_path,
            class_label: class - 1,
            gt_box,
            image_size: (width, height),
        });
    }
    Ok(out)
}

/// Loads the annotated images resized to `side`×`side` RGB, with boxes
/// rescaled to the resized frame.
pub fn load_cub_images(
    root: impl AsRef<Path>,
    annotations: &[CubAnnotation],
    side: usize,
    num_classes: usize,
) -> Result<(LabeledDataset, Vec<CubAnnotation>)> {
    let root = root.as_ref();
    if side == 0 {
        return Err(Error::InvalidConfig("image side must be positive".into()));
    }
    let mut pixels = Vec::with_capacity(annotations.len() * 3 * side * side);
    let mut labels = Vec::with_capacity(annotations.len());
    let mut scaled = Vec::with_capacity(annotations.len());
    for a in annotations {
        let full = root.join("images").join(&a.image_path);
        let img = image::open(&full).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&full, io),
            other => Error::corrupt(&full, other.to_string()),
        })?;
        let img = img.resize_exact(side as u32, side as u32, FilterType::Triangle).to_rgb8();
        for c in 0..3 {
            pixels.extend(img.pixels().map(|p| p.0[c] as f32 / 255.0));
        }
        let (w, h) = a.image_size;
        let (sx, sy) = (side as f64 / w as f64, side as f64 / h as f64);
        let b = &a.gt_box;
        scaled.push(CubAnnotation {
            gt_box: BoundingBox::new(b.xmin * sx, b.ymin * sy, b.xmax * sx, b.ymax * sy)?,
            image_size: (side as u32, side as u32),
            ..a.clone()
        });
        labels.push(a.class_label);
    }
    let images = Array4::from_shape_vec((labels.len(), 3, side, side), pixels).expect("sized above");
    let dataset = LabeledDataset::new(images, labels, Split::Validation, DatasetSpec::new("cub", num_classes, (3, side, side)))?;
    Ok((dataset, scaled))
}
