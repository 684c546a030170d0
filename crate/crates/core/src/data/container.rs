//! Binary tensor container used to cache converted datasets.
//!
//! Layout (all little-endian):
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `b"PGD1"`                         |
//! | 4      | 1         | dtype code (see [`DType`])              |
//! | 5      | 1         | rank `r`                                |
//! | 6      | 4·r       | `u32` dims, outermost first             |
//! | 6+4r   | rest      | row-major values                        |
//!
//! A dataset is cached as two files in its root:
//! `<name>_<split>_images.pgd1` (f32, `N×C×H×W`) and
//! `<name>_<split>_labels.pgd1` (u32, `N`).

use std::path::{Path, PathBuf};

use ndarray::Array4;

use super::{DatasetSpec, LabeledDataset, Split};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PGD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    U8 = 1,
    U32 = 2,
    F32 = 3,
    F64 = 4,
}

impl DType {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::U8),
            2 => Some(DType::U32),
            3 => Some(DType::F32),
            4 => Some(DType::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U32 | DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Decoded container contents, values widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub dtype: DType,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn encode(dtype: DType, dims: &[usize], values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * dims.len() + values.len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.push(dtype as u8);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in values {
        match dtype {
            DType::U8 => out.push(v as u8),
            DType::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Container, String> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err("bad magic".into());
    }
    let dtype = DType::from_code(bytes[4]).ok_or_else(|| format!("unknown dtype code {}", bytes[4]))?;
    let rank = bytes[5] as usize;
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err("truncated header".into());
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() != count * dtype.width() {
        return Err(format!("body holds {} bytes, expected {}", body.len(), count * dtype.width()));
    }
    let values = match dtype {
        DType::U8 => body.iter().map(|&b| b as f64).collect(),
        DType::U32 => body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DType::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DType::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    };
    Ok(Container { dtype, dims, values })
}

fn cache_paths(spec: &DatasetSpec, split: Split, dir: &Path) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}_{}_images.pgd1", spec.name, split)),
        dir.join(format!("{}_{}_labels.pgd1", spec.name, split)),
    )
}

/// Writes the dataset cache files into `dir`, returning their paths.
pub fn write_cache(dataset: &LabeledDataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let (img_path, lab_path) = cache_paths(&dataset.spec, dataset.split, dir);
    let (n, c, h, w) = dataset.images().dim();
    let pixels: Vec<f64> = dataset.images().iter().map(|&v| v as f64).collect();
    std::fs::write(&img_path, encode(DType::F32, &[n, c, h, w], &pixels)).map_err(|e| Error::io(&img_path, e))?;
    let labels: Vec<f64> = dataset.labels().iter().map(|&l| l as f64).collect();
    std::fs::write(&lab_path, encode(DType::U32, &[n], &labels)).map_err(|e| Error::io(&lab_path, e))?;
    Ok((img_path, lab_path))
}

pub(super) fn load_cached(spec: &DatasetSpec, split: Split, dir: &Path) -> Result<Option<LabeledDataset>> {
    let (img_path, lab_path) = cache_paths(spec, split, dir);
    if !img_path.is_file() || !lab_path.is_file() {
        return Ok(None);
    }
    let read = |p: &Path| -> Result<Container> {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        decode(&bytes).map_err(|why| Error::corrupt(p, why))
    };
    let images = read(&img_path)?;
    let labels = read(&lab_path)?;
    if images.dims.len() != 4 || labels.dims.len() != 1 || images.dims[0] != labels.dims[0] {
        return Err(Error::corrupt(&img_path, "cache dims do not describe a labelled image set"));
    }
    let dims = (images.dims[0], images.dims[1], images.dims[2], images.dims[3]);
    let pixels = Array4::from_shape_vec(dims, images.values.iter().map(|&v| v as f32).collect())
        .map_err(|e| Error::corrupt(&img_path, e.to_string()))?;
    let labels = labels.values.iter().map(|&v| v as usize).collect();
    LabeledDataset::new(pixels, labels, split, spec.clone()).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_little_endian() {
        let bytes = encode(DType::U8, &[2, 3], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(&bytes[..4], b"PGD1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[3, 0, 0, 0]);
        assert_eq!(&bytes[14..], &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn truncated_body_rejected() {
        let bytes = encode(DType::F32, &[4], &[1.0; 4]);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"PGD2\x01\x00").is_err());
    }

    #[test]
    fn dataset_cache_round_trip() {
        let spec = DatasetSpec::new("toy", 3, (1, 2, 2));
        let images = Array4::from_shape_fn((3, 1, 2, 2), |(i, _, r, c)| (i + r + c) as f32 / 8.0);
        let ds = LabeledDataset::new(images, vec![2, 0, 1], Split::Validation, spec.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_cache(&ds, dir.path()).unwrap();
        let back = load_cached(&spec, Split::Validation, dir.path()).unwrap().unwrap();
        assert_eq!(back, ds);
        assert!(load_cached(&spec, Split::Train, dir.path()).unwrap().is_none());
    }

    proptest! {
        #[test]
        fn f32_round_trip(values in proptest::collection::vec(-1e6f32..1e6, 0..64)) {
            let wide: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let c = decode(&encode(DType::F32, &[values.len()], &wide)).unwrap();
            prop_assert_eq!(c.values, wide);
        }
    }
}
