//! CIFAR-10 binary version: 1 label byte then 3072 bytes (R, G, B planes,
//! row-major 32x32) per record.

use std::path::{Path, PathBuf};

use ndarray::Array4;

use super::Split;
use crate::error::{Error, Result};

const RECORD: usize = 1 + 3 * 32 * 32;

pub(super) fn load(root: &Path, split: Split) -> Result<(Array4<f32>, Vec<usize>)> {
    let dir = if root.join("cifar-10-batches-bin").is_dir() {
        root.join("cifar-10-batches-bin")
    } else {
        root.to_path_buf()
    };
    let files: Vec<PathBuf> = match split {
        Split::Train => (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
        Split::Validation => vec![dir.join("test_batch.bin")],
    };
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in files {
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() % RECORD != 0 {
            return Err(Error::corrupt(&path, format!("{} bytes is not a whole number of records", bytes.len())));
        }
        for record in bytes.chunks_exact(RECORD) {
            if record[0] > 9 {
                return Err(Error::corrupt(&path, format!("label {}", record[0])));
            }
            labels.push(record[0] as usize);
            pixels.extend(record[1..].iter().map(|&b| b as f32 / 255.0));
        }
    }
    let pixels = Array4::from_shape_vec((labels.len(), 3, 32, 32), pixels)
        .map_err(|e| Error::corrupt(root, e.to_string()))?;
    Ok((pixels, labels))
}
