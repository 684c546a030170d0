//! SVHN cropped digits (`train_32x32.mat` / `test_32x32.mat`, MATLAB v5).
//! `X` is `32x32x3xN` uint8 in column-major order, `y` holds labels with
//! `10` standing for digit 0.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use matfile::{MatFile, NumericData};
use ndarray::Array4;

use super::Split;
use crate::error::{Error, Result};

pub(super) fn load(root: &Path, split: Split) -> Result<(Array4<f32>, Vec<usize>)> {
    let path = root.join(match split {
        Split::Train => "train_32x32.mat",
        Split::Validation => "test_32x32.mat",
    });
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mat = MatFile::parse(BufReader::new(file)).map_err(|e| Error::corrupt(&path, e.to_string()))?;
    let x = mat.find_by_name("X").ok_or_else(|| Error::corrupt(&path, "no `X` array"))?;
    let y = mat.find_by_name("y").ok_or_else(|| Error::corrupt(&path, "no `y` array"))?;
    let size = x.size();
    if size.len() != 4 || size[0] != 32 || size[1] != 32 || size[2] != 3 {
        return Err(Error::corrupt(&path, format!("X has size {size:?}, expected 32x32x3xN")));
    }
    let n = size[3];
    let raw = match x.data() {
        NumericData::UInt8 { real, .. } => real,
        _ => return Err(Error::corrupt(&path, "X is not uint8")),
    };
    let raw_labels = numeric_as_f64(y.data());
    if raw_labels.len() != n {
        return Err(Error::corrupt(&path, format!("{} labels for {n} images", raw_labels.len())));
    }
    let labels = raw_labels
        .iter()
        .map(|&l| match l.round() as i64 {
            10 => Ok(0),
            d @ 0..=9 => Ok(d as usize),
            other => Err(Error::corrupt(&path, format!("label {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let pixels = Array4::from_shape_fn((n, 3, 32, 32), |(i, c, r, col)| {
        raw[r + 32 * col + 1024 * c + 3072 * i] as f32 / 255.0
    });
    Ok((pixels, labels))
}

fn numeric_as_f64(data: &NumericData) -> Vec<f64> {
    match data {
        NumericData::Int8 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt8 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Int16 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt16 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Int32 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt32 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Int64 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::UInt64 { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Single { real, .. } => real.iter().map(|&v| v as f64).collect(),
        NumericData::Double { real, .. } => real.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_mat_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load(dir.path(), Split::Validation), Err(Error::MissingFile(_))));
    }

    #[test]
    fn garbage_mat_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("train_32x32.mat"), b"not a mat file").unwrap();
        assert!(matches!(load(dir.path(), Split::Train), Err(Error::CorruptData { .. })));
    }
}
