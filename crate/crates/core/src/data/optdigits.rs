//! UCI optical recognition of handwritten digits (`optdigits.tra` /
//! `optdigits.tes`): 64 block counts in `0..=16` followed by the class.

use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array4;

use super::mnist::{locate, open_maybe_gz};
use super::Split;
use crate::error::{Error, Result};

pub(super) fn load(root: &Path, split: Split) -> Result<(Array4<f32>, Vec<usize>)> {
    let name = match split {
        Split::Train => "optdigits.tra",
        Split::Validation => "optdigits.tes",
    };
    let path = locate(root, name)?;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(open_maybe_gz(&path)?).lines().enumerate() {
        let line = line.map_err(|e| Error::corrupt(&path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<u32> = line
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| Error::corrupt(&path, format!("line {}: non-integer field", lineno + 1)))?;
        if values.len() != 65 || values[..64].iter().any(|&v| v > 16) || values[64] > 9 {
            return Err(Error::corrupt(&path, format!("line {}: malformed record", lineno + 1)));
        }
        pixels.extend(values[..64].iter().map(|&v| v as f32 / 16.0));
        labels.push(values[64] as usize);
    }
    let pixels = Array4::from_shape_vec((labels.len(), 1, 8, 8), pixels).map_err(|e| Error::corrupt(&path, e.to_string()))?;
    Ok((pixels, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut row: Vec<String> = (0..64).map(|i| (i % 17).to_string()).collect();
        row.push("7".into());
        std::fs::write(dir.path().join("optdigits.tes"), row.join(",") + "\n").unwrap();
        let (px, labels) = load(dir.path(), Split::Validation).unwrap();
        assert_eq!(px.dim(), (1, 1, 8, 8));
        assert_eq!(labels, vec![7]);
        assert_eq!(px[[0, 0, 2, 0]], 16.0 / 16.0);
    }

    #[test]
    fn short_record_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("optdigits.tra"), "1,2,3\n").unwrap();
        assert!(load(dir.path(), Split::Train).is_err());
    }
}
