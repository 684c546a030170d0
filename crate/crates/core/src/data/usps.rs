//! USPS in the LIBSVM distribution (`usps` / `usps.t`): one `label idx:value`
//! line per image, labels `1..=10` for digits `0..=9`, values in `[-1, 1]`.

use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array4;

use super::mnist::{locate, open_maybe_gz};
use super::Split;
use crate::error::{Error, Result};

const SIDE: usize = 16;

pub(super) fn load(root: &Path, split: Split) -> Result<(Array4<f32>, Vec<usize>)> {
    let name = match split {
        Split::Train => "usps",
        Split::Validation => "usps.t",
    };
    let path = locate(root, name)?;
    let reader = BufReader::new(open_maybe_gz(&path)?);
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::corrupt(&path, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |why: &str| Error::corrupt(&path, format!("line {}: {why}", lineno + 1));
        let mut fields = line.split_whitespace();
        let label: f64 = fields
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing label"))?;
        let label = label.round() as i64;
        if !(1..=10).contains(&label) {
            return Err(bad("label outside 1..=10"));
        }
        // omitted features are zero in LIBSVM sparse format
        let mut image = [0.5f32; SIDE * SIDE];
        for field in fields {
            let (idx, val) = field.split_once(':').ok_or_else(|| bad("malformed feature"))?;
            let idx: usize = idx.parse().map_err(|_| bad("bad feature index"))?;
            let val: f32 = val.parse().map_err(|_| bad("bad feature value"))?;
            if idx == 0 || idx > SIDE * SIDE {
                return Err(bad("feature index out of range"));
            }
            image[idx - 1] = ((val + 1.0) / 2.0).clamp(0.0, 1.0);
        }
        pixels.extend_from_slice(&image);
        labels.push((label - 1) as usize);
    }
    let n = labels.len();
    let pixels = Array4::from_shape_vec((n, 1, SIDE, SIDE), pixels).map_err(|e| Error::corrupt(&path, e.to_string()))?;
    Ok((pixels, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_libsvm_lines() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::new();
        text.push_str("1 1:-1 2:1 256:0\n");
        text.push_str("10 3:0.5\n");
        std::fs::write(dir.path().join("usps.t"), text).unwrap();
        let (px, labels) = load(dir.path(), Split::Validation).unwrap();
        assert_eq!(px.dim(), (2, 1, 16, 16));
        assert_eq!(labels, vec![0, 9]);
        assert_eq!(px[[0, 0, 0, 0]], 0.0);
        assert_eq!(px[[0, 0, 0, 1]], 1.0);
        assert_eq!(px[[0, 0, 15, 15]], 0.5);
        assert_eq!(px[[1, 0, 0, 2]], 0.75);
    }

    #[test]
    fn rejects_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("usps"), "11 1:0\n").unwrap();
        assert!(matches!(load(dir.path(), Split::Train), Err(Error::CorruptData { .. })));
    }
}
