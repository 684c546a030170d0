//! IDX files (`train-images-idx3-ubyte`, ...), raw or gzipped.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::Array4;

use super::Split;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

pub(super) fn load(root: &Path, split: Split) -> Result<(Array4<f32>, Vec<usize>)> {
    let prefix = match split {
        Split::Train => "train",
        Split::Validation => "t10k",
    };
    let image_path = locate(root, &format!("{prefix}-images-idx3-ubyte"))?;
    let label_path = locate(root, &format!("{prefix}-labels-idx1-ubyte"))?;
    let images = read_idx(&image_path)?;
    let labels = read_idx(&label_path)?;

    if images.magic != IMAGE_MAGIC || images.dims.len() != 3 {
        return Err(Error::corrupt(&image_path, "not an idx3 image file"));
    }
    if labels.magic != LABEL_MAGIC || labels.dims.len() != 1 {
        return Err(Error::corrupt(&label_path, "not an idx1 label file"));
    }
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    if (h, w) != (28, 28) {
        return Err(Error::corrupt(&image_path, format!("image size {h}x{w}, expected 28x28")));
    }
    if labels.dims[0] != n {
        return Err(Error::corrupt(
            &label_path,
            format!("{} labels for {n} images", labels.dims[0]),
        ));
    }
    let pixels = Array4::from_shape_vec((n, 1, h, w), images.body.iter().map(|&b| b as f32 / 255.0).collect())
        .map_err(|e| Error::corrupt(&image_path, e.to_string()))?;
    let labels = labels.body.iter().map(|&b| b as usize).collect();
    Ok((pixels, labels))
}

/// Accepts `name` or `name.gz`.
pub(super) fn locate(root: &Path, name: &str) -> Result<PathBuf> {
    let plain = root.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = root.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(Error::MissingFile(plain))
}

pub(super) fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

struct Idx {
    magic: u32,
    dims: Vec<usize>,
    body: Vec<u8>,
}

fn read_idx(path: &Path) -> Result<Idx> {
    let mut bytes = Vec::new();
    open_maybe_gz(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    if bytes.len() < 4 {
        return Err(Error::corrupt(path, "truncated header"));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
        return Err(Error::corrupt(path, format!("unsupported idx magic {magic:#010x}")));
    }
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::corrupt(path, "truncated header"));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let expected: usize = dims.iter().product();
    let body = bytes.split_off(header);
    if body.len() != expected {
        return Err(Error::corrupt(
            path,
            format!("body holds {} bytes, header declares {expected}", body.len()),
        ));
    }
    Ok(Idx { magic, dims, body })
}

#[cfg(test)]
pub(crate) fn write_idx(path: &Path, dims: &[u32], body: &[u8]) {
    let mut out = vec![0u8, 0, 0x08, dims.len() as u8];
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(body);
    std::fs::write(path, out).unwrap();
}
