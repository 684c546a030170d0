//! Checkpoint container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      4 bytes  "PGCK"
//! version    u16      currently 1
//! meta_len   u32
//! meta       meta_len bytes of JSON: {"architecture": ArchitectureSpec, "metadata": ModelMetadata}
//! count      u32      number of tensors
//! tensor*    name_len u16, name (utf-8), rank u8, dims u32 * rank, values f32 * prod(dims)
//! ```
//!
//! Parameters come first in [`Classifier::params`] order, then buffers.

use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, Classifier, Mode};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PGCK";
const VERSION: u16 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub seed: u64,
    pub step_count: u64,
    #[serde(default)]
    pub config_digest: String,
    /// `standard`, `adversarial` or `gaussian`.
    #[serde(default)]
    pub train_mode: Option<String>,
    /// Training ε (adversarial) or σ (gaussian) on the `[0, 1]` scale.
    #[serde(default)]
    pub epsilon_or_sigma: Option<f64>,
    /// Display name such as `Natural` or `AT-0.1`.
    #[serde(default)]
    pub label: Option<String>,
    /// Free-form provenance, e.g. the digest of the experiment config.
    #[serde(default)]
    pub provenance: std::collections::BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: ArchitectureSpec,
    metadata: ModelMetadata,
}

pub fn to_bytes(model: &Classifier) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        architecture: model.spec.clone(),
        metadata: model.metadata.clone(),
    })
    .expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let tensors: Vec<_> = model.params().into_iter().chain(model.buffers()).collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, values) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(values.ndim() as u8);
        for &d in values.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::CorruptCheckpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Classifier> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::CorruptCheckpoint(format!("unsupported version {version}")));
    }
    let meta_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::CorruptCheckpoint(format!("metadata: {e}")))?;
    let mut model = Classifier::<f32>::build(&header.architecture, header.metadata.seed)?;
    model.metadata = header.metadata;
    model.mode = Mode::Eval;

    let count = r.u32()? as usize;
    let mut tensors = std::collections::BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::CorruptCheckpoint("tensor name is not utf-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let len: usize = dims.iter().product();
        let raw = r.take(len.checked_mul(4).ok_or_else(|| Error::CorruptCheckpoint("tensor too large".into()))?)?;
        let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let array = ArrayD::from_shape_vec(dims, values).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        tensors.insert(name, array);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut assign = |name: String, mut dst: ndarray::ArrayViewMutD<'_, f32>| -> Result<()> {
        let src = tensors
            .remove(&name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor {name}")))?;
        if src.shape() != dst.shape() {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor {name} has shape {:?}, architecture expects {:?}",
                src.shape(),
                dst.shape()
            )));
        }
        dst.assign(&src);
        Ok(())
    };
    for (name, dst) in model.params_mut() {
        assign(name, dst)?;
    }
    for (name, dst) in model.buffers_mut() {
        assign(name, dst)?;
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::CorruptCheckpoint(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

pub fn save(model: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Classifier> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
