//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "FERRETCK"
//! length     u64       byte length of the manifest
//! manifest   UTF-8 JSON
//! payload    f32 values of every tensor, in manifest order
//! ```
//!
//! Each manifest tensor entry records its name, kind (`param` or `buffer`),
//! shape, byte offset into the payload and element count.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::Layer;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FERRETCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Param,
    Buffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub seed: u64,
    /// Caller-defined description of what the tensors belong to.
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, TensorKind, Tensor<f32>)>,
}

impl Checkpoint {
    /// Snapshot of every parameter followed by every buffer of `layer`.
    pub fn capture(layer: &dyn Layer<f32>, seed: u64, meta: serde_json::Value) -> Self {
        let mut tensors: Vec<_> = layer
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), TensorKind::Param, p.value.clone()))
            .collect();
        tensors.extend(
            layer
                .buffers()
                .into_iter()
                .map(|(n, t)| (n, TensorKind::Buffer, t.clone())),
        );
        Self {
            seed,
            meta,
            tensors,
        }
    }

    /// Copies stored tensors into `layer`; names and shapes must match exactly.
    pub fn restore(&self, layer: &mut dyn Layer<f32>) -> Result<()> {
        let find = |name: &str, kind: TensorKind| {
            self.tensors
                .iter()
                .find(|(n, k, _)| n == name && *k == kind)
                .map(|(_, _, t)| t)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
        };
        let mut expected = 0;
        for p in layer.params_mut() {
            let t = find(&p.name, TensorKind::Param)?;
            if t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "`{}` has shape {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
            expected += 1;
        }
        for (name, buf) in layer.buffers_mut() {
            let t = find(&name, TensorKind::Buffer)?;
            if t.shape() != buf.shape() {
                return Err(Error::Checkpoint(format!("`{name}` shape mismatch")));
            }
            *buf = t.clone();
            expected += 1;
        }
        if expected != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model has {expected}",
                self.tensors.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, kind, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                kind: *kind,
                shape: t.shape().to_vec(),
                offset,
                len: t.len() as u64,
            });
            offset += 4 * t.len() as u64;
        }
        let manifest = Manifest {
            format: "ferret-checkpoint".into(),
            version: FORMAT_VERSION,
            dtype: "f32".into(),
            seed: self.seed,
            meta: self.meta.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if mlen > body.len() {
            return Err(Error::Checkpoint("truncated manifest".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&body[..mlen])?;
        if manifest.version != FORMAT_VERSION || manifest.dtype != "f32" {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} / dtype {}",
                manifest.version, manifest.dtype
            )));
        }
        let payload = &body[mlen..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in &manifest.tensors {
            let start = e.offset as usize;
            let end = start + 4 * e.len as usize;
            if end > payload.len() || e.shape.iter().product::<usize>() != e.len as usize {
                return Err(Error::Checkpoint(format!("tensor `{}` out of bounds", e.name)));
            }
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            tensors.push((e.name.clone(), e.kind, Tensor::new(&e.shape, data)?));
        }
        Ok(Self {
            seed: manifest.seed,
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
