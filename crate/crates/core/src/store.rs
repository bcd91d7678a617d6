//! Versioned binary model artifacts.
//!
//! ```text
//! "AUSC"                      4 bytes magic
//! version                     u16 LE (currently 1)
//! header length               u32 LE
//! header                      UTF-8 TOML: class order, model config, metadata
//! tensors, canonical order:
//!   name length               u16 LE
//!   name                      UTF-8
//!   rank                      u8
//!   extents                   u32 LE × rank
//!   values                    f32 LE, row-major
//! CRC-32 (IEEE)               u32 LE over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::labels::ClassLabel;
use crate::nn::{ModelConfig, ParameterSet};
use crate::num::Scalar;

pub const MAGIC: &[u8; 4] = b"AUSC";
pub const FORMAT_VERSION: u16 = 1;
/// Upper bound on artifact size accepted by the loader.
pub const MAX_ARTIFACT_BYTES: u64 = 1 << 30;

const PREFIX_LEN: usize = 4 + 2 + 4;
const CRC_LEN: usize = 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Free-form version string reported by the service. Filled with a
    /// digest of the weights when left empty at save time.
    #[serde(default)]
    pub model_version: String,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl ModelMeta {
    pub fn with_version(version: impl Into<String>) -> Self {
        Self { model_version: version.into(), extra: BTreeMap::new() }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    classes: Vec<String>,
    model: ModelConfig,
    meta: ModelMeta,
}

/// Contents of a loaded artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub config: ModelConfig,
    pub params: ParameterSet<f32>,
    pub meta: ModelMeta,
}

fn tensor_payload(params: &ParameterSet<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    for t in params.tensors() {
        let name = t.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.view.ndim() as u8);
        for &d in t.view.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        // Iteration over a view is row-major regardless of memory layout.
        for &v in t.view.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Serialize to bytes. Identical inputs give identical bytes.
pub fn model_to_bytes<T: Scalar>(params: &ParameterSet<T>, cfg: &ModelConfig, meta: &ModelMeta) -> Result<Vec<u8>> {
    cfg.validate()?;
    params.check_against(cfg)?;
    let params = params.cast::<f32>();
    let payload = tensor_payload(&params);
    let mut meta = meta.clone();
    if meta.model_version.is_empty() {
        meta.model_version = format!("sha256-{}", &hex::encode(Sha256::digest(&payload))[..12]);
    }
    let header = Header { classes: ClassLabel::ALL.iter().map(|c| c.token().to_string()).collect(), model: cfg.clone(), meta };
    let header = toml::to_string(&header).map_err(|e| Error::config(format!("cannot encode model header: {e}")))?;
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + payload.len() + CRC_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Atomically write a model artifact.
pub fn save_model<T: Scalar>(path: impl AsRef<Path>, params: &ParameterSet<T>, cfg: &ModelConfig, meta: &ModelMeta) -> Result<()> {
    write_atomic(path.as_ref(), &model_to_bytes(params, cfg, meta)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt(format!("payload ends early at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Parse and validate an artifact held in memory. Checks run in the order
/// magic, version, checksum, header, tensor names and shapes.
pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelArtifact> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::NotAModel("missing AUSC signature".into()));
    }
    if bytes.len() as u64 > MAX_ARTIFACT_BYTES {
        return Err(Error::Corrupt(format!("{} bytes exceeds the {MAX_ARTIFACT_BYTES}-byte limit", bytes.len())));
    }
    if bytes.len() < PREFIX_LEN + CRC_LEN {
        return Err(Error::Corrupt("file too short for an artifact".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Version(version));
    }
    let (body, crc) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Corrupt(format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}")));
    }

    let mut c = Cursor { bytes: body, pos: 6 };
    let header_len = c.u32()? as usize;
    let header = std::str::from_utf8(c.take(header_len)?).map_err(|e| Error::Corrupt(format!("header is not UTF-8: {e}")))?;
    let header: Header = toml::from_str(header).map_err(|e| Error::Corrupt(format!("unreadable header: {e}")))?;
    let canonical: Vec<&str> = ClassLabel::ALL.iter().map(|c| c.token()).collect();
    if header.classes != canonical {
        return Err(Error::Corrupt(format!("class order {:?} differs from {canonical:?}", header.classes)));
    }
    header.model.validate().map_err(|e| Error::Corrupt(format!("header config: {e}")))?;

    let mut params = ParameterSet::<f32>::zeros(&header.model);
    for t in params.tensors_mut() {
        let name_len = c.u16()? as usize;
        let name = c.take(name_len)?;
        if name != t.name.as_bytes() {
            return Err(Error::Corrupt(format!("expected tensor {:?}, found {:?}", t.name, String::from_utf8_lossy(name))));
        }
        let rank = c.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(c.u32()? as usize);
        }
        if shape != t.view.shape() {
            return Err(Error::Corrupt(format!("tensor {:?} has shape {shape:?}, config implies {:?}", t.name, t.view.shape())));
        }
        // Shape is validated against the config, so this length is bounded.
        let raw = c.take(t.view.len() * 4)?;
        let mut view = t.view;
        for (dst, chunk) in view.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    if c.pos != body.len() {
        return Err(Error::Corrupt(format!("{} unexpected trailing bytes", body.len() - c.pos)));
    }
    Ok(ModelArtifact { config: header.model, params, meta: header.meta })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    let path = path.as_ref();
    let len = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    if len > MAX_ARTIFACT_BYTES {
        return Err(Error::Corrupt(format!("{} is {len} bytes, over the {MAX_ARTIFACT_BYTES}-byte limit", path.display())));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
