//! Versioned binary container for named `f32` arrays plus a JSON header.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes
//! version      u32
//! header_len   u64
//! header       JSON: {"meta": ..., "tensors": [{name, shape, offset, len}]}
//! payload      f32 values, concatenated in tensor order
//! digest       32-byte SHA-256 of everything before it
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub meta: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl Archive {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self, magic: &[u8; 8], version: u32) -> Result<Vec<u8>> {
        let mut offset = 0;
        let entries = self
            .tensors
            .iter()
            .map(|t| {
                let e = TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    offset,
                    len: t.data.len(),
                };
                offset += t.data.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(8 + 4 + 8 + header.len() + offset * 4 + 32);
        out.extend_from_slice(magic);
        out.extend_from_slice(&version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], magic: &[u8; 8], version: u32) -> Result<Self> {
        if bytes.len() < 20 + 32 || &bytes[..8] != magic {
            return Err(Error::Format("bad magic or truncated file".into()));
        }
        let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if found != version {
            return Err(Error::Version {
                found,
                supported: version,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| Error::Format("header length exceeds file".into()))?;
        let header: Header = serde_json::from_slice(&body[20..header_end])
            .map_err(|e| Error::Format(format!("header: {e}")))?;
        let payload = &body[header_end..];
        if payload.len() % 4 != 0 {
            return Err(Error::Format("payload is not a whole number of f32 values".into()));
        }
        let n_values = payload.len() / 4;
        let mut expected_offset = 0;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let numel: usize = e.shape.iter().product();
            if numel != e.len || e.offset != expected_offset || e.offset + e.len > n_values {
                return Err(Error::Format(format!(
                    "tensor `{}` has inconsistent shape {:?} / length {}",
                    e.name, e.shape, e.len
                )));
            }
            expected_offset += e.len;
            let data = payload[e.offset * 4..(e.offset + e.len) * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            tensors.push(Tensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        if expected_offset != n_values {
            return Err(Error::Format("payload has trailing values".into()));
        }
        Ok(Archive {
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path, magic: &[u8; 8], version: u32) -> Result<()> {
        let bytes = self.to_bytes(magic, version)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, magic: &[u8; 8], version: u32) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, magic, version)
    }
}

/// Rewrites the checksum after external edits; used to build corrupted
/// fixtures whose only defect is structural.
#[doc(hidden)]
pub fn reseal(bytes: &mut Vec<u8>) {
    let body_len = bytes.len() - 32;
    let digest = Sha256::digest(&bytes[..body_len]);
    bytes[body_len..].copy_from_slice(&digest);
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
