//! Versioned binary container for trained parameters.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "VGCK"
//! version      u32      1
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON {"kind", "config", "vocab"}
//! n_params     u32
//! n_params times:
//!   name_len   u32
//!   name       name_len bytes UTF-8
//!   rank       u32
//!   dims       rank × u64
//!   data       product(dims) × f64
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::tensor::{ParamStore, Tensor, TensorError};

pub const MAGIC: &[u8; 4] = b"VGCK";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("bad checkpoint header: {0}")]
    BadHeader(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongKind { expected: String, found: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    vocab: Vec<String>,
}

/// Model kind tag, configuration, vocabulary and named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub vocab: Vec<String>,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Collects parameters from several stores, prefixing each name.
    pub fn from_stores(
        kind: &str,
        config: serde_json::Value,
        vocab: Vec<String>,
        stores: &[(&str, &ParamStore)],
    ) -> Self {
        let params = stores
            .iter()
            .flat_map(|(prefix, store)| {
                store
                    .named_values()
                    .map(move |(name, t)| (format!("{prefix}{name}"), t.clone()))
            })
            .collect();
        Self {
            kind: kind.to_string(),
            config,
            vocab,
            params,
        }
    }

    pub fn expect_kind(&self, expected: &str) -> Result<(), CheckpointError> {
        if self.kind != expected {
            return Err(CheckpointError::WrongKind {
                expected: expected.into(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    /// Loads every parameter of `store` from entries named `prefix + name`.
    pub fn fill_store(&self, prefix: &str, store: &mut ParamStore) -> Result<(), CheckpointError> {
        let pairs = self
            .params
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|rest| (rest, t)));
        store.load_values(pairs)?;
        Ok(())
    }

    pub fn config_as<T: serde::de::DeserializeOwned>(&self) -> Result<T, CheckpointError> {
        serde_json::from_value(self.config.clone()).map_err(|e| CheckpointError::BadHeader(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let header_len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(header_len)?).map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| CheckpointError::BadHeader(e.to_string()))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let count: usize = shape.iter().product();
            let raw = r.take(count.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.push((name, Tensor::new(shape, data)?));
        }
        if r.at != bytes.len() {
            return Err(CheckpointError::BadHeader("trailing bytes".into()));
        }
        Ok(Self {
            kind: header.kind,
            config: header.config,
            vocab: header.vocab,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.at..end).ok_or(CheckpointError::Truncated)?;
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
