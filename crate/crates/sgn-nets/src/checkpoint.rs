//! Versioned binary archive of named parameter arrays plus a JSON spec.
//!
//! Layout (little endian): magic `SGNCKPT\0`, `u32` version, `u32` spec
//! length, spec bytes, 32-byte SHA-256 of the spec, `u32` tensor count, then
//! per tensor `u32` name length, name, `u32` rank, `u64` dims, `f64` data.
//! A trailing SHA-256 covers every preceding byte.

use std::path::Path;

use ndarray::IxDyn;
use serde::{de::DeserializeOwned, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NetError, Result};
use crate::graph::Tensor;
use crate::params::ParamStore;

pub const MAGIC: &[u8; 8] = b"SGNCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Spec JSON kept verbatim so rewriting a loaded file is byte-identical.
    pub spec_json: String,
    pub params: ParamStore,
}

pub fn spec_hash_of(spec_json: &str) -> String {
    hex::encode(Sha256::digest(spec_json.as_bytes()))
}

impl Checkpoint {
    pub fn new(spec: &impl Serialize, params: ParamStore) -> Result<Self> {
        Ok(Self { spec_json: serde_json::to_string(spec)?, params })
    }

    pub fn spec<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_str(&self.spec_json)?)
    }

    pub fn spec_hash(&self) -> String {
        spec_hash_of(&self.spec_json)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.numel());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, self.spec_json.len());
        out.extend_from_slice(self.spec_json.as_bytes());
        out.extend_from_slice(&Sha256::digest(self.spec_json.as_bytes()));
        put_u32(&mut out, self.params.len());
        for (name, t) in self.params.iter() {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.ndim());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(NetError::Format("not a checkpoint file".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(NetError::Format("checksum mismatch (file truncated or corrupt)".into()));
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(NetError::Version(version));
        }
        let spec_len = r.u32()? as usize;
        let spec_json = String::from_utf8(r.take(spec_len)?.to_vec())
            .map_err(|_| NetError::Format("spec is not UTF-8".into()))?;
        let stored_hash = r.take(32)?;
        if Sha256::digest(spec_json.as_bytes()).as_slice() != stored_hash {
            return Err(NetError::Format("spec hash does not match spec".into()));
        }
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NetError::Format("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = dims.iter().product();
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| NetError::Format("tensor too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::from_shape_vec(IxDyn(&dims), data).map_err(|e| NetError::Format(e.to_string()))?;
            params.insert(name, t);
        }
        if r.pos != body.len() {
            return Err(NetError::Format("trailing bytes after tensors".into()));
        }
        Ok(Self { spec_json, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads and insists that the stored spec hashes to `expected_hash`.
    pub fn load_expecting(path: impl AsRef<Path>, expected_hash: &str) -> Result<Self> {
        let ck = Self::load(path)?;
        let found = ck.spec_hash();
        if found != expected_hash {
            return Err(NetError::SpecMismatch { expected: expected_hash.to_string(), found });
        }
        Ok(ck)
    }
}

/// SHA-256 of the serialized file, used to identify a checkpoint.
pub fn file_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("length fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NetError::Format("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
