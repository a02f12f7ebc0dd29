//! Checkpoint archive: a manifest plus flat (name, shape, raw little-endian
//! values) entries in one file. Round-trips are bit-exact.
//!
//! Layout:
//!   magic "NLEC" | format version u32 | manifest len u64 | manifest JSON
//!   | entry count u64 | entries
//! entry:
//!   name len u16 | name utf-8 | dtype tag u8 | ndim u8 | dims u64...
//!   | raw little-endian values

use super::scalar::{Dtype, Scalar};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"NLEC";
const VERSION: u32 = 1;

/// Run metadata stored alongside the tensors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub dtype: String,
    /// Hash of the config key/value text this run was launched with.
    pub config_hash: String,
    /// RNG state: the run seed (all streams derive from it by label).
    pub seed: u64,
    /// Optimizer step the archive was written at.
    pub step: u64,
    #[serde(default)]
    pub extra: std::collections::BTreeMap<String, String>,
}

pub struct Entry<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

pub fn save<S: Scalar>(path: &Path, manifest: &Manifest, entries: &[Entry<S>]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let mjson = serde_json::to_vec(manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest encode: {e}")))?;
    buf.extend_from_slice(&(mjson.len() as u64).to_le_bytes());
    buf.extend_from_slice(&mjson);
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for e in entries {
        let nb = e.name.as_bytes();
        if nb.len() > u16::MAX as usize {
            return Err(Error::Checkpoint(format!("name too long: {}", e.name)));
        }
        buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(S::DTYPE.tag());
        buf.push(e.shape.len() as u8);
        for &d in &e.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &e.data {
            v.write_le(&mut buf);
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load<S: Scalar>(path: &Path) -> Result<(Manifest, Vec<Entry<S>>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mlen = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let manifest: Manifest = serde_json::from_slice(cur.take(mlen)?)
        .map_err(|e| Error::Checkpoint(format!("manifest decode: {e}")))?;
    let count = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(cur.take(nlen)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("name utf8: {e}")))?;
        let tag = cur.take(1)?[0];
        let dtype = Dtype::from_tag(tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown dtype tag {tag}")))?;
        if dtype != S::DTYPE {
            return Err(Error::Checkpoint(format!(
                "dtype mismatch: archive holds {}, requested {}",
                dtype.name(),
                S::DTYPE.name()
            )));
        }
        let ndim = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel * S::BYTES)?;
        let mut data = Vec::with_capacity(numel);
        for i in 0..numel {
            data.push(S::read_le(&raw[i * S::BYTES..]));
        }
        entries.push(Entry { name, shape, data });
    }
    Ok((manifest, entries))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated archive at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Hash of arbitrary text (config files, corpus files) as lowercase hex.
pub fn content_hash(text: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(text);
    let d = h.finalize();
    d.iter().map(|b| format!("{b:02x}")).collect()
}
