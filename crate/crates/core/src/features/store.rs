//! Binary feature store.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  "UGCF" (4 bytes)
//! version u16
//! aesthetic extractor name   (u32 length + UTF-8 bytes)
//! technical extractor name   (u32 length + UTF-8 bytes)
//! D       u32 (feature dimension)
//! records until EOF: key hash u64 | D x f32
//! ```
//!
//! Keys are FNV-1a 64 hashes of the caller's string key (image path or id).
//! Files are written whole via temp + rename, so a reader never observes a
//! half-written store.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::features::{FeatureError, FeatureVector};
use crate::hash::fnv1a64_str;
use crate::imgio;

pub const MAGIC: &[u8; 4] = b"UGCF";
pub const VERSION: u16 = 1;

/// Store header: which extractor pair produced the vectors, and D.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreHeader {
    pub aesthetic: String,
    pub technical: String,
    pub dim: usize,
}

/// Writes the whole store; keys are hashed with FNV-1a 64.
pub fn write_store(
    path: &Path,
    header: &StoreHeader,
    entries: &[(String, FeatureVector)],
) -> Result<(), FeatureError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for name in [&header.aesthetic, &header.technical] {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    buf.extend_from_slice(&(header.dim as u32).to_le_bytes());
    for (key, vector) in entries {
        if vector.dim() != header.dim {
            return Err(FeatureError::DimensionMismatch {
                expected: header.dim,
                got: vector.dim(),
            });
        }
        buf.extend_from_slice(&fnv1a64_str(key).to_le_bytes());
        for &v in &vector.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    imgio::write_atomic(path, &buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FeatureError> {
        if self.pos + n > self.bytes.len() {
            return Err(FeatureError::Store(format!(
                "truncated while reading {what} (offset {})",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16, FeatureError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, FeatureError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, FeatureError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, FeatureError> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| FeatureError::Store(format!("{what} is not valid UTF-8")))
    }
}

/// Reads the whole store back: header plus (key hash, vector) records.
pub fn read_store(path: &Path) -> Result<(StoreHeader, Vec<(u64, FeatureVector)>), FeatureError> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(FeatureError::Store(format!(
            "bad magic {magic:?}, expected \"UGCF\""
        )));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(FeatureError::Store(format!(
            "unsupported version {version} (this build reads {VERSION})"
        )));
    }
    let aesthetic = r.string("aesthetic extractor name")?;
    let technical = r.string("technical extractor name")?;
    let dim = r.u32("dimension")? as usize;
    if dim == 0 {
        return Err(FeatureError::Store("dimension must be nonzero".into()));
    }
    let mut records = Vec::new();
    while r.pos < bytes.len() {
        let hash = r.u64("record key")?;
        let raw = r.take(dim * 4, "record values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push((hash, FeatureVector { values }));
    }
    Ok((
        StoreHeader {
            aesthetic,
            technical,
            dim,
        },
        records,
    ))
}

/// In-memory view of a store, keyed for lookup by the original string keys.
#[derive(Debug)]
pub struct FeatureStore {
    pub header: StoreHeader,
    map: HashMap<u64, FeatureVector>,
}

impl FeatureStore {
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let (header, records) = read_store(path)?;
        let mut map = HashMap::with_capacity(records.len());
        for (hash, vector) in records {
            map.insert(hash, vector);
        }
        Ok(Self { header, map })
    }

    pub fn get(&self, key: &str) -> Option<&FeatureVector> {
        self.map.get(&fnv1a64_str(key))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
