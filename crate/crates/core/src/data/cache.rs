//! Binary dataset cache.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     8 bytes  "HARLABDS"
//! version   u32      CACHE_VERSION
//! rows      u64
//! cols      u64
//! features  rows*cols f64, row-major
//! labels    rows u8 (activity codes 1..=6)
//! subjects  rows u16
//! names     cols * (u32 byte length, UTF-8 bytes)
//! ```
//!
//! The encoding is a pure function of the dataset, so equal datasets produce
//! byte-identical files.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{ActivityLabel, DataError, LabeledDataset};

pub const CACHE_MAGIC: &[u8; 8] = b"HARLABDS";
pub const CACHE_VERSION: u32 = 1;

pub fn encode_cache(ds: &LabeledDataset) -> Vec<u8> {
    let (n, d) = (ds.n_rows(), ds.n_features());
    let mut out = Vec::with_capacity(24 + n * d * 8 + n * 3);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for v in ds.features().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(ds.labels().iter().map(|l| l.code()));
    for s in ds.subjects() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for name in ds.feature_names() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(len)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_cache(bytes: &[u8], path: &Path) -> Result<LabeledDataset, DataError> {
    let bad = |reason: &str| DataError::Cache {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(CACHE_MAGIC.as_slice()) {
        return Err(bad("bad magic"));
    }
    match r.u32() {
        Some(CACHE_VERSION) => {}
        Some(v) => return Err(bad(&format!("unsupported version {v}"))),
        None => return Err(bad("truncated header")),
    }
    let n = r.u64().ok_or_else(|| bad("truncated header"))? as usize;
    let d = r.u64().ok_or_else(|| bad("truncated header"))? as usize;
    let cells = n.checked_mul(d).ok_or_else(|| bad("shape overflow"))?;
    let raw = r
        .take(cells.checked_mul(8).ok_or_else(|| bad("shape overflow"))?)
        .ok_or_else(|| bad("truncated features"))?;
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = r
        .take(n)
        .ok_or_else(|| bad("truncated labels"))?
        .iter()
        .map(|&c| ActivityLabel::from_code(i64::from(c)).ok_or_else(|| bad("invalid label code")))
        .collect::<Result<Vec<_>, _>>()?;
    let subjects: Vec<u16> = r
        .take(n * 2)
        .ok_or_else(|| bad("truncated subjects"))?
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let mut names = Vec::with_capacity(d);
    for _ in 0..d {
        let len = r.u32().ok_or_else(|| bad("truncated names"))? as usize;
        let raw = r.take(len).ok_or_else(|| bad("truncated names"))?;
        names.push(String::from_utf8(raw.to_vec()).map_err(|_| bad("name is not UTF-8"))?);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let features = Array2::from_shape_vec((n, d), values).map_err(|_| bad("shape"))?;
    LabeledDataset::new(features, labels, subjects, names)
}

pub fn write_cache(ds: &LabeledDataset, path: &Path) -> Result<(), DataError> {
    fs::write(path, encode_cache(ds)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_cache(path: &Path) -> Result<LabeledDataset, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_cache(&bytes, path)
}
