//! EAD1: a little-endian container of named `f32` tensors.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "EAD1"
//! 4       4           format version (u32, currently 1)
//! 8       4           role length R (u32)
//! 12      R           role (UTF-8), e.g. "features", "map", "checkpoint"
//! 12+R    4           record count N (u32)
//! then N records:
//!         4           name length L (u32)
//!         L           name (UTF-8, unique within the file)
//!         4           ndim D (u32, 1..=4)
//!         4*D         dims (u32 each)
//!         4*prod      payload (f32 each, row-major)
//! ```

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"EAD1";
pub const VERSION: u32 = 1;

/// In-memory form of one EAD1 file.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub role: String,
    pub records: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(role: impl Into<String>) -> Self {
        Container {
            role: role.into(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.records.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut seen = HashSet::new();
        for (name, _) in &self.records {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(
                    "ead1",
                    format!("duplicate record name {name:?}"),
                ));
            }
        }
        let payload: usize = self
            .records
            .iter()
            .map(|(n, t)| 12 + n.len() + 4 * t.rank() + 4 * t.len())
            .sum();
        let mut out = Vec::with_capacity(16 + self.role.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.role);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (name, tensor) in &self.records {
            put_str(&mut out, name);
            out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
            for &d in tensor.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in tensor.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a complete file image; `origin` only labels errors.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            origin,
        };
        if r.take(4)? != MAGIC {
            return Err(Error::format(origin, "bad magic, expected \"EAD1\""));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported EAD1 version {version}"),
            ));
        }
        let role = r.string()?;
        let count = r.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        let mut seen = HashSet::new();
        for _ in 0..count {
            let name = r.string()?;
            if !seen.insert(name.clone()) {
                return Err(Error::format(
                    origin,
                    format!("duplicate record name {name:?}"),
                ));
            }
            let ndim = r.u32()? as usize;
            if !(1..=4).contains(&ndim) {
                return Err(Error::format(
                    origin,
                    format!("record {name:?}: ndim {ndim} not in 1..=4"),
                ));
            }
            let dims = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    Error::format(origin, format!("record {name:?}: bad dims {dims:?}"))
                })?;
            let raw = r.take(
                len.checked_mul(4)
                    .ok_or_else(|| Error::format(origin, "record too large"))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            records.push((name, Tensor::from_vec(&dims, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                origin,
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(Container { role, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.origin,
                    format!(
                        "truncated: need {n} bytes at offset {}, file has {}",
                        self.pos,
                        self.bytes.len()
                    ),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format(self.origin, "invalid UTF-8 in name"))
    }
}

pub const FEATURES_ROLE: &str = "features";
pub const FEATURES_RECORD: &str = "features";

/// Writes a single C×H×W feature tensor with role and record name "features".
pub fn write_features(path: &Path, features: &Tensor) -> Result<()> {
    features.chw()?;
    let mut c = Container::new(FEATURES_ROLE);
    c.push(FEATURES_RECORD, features.clone());
    c.write(path)
}

/// Reads a feature file, checking role, record name, and (optionally) extents.
pub fn read_features(path: &Path, expected: Option<&[usize]>) -> Result<Tensor> {
    let c = Container::read(path)?;
    if c.role != FEATURES_ROLE {
        return Err(Error::format(
            path,
            format!("role {:?}, expected {FEATURES_ROLE:?}", c.role),
        ));
    }
    let t = c
        .get(FEATURES_RECORD)
        .ok_or_else(|| Error::format(path, "missing \"features\" record"))?;
    if t.rank() != 3 {
        return Err(Error::format(
            path,
            format!("features must be C×H×W, got {:?}", t.dims()),
        ));
    }
    if let Some(want) = expected {
        if t.dims() != want {
            return Err(Error::format(
                path,
                format!("feature dims {:?}, expected {want:?}", t.dims()),
            ));
        }
    }
    Ok(t.clone())
}
