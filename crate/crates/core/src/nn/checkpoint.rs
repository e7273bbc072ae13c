//! `CKP1` checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CKP1" | u32 version (=1) | u32 entry count
//! per entry: u16 name length | name (UTF-8) | u32 rank | rank x u32 extents | f32 payload
//! ```
//!
//! Entries keep insertion order. Optimizer moments and batch-norm running
//! statistics are ordinary entries with suffixed names.

use std::io::{Read, Write};
use std::path::Path;

use super::tensor::{Real, Tensor};
use super::NnError;

pub const MAGIC: &[u8; 4] = b"CKP1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Inserts or replaces `name`.
    pub fn put<T: Real>(&mut self, name: &str, tensor: &Tensor<T>) {
        self.put_raw(name, tensor.shape().to_vec(), tensor.data().iter().map(|v| v.as_f64() as f32).collect());
    }

    pub fn put_raw(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) {
        let entry = Entry { name: name.to_string(), shape, data };
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn tensor<T: Real>(&self, name: &str) -> Result<Tensor<T>, NnError> {
        let e = self.get(name).ok_or_else(|| NnError::Format(format!("missing entry {name:?}")))?;
        Tensor::from_vec(&e.shape, e.data.iter().map(|&v| T::lit(v as f64)).collect())
    }

    /// Entries whose names start with `prefix`, prefix stripped.
    pub fn with_prefix(&self, prefix: &str) -> Checkpoint {
        Checkpoint {
            entries: self
                .entries
                .iter()
                .filter_map(|e| {
                    e.name.strip_prefix(prefix).map(|rest| Entry { name: rest.to_string(), ..e.clone() })
                })
                .collect(),
        }
    }

    pub fn merge_prefixed(&mut self, prefix: &str, other: &Checkpoint) {
        for e in &other.entries {
            self.put_raw(&format!("{prefix}{}", e.name), e.shape.clone(), e.data.clone());
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NnError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&u32_of(self.entries.len())?.to_le_bytes());
        for e in &self.entries {
            let name = e.name.as_bytes();
            let len = u16::try_from(name.len()).map_err(|_| NnError::Format(format!("name too long: {}", e.name)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&u32_of(e.shape.len())?.to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&u32_of(d)?.to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let n = cur.u32()? as usize;
        let mut entries = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(cur.take(len)?.to_vec())
                .map_err(|_| NnError::Format("entry name is not UTF-8".into()))?;
            let rank = cur.u32()? as usize;
            if rank > super::tensor::MAX_RANK {
                return Err(NnError::Format(format!("entry {name:?} has rank {rank}")));
            }
            let shape = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let count: usize = shape.iter().product();
            let raw = cur.take(count.checked_mul(4).ok_or_else(|| NnError::Format("size overflow".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            entries.push(Entry { name, shape, data });
        }
        if cur.pos != bytes.len() {
            return Err(NnError::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn u32_of(v: usize) -> Result<u32, NnError> {
    u32::try_from(v).map_err(|_| NnError::Format(format!("{v} does not fit in u32")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NnError::Format(format!("truncated: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
