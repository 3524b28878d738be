//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  "KGCDRCK1"
//! u64    optimizer step counter
//! u32    metadata entry count, then per entry: str key, str value
//! u32    parameter count, then per parameter:
//!        str name, u64 rows, u64 cols,
//!        f64 × rows·cols   value
//!        f64 × rows·cols   adam first moment
//!        f64 × rows·cols   adam second moment
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes. Values are stored as
//! raw IEEE-754 bits so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::params::{Param, ParameterStore};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KGCDRCK1";

/// Parameters plus free-form string metadata (model kind, dimensions, ...).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub store: ParameterStore,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.store.step.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.store.len() as u32).to_le_bytes());
        for (name, p) in self.store.iter() {
            put_str(&mut out, name);
            out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
            for t in [&p.value, &p.adam_m, &p.adam_v] {
                for v in t.data() {
                    out.extend_from_slice(&v.to_bits().to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Data("not a checkpoint file (bad magic)".into()));
        }
        let step = r.u64()?;
        let n_meta = r.u32()? as usize;
        let mut metadata = BTreeMap::new();
        for _ in 0..n_meta {
            let k = r.string()?;
            let v = r.string()?;
            metadata.insert(k, v);
        }
        let n_params = r.u32()? as usize;
        let mut store = ParameterStore::new();
        for _ in 0..n_params {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Data(format!("parameter {name:?} has absurd shape")))?;
            let value = r.tensor(rows, cols, n)?;
            let adam_m = r.tensor(rows, cols, n)?;
            let adam_v = r.tensor(rows, cols, n)?;
            store.insert_full(
                &name,
                Param {
                    value,
                    grad: Tensor2::zeros(rows, cols),
                    adam_m,
                    adam_v,
                },
            )?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Data("trailing bytes after checkpoint".into()));
        }
        store.step = step;
        Ok(Self { metadata, store })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Data("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Data("checkpoint string is not UTF-8".into()))
    }

    fn tensor(&mut self, rows: usize, cols: usize, n: usize) -> Result<Tensor2> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Data("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Tensor2::from_vec(rows, cols, data)
    }
}
