//! Self-describing binary container of named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "LGRLCKPT"
//! version  u32       1
//! n_meta   u32       then n_meta × (key: str, value: str)
//! n_tensor u32       then n_tensor × (name: str, rank: u32, dims: u64 × rank, values: f64 × Π dims)
//! str      = u32 byte length + UTF-8 bytes
//! ```
//!
//! Tensors are row-major and written in name order, so identical contents
//! always serialise to identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{AdError, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"LGRLCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

fn io_err(e: std::io::Error) -> AdError {
    AdError::Checkpoint(e.to_string())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| AdError::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut buf, self.metadata.len())?;
        for (k, v) in &self.metadata {
            put_str(&mut buf, k)?;
            put_str(&mut buf, v)?;
        }
        put_u32(&mut buf, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_str(&mut buf, name)?;
            buf.extend_from_slice(&2u32.to_le_bytes());
            buf.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            buf.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf).map_err(io_err)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(io_err)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(AdError::Checkpoint("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(AdError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut ck = Checkpoint::new();
        for _ in 0..cur.u32()? {
            let k = cur.string()?;
            let v = cur.string()?;
            ck.metadata.insert(k, v);
        }
        for _ in 0..cur.u32()? {
            let name = cur.string()?;
            let rank = cur.u32()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u64()? as usize);
            }
            let (rows, cols) = match dims.as_slice() {
                [] => (1, 1),
                [n] => (1, *n),
                [r, c] => (*r, *c),
                _ => return Err(AdError::Checkpoint(format!("`{name}`: rank {rank} unsupported"))),
            };
            let count = rows
                .checked_mul(cols)
                .filter(|&c| c <= (bytes.len() - cur.pos) / 8)
                .ok_or_else(|| AdError::Checkpoint(format!("`{name}`: truncated")))?;
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                data.push(f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")));
            }
            ck.tensors.insert(name, Tensor::new(rows, cols, data)?);
        }
        if cur.pos != bytes.len() {
            return Err(AdError::Checkpoint("trailing bytes".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(io_err)?;
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)
            .map_err(|e| AdError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::read_from(&mut f)
    }
}

fn put_u32(buf: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| AdError::Checkpoint("length overflows u32".into()))?;
    buf.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(buf, s.len())?;
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AdError::Checkpoint("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| AdError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(values in proptest::collection::vec(-1e300f64..1e300, 0..40), cols in 1usize..5, key in "[a-z.]{1,12}") {
            let rows = values.len() / cols;
            let t = Tensor::new(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let mut ck = Checkpoint::new();
            ck.insert(key.clone(), t);
            ck.set_meta("env", "pendulum");
            let mut bytes = Vec::new();
            ck.write_to(&mut bytes).unwrap();
            let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(back, ck);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut ck = Checkpoint::new();
        ck.insert("a.b", Tensor::row(&[1.0, 2.0, 3.0]));
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert!(Checkpoint::read_from(&mut &bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        assert!(Checkpoint::read_from(&mut &b""[..]).is_err());
    }
}
