//! Weight file format.
//!
//! ```text
//! magic      4 bytes  "TGWT"
//! version    u32
//! head       u8       0 linear, 1 sigmoid, 2 squashed gaussian
//! n_sizes    u32
//! sizes      u32 × n_sizes
//! acts       u8 × (n_sizes − 2)   0 relu, 1 tanh
//! n_params   u64
//! params     f64 × n_params
//! ```
//!
//! All integers and reals are little-endian.

use std::path::Path;

use super::mlp::{param_count, Activation, Head, Mlp};
use crate::error::{Error, Result};

pub const WEIGHT_MAGIC: &[u8; 4] = b"TGWT";
pub const WEIGHT_VERSION: u32 = 1;

impl Mlp {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.num_params());
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        out.push(self.head().tag());
        out.extend_from_slice(&(self.sizes().len() as u32).to_le_bytes());
        for &s in self.sizes() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend(self.activations().iter().map(|a| a.tag()));
        out.extend_from_slice(&(self.num_params() as u64).to_le_bytes());
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Mlp> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHT_MAGIC {
            return Err(Error::WeightFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != WEIGHT_VERSION {
            return Err(Error::WeightFormat(format!(
                "version {version} unsupported (expected {WEIGHT_VERSION})"
            )));
        }
        let head_tag = r.u8()?;
        let head = Head::from_tag(head_tag).ok_or_else(|| Error::WeightFormat(format!("unknown head tag {head_tag}")))?;
        let n = r.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::WeightFormat(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let acts = (0..n - 2)
            .map(|_| {
                let t = r.u8()?;
                Activation::from_tag(t).ok_or_else(|| Error::WeightFormat(format!("unknown activation tag {t}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let count = r.u64()? as usize;
        let expected = param_count(&sizes);
        if count != expected {
            return Err(Error::WeightFormat(format!(
                "parameter count {count} does not match layer sizes {sizes:?} ({expected})"
            )));
        }
        let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::WeightFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::WeightFormat("non-finite parameter".into()));
        }
        Mlp::from_parts(sizes, acts, head, params).map_err(|e| Error::WeightFormat(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Mlp> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Mlp::from_bytes(&bytes)
    }

    /// Loads weights into `self`, requiring an identical architecture.
    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let other = Mlp::load(path)?;
        if !self.same_architecture(&other) {
            return Err(Error::WeightFormat(format!(
                "{}: architecture {:?}/{:?} does not match expected {:?}/{:?}",
                path.display(),
                other.sizes(),
                other.head(),
                self.sizes(),
                self.head()
            )));
        }
        *self = other;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::WeightFormat(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
