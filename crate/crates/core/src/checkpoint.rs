//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `KDFG`, version u32, tensor count u32, then
//! per tensor: name length u32, UTF-8 name, dtype u8 (0 = f32, 1 = f64),
//! ndim u32, dims u32 × ndim, raw element bytes.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::nn::Module;
use crate::{Scalar, Tensor};

pub const MAGIC: [u8; 4] = *b"KDFG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub name: String,
    pub dtype: u8,
    pub dims: Vec<usize>,
    /// Raw little-endian element bytes.
    pub bytes: Vec<u8>,
}

impl Entry {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn to_tensor<S: Scalar>(&self) -> Result<Tensor<S>> {
        if self.dtype != S::DTYPE {
            return invalid(format!(
                "tensor `{}` has dtype code {}, expected {}",
                self.name,
                self.dtype,
                S::DTYPE
            ));
        }
        let data = self.bytes.chunks_exact(S::BYTES).map(S::read_le).collect();
        Tensor::new(data, &self.dims)
    }
}

fn dtype_size(code: u8) -> Option<usize> {
    match code {
        0 => Some(4),
        1 => Some(8),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

impl Checkpoint {
    pub fn from_module<S: Scalar>(m: &impl Module<S>) -> Self {
        let mut entries = Vec::new();
        m.visit("", &mut |name, t| {
            let mut bytes = Vec::with_capacity(t.numel() * S::BYTES);
            t.data().iter().for_each(|v| v.write_le(&mut bytes));
            entries.push(Entry {
                name: name.to_string(),
                dtype: S::DTYPE,
                dims: t.shape().to_vec(),
                bytes,
            });
        });
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.entries.iter().map(Entry::numel).sum()
    }

    /// Overwrites every parameter of `m` with the entry of the same name,
    /// keeping each parameter's trainable flag.
    pub fn load_into<S: Scalar>(&self, m: &mut impl Module<S>) -> Result<()> {
        let by_name: HashMap<&str, &Entry> = self.entries.iter().map(|e| (e.name.as_str(), e)).collect();
        let mut failure = None;
        m.visit_mut("", &mut |name, t| {
            if failure.is_some() {
                return;
            }
            let loaded = by_name
                .get(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))
                .and_then(|e| {
                    if e.dims != t.shape() {
                        return Err(Error::ShapeMismatch {
                            op: "checkpoint load",
                            lhs: t.shape().to_vec(),
                            rhs: e.dims.clone(),
                        });
                    }
                    e.to_tensor::<S>()
                });
            match loaded {
                Ok(v) => *t = v.requires_grad_(t.requires_grad()),
                Err(e) => failure = Some(e),
            }
        });
        failure.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype);
            out.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
            for &d in &e.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&e.bytes);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(4, "magic").map_err(|_| Error::BadMagic {
            expected: MAGIC,
            found: buf.to_vec(),
        })?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic.to_vec(),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        let count = r.u32("tensor count")?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|_| Error::Invalid("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = r.take(1, "dtype")?[0];
            let size = dtype_size(dtype).ok_or_else(|| Error::Invalid(format!("unknown dtype code {dtype}")))?;
            let ndim = r.u32("ndim")? as usize;
            let dims = (0..ndim).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let bytes = r.take(n.checked_mul(size).ok_or(Error::Truncated("tensor data"))?, "tensor data")?.to_vec();
            entries.push(Entry { name, dtype, dims, bytes });
        }
        if r.pos != buf.len() {
            return invalid(format!("{} trailing bytes after checkpoint", buf.len() - r.pos));
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the serialized bytes, hex encoded.
    pub fn hash(&self) -> String {
        hex_sha256(&self.to_bytes())
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a module's parameters (names, shapes and values).
pub fn param_hash<S: Scalar>(m: &impl Module<S>) -> String {
    Checkpoint::from_module(m).hash()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Linear<f32> {
        Linear::new(&mut ChaCha8Rng::seed_from_u64(3), 3, 2, true).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ck = Checkpoint::from_module(&sample());
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(&bytes[..4], b"KDFG");
    }

    #[test]
    fn load_restores_values_and_flags() {
        let src = sample();
        let mut dst = Linear::<f32>::new(&mut ChaCha8Rng::seed_from_u64(9), 3, 2, true).unwrap();
        dst.set_trainable(false);
        Checkpoint::from_module(&src).load_into(&mut dst).unwrap();
        assert_eq!(dst.weight.to_vec(), src.weight.to_vec());
        assert!(!dst.weight.requires_grad());
        assert_eq!(param_hash(&dst), param_hash(&src));
    }

    #[test]
    fn corrupted_headers_are_typed_errors() {
        let bytes = Checkpoint::from_module(&sample()).to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut newer = bytes.clone();
        newer[4..8].copy_from_slice(&(VERSION + 1).to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&newer),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(Checkpoint::from_bytes(b"KD"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn missing_and_mismatched_tensors() {
        let ck = Checkpoint::from_module(&sample());
        let mut wider = Linear::<f32>::new(&mut ChaCha8Rng::seed_from_u64(0), 3, 4, true).unwrap();
        assert!(matches!(ck.load_into(&mut wider), Err(Error::ShapeMismatch { .. })));
        let mut no_bias = Linear::<f32>::new(&mut ChaCha8Rng::seed_from_u64(0), 3, 2, true).unwrap();
        let partial = Checkpoint {
            entries: ck.entries[..1].to_vec(),
        };
        assert!(matches!(partial.load_into(&mut no_bias), Err(Error::MissingTensor(_))));
        let mut as_f64 = Linear::<f64>::new(&mut ChaCha8Rng::seed_from_u64(0), 3, 2, true).unwrap();
        assert!(ck.load_into(&mut as_f64).is_err());
    }
}
