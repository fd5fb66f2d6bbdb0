//! Self-describing binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "NRCKPT01"
//! seed       u64
//! step       u64
//! count      u32      number of entries
//! entry*     kind u8 (0 = f64 tensor, 1 = UTF-8 text)
//!            name_len u32, name bytes (UTF-8)
//!            tensor: ndim u32, ndim × u64 extents, Π extents × f64 payload
//!            text:   len u64, bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NRCKPT01";

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Tensor { name: String, tensor: Tensor },
    Text { name: String, text: String },
}

impl Entry {
    pub fn name(&self) -> &str {
        match self {
            Entry::Tensor { name, .. } | Entry::Text { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new(seed: u64, step: u64) -> Self {
        Checkpoint {
            seed,
            step,
            entries: Vec::new(),
        }
    }

    /// Appends every parameter of `store` under `prefix`.
    pub fn push_params(&mut self, prefix: &str, store: &ParamStore) {
        for (_, p) in store.iter() {
            self.entries.push(Entry::Tensor {
                name: format!("{prefix}{}", p.name),
                tensor: p.tensor.clone(),
            });
        }
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push(Entry::Tensor {
            name: name.into(),
            tensor,
        });
    }

    pub fn push_text(&mut self, name: impl Into<String>, text: impl Into<String>) {
        self.entries.push(Entry::Text {
            name: name.into(),
            text: text.into(),
        });
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find_map(|e| match e {
            Entry::Tensor { name: n, tensor } if n == name => Some(tensor),
            _ => None,
        })
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.entries.iter().find_map(|e| match e {
            Entry::Text { name: n, text } if n == name => Some(text.as_str()),
            _ => None,
        })
    }

    /// Overwrites every parameter of `store` from entries named `prefix + name`.
    pub fn restore_params(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = format!("{prefix}{}", store.param(id).name);
            let t = self
                .tensor(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if t.shape() != store.get(id).shape() {
                return Err(Error::shape("restore_params", store.get(id).shape(), t.shape()));
            }
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            let kind: u8 = match e {
                Entry::Tensor { .. } => 0,
                Entry::Text { .. } => 1,
            };
            w.write_all(&[kind])?;
            let name = e.name().as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            match e {
                Entry::Tensor { tensor, .. } => {
                    w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
                    for &d in tensor.shape() {
                        w.write_all(&(d as u64).to_le_bytes())?;
                    }
                    for v in tensor.data() {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                Entry::Text { text, .. } => {
                    w.write_all(&(text.len() as u64).to_le_bytes())?;
                    w.write_all(text.as_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |what: &str| Error::Checkpoint(what.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let seed = read_u64(r)?;
        let step = read_u64(r)?;
        let count = read_u32(r)?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind).map_err(|_| bad("truncated entry"))?;
            let name_len = read_u32(r)? as usize;
            let name = String::from_utf8(read_bytes(r, name_len)?).map_err(|_| bad("entry name is not UTF-8"))?;
            match kind[0] {
                0 => {
                    let ndim = read_u32(r)? as usize;
                    let shape = (0..ndim)
                        .map(|_| read_u64(r).map(|d| d as usize))
                        .collect::<Result<Vec<_>>>()?;
                    let n: usize = shape.iter().product();
                    let bytes = read_bytes(r, n * 8)?;
                    let data = bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    let tensor = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("entry `{name}`: {e}")))?;
                    entries.push(Entry::Tensor { name, tensor });
                }
                1 => {
                    let len = read_u64(r)? as usize;
                    let text = String::from_utf8(read_bytes(r, len)?).map_err(|_| bad("text entry is not UTF-8"))?;
                    entries.push(Entry::Text { name, text });
                }
                k => return Err(Error::Checkpoint(format!("unknown entry kind {k}"))),
            }
        }
        Ok(Checkpoint { seed, step, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::read_from(&mut BufReader::new(file))
    }
}

fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if buf.len() != n {
        return Err(Error::Checkpoint("truncated payload".into()));
    }
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let b = read_bytes(r, 4)?;
    Ok(u32::from_le_bytes(b.try_into().unwrap()))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let b = read_bytes(r, 8)?;
    Ok(u64::from_le_bytes(b.try_into().unwrap()))
}
