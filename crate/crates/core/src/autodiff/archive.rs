//! Binary container for named tensors plus string metadata.
//!
//! Layout (little endian): magic `PCUPCKPT`, `u32` version, `u32` meta count,
//! then `(u32 len, bytes)` key/value pairs, `u32` tensor count, and per tensor
//! its name, `u32` rank, `u64` dims and raw `f64` data.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Parameters, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PCUPCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let n = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("invalid utf-8 string".into()))
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("malformed metadata `{key}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    /// Stores every parameter under `prefix` + its name.
    pub fn store(&mut self, prefix: &str, params: &dyn Parameters) {
        params.visit(&mut |name, t| {
            self.tensors.insert(format!("{prefix}{name}"), t.clone());
        });
    }

    /// Overwrites every parameter from tensors stored by [`Archive::store`].
    pub fn restore_into(&self, prefix: &str, params: &mut dyn Parameters) -> Result<()> {
        let mut err = None;
        params.visit_mut(&mut |name, t| {
            if err.is_some() {
                return;
            }
            match self.tensor(&format!("{prefix}{name}")) {
                Ok(saved) if saved.shape() == t.shape() => *t = saved.clone(),
                Ok(saved) => {
                    err = Some(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, expected {:?}",
                        saved.shape(),
                        t.shape()
                    )))
                }
                Err(e) => err = Some(e),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(self.meta.len() as u32)?;
        for (k, v) in &self.meta {
            write_str(w, k)?;
            write_str(w, v)?;
        }
        w.write_u32::<LE>(self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            write_str(w, name)?;
            w.write_u32::<LE>(t.ndim() as u32)?;
            for &d in t.shape() {
                w.write_u64::<LE>(d as u64)?;
            }
            for &v in t.data() {
                w.write_f64::<LE>(v)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut archive = Archive::new();
        for _ in 0..r.read_u32::<LE>()? {
            let k = read_str(r)?;
            let v = read_str(r)?;
            archive.meta.insert(k, v);
        }
        for _ in 0..r.read_u32::<LE>()? {
            let name = read_str(r)?;
            let rank = r.read_u32::<LE>()? as usize;
            let shape = (0..rank)
                .map(|_| r.read_u64::<LE>().map(|d| d as usize))
                .collect::<std::io::Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut data = vec![0.0; n];
            r.read_f64_into::<LE>(&mut data)?;
            archive.tensors.insert(name, Tensor::new(shape, data)?);
        }
        Ok(archive)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes).map_err(|e| match e {
            Error::Io(_) => Error::Checkpoint("truncated checkpoint".into()),
            e => e,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
