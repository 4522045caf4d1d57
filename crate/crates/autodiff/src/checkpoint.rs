//! Parameter checkpoints.
//!
//! Layout (little-endian): magic `MLSP`, u32 version, u32 count, then per
//! parameter: u16 name length, name bytes, u8 rank, rank x u32 dims,
//! product(dims) x f32 values.

use std::fs;
use std::path::Path;

use crate::error::{invalid, AutodiffError, Result};
use crate::params::ParameterStore;
use crate::real::Real;
use crate::tensor::{numel, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MLSP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

pub fn encode_checkpoint<T: Real>(store: &ParameterStore<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + store.numel() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let value = store.value(id);
        let name_len = u16::try_from(name.len()).map_err(|_| {
            AutodiffError::InvalidArgument(format!("parameter name too long: {}", store.name(id)))
        })?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(value.shape().len() as u8);
        for &d in value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in value.data() {
            out.extend_from_slice(&(v.widen() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_checkpoint<T: Real>(store: &ParameterStore<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(store)?)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(AutodiffError::Format {
                offset: self.pos as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<CheckpointEntry>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(AutodiffError::Format { offset: 0, reason: "bad magic, expected MLSP".into() });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(AutodiffError::Format { offset: 4, reason: format!("unsupported version {version}") });
    }
    let count = r.u32("count")?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_at = r.pos as u64;
        let name_len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
            .map_err(|_| AutodiffError::Format { offset: name_at, reason: "parameter name is not utf-8".into() })?;
        let rank = r.take(1, "rank")?[0] as usize;
        let shape = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = numel(&shape);
        let data_at = r.pos as u64;
        let raw = r.take(n * 4, "values")?;
        let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AutodiffError::Format {
                offset: data_at + 4 * i as u64,
                reason: format!("non-finite value in {name}"),
            });
        }
        entries.push(CheckpointEntry { name, shape, values });
    }
    if r.pos != bytes.len() {
        return Err(AutodiffError::Format { offset: r.pos as u64, reason: "trailing bytes".into() });
    }
    Ok(entries)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Vec<CheckpointEntry>> {
    decode_checkpoint(&fs::read(path)?)
}

/// Overwrites every parameter of `store` from `entries`; names, order and
/// shapes must match exactly.
pub fn load_into<T: Real>(store: &mut ParameterStore<T>, entries: &[CheckpointEntry]) -> Result<()> {
    if entries.len() != store.len() {
        return invalid(format!("checkpoint has {} parameters, model expects {}", entries.len(), store.len()));
    }
    for (id, e) in store.ids().collect::<Vec<_>>().into_iter().zip(entries) {
        if store.name(id) != e.name || store.value(id).shape() != e.shape.as_slice() {
            return invalid(format!(
                "checkpoint parameter {} {:?} does not match model parameter {} {:?}",
                e.name,
                e.shape,
                store.name(id),
                store.value(id).shape()
            ));
        }
        let t = Tensor::new(e.shape.clone(), e.values.iter().map(|&v| T::cast(v as f64)).collect())?;
        *store.value_mut(id) = t;
    }
    Ok(())
}
