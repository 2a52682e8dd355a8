//! Weights file: `EMGNNW\0\0`, u32 version, u32-prefixed config JSON, u32
//! tensor count, then per tensor a u32-prefixed name, a dtype byte, a u32
//! rank, u64 dims and little-endian f64 data.

use std::fs;
use std::path::Path;

use super::model::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EMGNNW\0\0";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

pub fn encode_params(params: &ModelParams, config: &ModelConfig) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(config).expect("config serializes");
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t, _) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F64);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_params(path: &Path, params: &ModelParams, config: &ModelConfig) -> Result<()> {
    fs::write(path, encode_params(params, config)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::BadMagic(format!("file truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a weights file and the configuration stored in it.
pub fn decode_params(bytes: &[u8]) -> Result<(ModelConfig, ModelParams)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::BadMagic("not a weights file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::BadMagic(format!("unsupported weights version {version}")));
    }
    let n = r.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(n)?).map_err(|e| Error::BadMagic(format!("bad config block: {e}")))?;
    let mut params = ModelParams::init(&config)?;
    let count = r.u32()? as usize;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(Error::ShapeMismatch(format!("{count} tensors in file, model has {}", slots.len())));
    }
    for (name, t, _) in slots.iter_mut() {
        let len = r.u32()? as usize;
        let got = String::from_utf8_lossy(r.take(len)?).into_owned();
        if &got != name {
            return Err(Error::ShapeMismatch(format!("expected tensor {name}, found {got}")));
        }
        if r.take(1)?[0] != DTYPE_F64 {
            return Err(Error::BadMagic(format!("unsupported dtype for {name}")));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != t.shape {
            return Err(Error::ShapeMismatch(format!("{name}: file {shape:?}, model {:?}", t.shape)));
        }
        for v in t.data.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    drop(slots);
    if r.pos != bytes.len() {
        return Err(Error::BadMagic("trailing bytes after the last tensor".into()));
    }
    Ok((config, params))
}

/// Reads a weights file, requiring its tensors to fit `expected`.
pub fn load_params(path: &Path, expected: &ModelConfig) -> Result<ModelParams> {
    let (config, params) = read_params(path)?;
    let template = ModelParams::init(expected)?;
    for ((name, a, _), (_, b, _)) in template.tensors().into_iter().zip(params.tensors()) {
        if a.shape != b.shape {
            return Err(Error::ShapeMismatch(format!("{name}: file {:?}, config {:?}", b.shape, a.shape)));
        }
    }
    if template.tensors().len() != params.tensors().len() || config.input_len != expected.input_len {
        return Err(Error::ShapeMismatch(format!(
            "weights are for d = {}, heads = {}; config wants d = {}, heads = {}",
            config.input_len, config.heads, expected.input_len, expected.heads
        )));
    }
    Ok(params)
}

/// Reads a weights file with the configuration stored in it.
pub fn read_params(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes)
}
