//! Signal file format.
//!
//! A signal is stored as `<stem>.f32` holding raw little-endian IEEE-754
//! single-precision samples, next to a `<stem>.json` sidecar of the form
//! `{ "fs": <Hz>, "n": <count> }`. CSV input (one sample per line) is also
//! accepted; its sample rate comes from a sidecar when present and defaults
//! to [`DEFAULT_FS`](super::DEFAULT_FS) otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SampleBuffer, DEFAULT_FS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub fs: f64,
    pub n: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `<stem>.f32` and `<stem>.json`. Returns the path of the sample file.
pub fn write_signal(stem: &Path, buf: &SampleBuffer) -> Result<PathBuf> {
    let data_path = stem.with_extension("f32");
    if let Some(dir) = data_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut bytes = Vec::with_capacity(buf.len() * 4);
    for &s in buf.samples() {
        bytes.extend_from_slice(&(s as f32).to_le_bytes());
    }
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    let side = Sidecar {
        fs: buf.fs(),
        n: buf.len(),
    };
    let side_path = sidecar_path(&data_path);
    fs::write(&side_path, serde_json::to_vec(&side)?).map_err(|e| Error::io(&side_path, e))?;
    Ok(data_path)
}

/// Reads a raw `.f32` signal (sidecar required) or a `.csv` signal.
pub fn read_signal(path: &Path) -> Result<SampleBuffer> {
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        read_csv(path)
    } else {
        read_raw(path)
    }
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let side_path = sidecar_path(path);
    if !side_path.exists() {
        return Ok(None);
    }
    let text = fs::read(&side_path).map_err(|e| Error::io(&side_path, e))?;
    Ok(Some(serde_json::from_slice(&text).map_err(|e| {
        Error::Format {
            path: side_path.clone(),
            msg: e.to_string(),
        }
    })?))
}

fn read_raw(path: &Path) -> Result<SampleBuffer> {
    let side = read_sidecar(path)?.ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        msg: "missing JSON sidecar".into(),
    })?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != side.n * 4 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("sidecar says {} samples, file holds {} bytes", side.n, bytes.len()),
        });
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    SampleBuffer::new(samples, side.fs)
}

fn read_csv(path: &Path) -> Result<SampleBuffer> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        let v: f64 = field.parse().map_err(|_| Error::Format {
            path: path.to_path_buf(),
            msg: format!("line {}: `{field}` is not a number", lineno + 1),
        })?;
        samples.push(v);
    }
    let fs = read_sidecar(path)?.map(|s| s.fs).unwrap_or(DEFAULT_FS);
    SampleBuffer::new(samples, fs)
}
