//! Signal decomposition engines: EMD, CEEMDAN and VMD.

mod ceemdan;
mod emd;
mod spline;
mod vmd;

pub use ceemdan::{ceemdan, CeemdanParams};
pub use emd::emd;
pub use vmd::{initial_freqs, vmd, vmd_with_state, VmdParams, VmdState};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampleBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Emd,
    Ceemdan,
    Vmd,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Emd => "emd",
            Method::Ceemdan => "ceemdan",
            Method::Vmd => "vmd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "emd" => Ok(Method::Emd),
            "ceemdan" => Ok(Method::Ceemdan),
            "vmd" => Ok(Method::Vmd),
            other => Err(Error::InvalidConfig(vec![format!("unknown decomposition `{other}`")])),
        }
    }
}

/// Modes of a decomposition, highest frequency first, plus the residue.
#[derive(Debug, Clone, PartialEq)]
pub struct ImfSet {
    pub imfs: Vec<SampleBuffer>,
    pub residue: SampleBuffer,
    pub method: Method,
    /// VMD centre frequencies in Hz, one per mode.
    pub center_freqs: Option<Vec<f64>>,
}

impl ImfSet {
    pub fn len(&self) -> usize {
        self.imfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imfs.is_empty()
    }

    /// Sum of all modes and the residue.
    pub fn reconstruct(&self) -> SampleBuffer {
        let mut out = self.residue.samples().to_vec();
        for m in &self.imfs {
            out.iter_mut().zip(m.samples()).for_each(|(o, v)| *o += v);
        }
        self.residue.derived(out)
    }
}

/// Settings for any of the three engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum DecompositionParams {
    Emd { max_imfs: usize },
    Ceemdan(CeemdanParams),
    Vmd(VmdParams),
}

impl DecompositionParams {
    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Emd => DecompositionParams::Emd { max_imfs: 8 },
            Method::Ceemdan => DecompositionParams::Ceemdan(CeemdanParams::default()),
            Method::Vmd => DecompositionParams::Vmd(VmdParams::default()),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            DecompositionParams::Emd { .. } => Method::Emd,
            DecompositionParams::Ceemdan(_) => Method::Ceemdan,
            DecompositionParams::Vmd(_) => Method::Vmd,
        }
    }
}

pub fn decompose(buf: &SampleBuffer, params: &DecompositionParams, seed: u64) -> Result<ImfSet> {
    match *params {
        DecompositionParams::Emd { max_imfs } => emd(buf, max_imfs),
        DecompositionParams::Ceemdan(p) => ceemdan(buf, p, seed),
        DecompositionParams::Vmd(p) => vmd(buf, p, seed),
    }
}
