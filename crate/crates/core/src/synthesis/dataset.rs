//! Dataset recipes and the on-disk manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{canonical_set, mix, set_name, Activation, ContaminantLabel, ContaminatedSegment, Split};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::io::{read_signal, write_signal};
use crate::signal::SampleBuffer;

pub const TRAIN_SNRS_DB: [f64; 5] = [1.0, -3.0, -7.0, -11.0, -15.0];
pub const TEST_SNRS_DB: [f64; 5] = [2.0, -2.0, -6.0, -10.0, -14.0];

/// How contaminant sets are assigned to segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SetPlan {
    /// Rotates through 1-, 3- and 5-type mixtures; the specific combination
    /// is drawn from the segment seed.
    Balanced,
    /// Cycles through the listed sets.
    Fixed { sets: Vec<Vec<ContaminantLabel>> },
}

impl SetPlan {
    pub fn validate(&self) -> Vec<String> {
        match self {
            SetPlan::Balanced => Vec::new(),
            SetPlan::Fixed { sets } if sets.is_empty() => vec!["contaminant set list is empty".into()],
            SetPlan::Fixed { sets } => sets
                .iter()
                .filter_map(|s| canonical_set(s).err().map(|e| e.to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub count: usize,
    #[serde(default = "default_fs")]
    pub fs: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    pub snrs_db: Vec<f64>,
    #[serde(default = "default_plan")]
    pub sets: SetPlan,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
}

fn default_fs() -> f64 {
    crate::signal::DEFAULT_FS
}
fn default_duration() -> f64 {
    2.0
}
fn default_plan() -> SetPlan {
    SetPlan::Balanced
}

impl DatasetSpec {
    /// The evaluation-side recipe: test SNRs, balanced sets.
    pub fn test_default(count: usize, seed: u64) -> Self {
        Self {
            count,
            fs: default_fs(),
            duration_s: default_duration(),
            snrs_db: TEST_SNRS_DB.to_vec(),
            sets: SetPlan::Balanced,
            split: Split::Test,
            activation: Activation::default(),
            seed,
        }
    }

    pub fn train_default(count: usize, seed: u64) -> Self {
        Self {
            snrs_db: TRAIN_SNRS_DB.to_vec(),
            split: Split::Train,
            ..Self::test_default(count, seed)
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.count == 0 {
            out.push("dataset count must be positive".into());
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            out.push(format!("sample rate must be positive, got {}", self.fs));
        }
        if !(self.duration_s >= 2.0) {
            out.push(format!("segment duration must be at least 2 s, got {}", self.duration_s));
        }
        if self.snrs_db.is_empty() {
            out.push("SNR list is empty".into());
        }
        for s in &self.snrs_db {
            if !s.is_finite() {
                out.push(format!("SNR value {s} is not finite"));
            }
        }
        out.extend(self.sets.validate());
        out
    }

    /// SNR and contaminant set of segment `index`.
    pub fn assignment(&self, index: usize) -> (f64, Vec<ContaminantLabel>) {
        let n_snr = self.snrs_db.len();
        let snr = self.snrs_db[index % n_snr];
        let round = index / n_snr;
        let set = match &self.sets {
            SetPlan::Fixed { sets } => sets[round % sets.len()].clone(),
            SetPlan::Balanced => {
                let size = [1, 3, 5][round % 3];
                let combos = combinations(size);
                let mut rng = seed::child_rng(self.seed, "set", index as u64);
                combos[rng.gen_range(0..combos.len())].clone()
            }
        };
        (snr, set)
    }

    pub fn segment_seed(&self, index: usize) -> u64 {
        seed::derive(self.seed, "segment", index as u64)
    }

    /// Builds segment `index`.
    pub fn build(&self, index: usize) -> Result<SegmentRecord> {
        let (snr, set) = self.assignment(index);
        let seg_seed = self.segment_seed(index);
        let clean = super::gen_clean(
            seed::derive(seg_seed, "clean", 0),
            self.fs,
            self.duration_s,
            &self.activation,
        )?;
        let segment = mix(&clean, &set, snr, seed::derive(seg_seed, "noise", 0), self.split)?;
        Ok(SegmentRecord {
            id: format!("seg{index:05}"),
            segment,
        })
    }
}

/// All `size`-element label combinations in canonical order.
pub fn combinations(size: usize) -> Vec<Vec<ContaminantLabel>> {
    let all = ContaminantLabel::ALL;
    (0u32..32)
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| {
            all.iter()
                .enumerate()
                .filter(|(i, _)| m & (1 << i) != 0)
                .map(|(_, l)| *l)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub id: String,
    pub segment: ContaminatedSegment,
}

/// Builds every segment of `spec` (in parallel; order follows the index).
pub fn synthesize(spec: &DatasetSpec) -> Result<Vec<SegmentRecord>> {
    use rayon::prelude::*;
    let problems = spec.validate();
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems));
    }
    (0..spec.count).into_par_iter().map(|i| spec.build(i)).collect()
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub snr_db: f64,
    pub labels: Vec<ContaminantLabel>,
    pub set: String,
    pub seed: u64,
    /// Signal files relative to the manifest directory.
    pub clean: String,
    pub noise: String,
    pub noisy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub fs: f64,
    pub spec: Option<DatasetSpec>,
    pub segments: Vec<ManifestEntry>,
}

/// Writes `clean/`, `noise/` and `noisy/` signal files plus `manifest.json`.
pub fn write_dataset(
    dir: &Path,
    spec: Option<&DatasetSpec>,
    records: &[SegmentRecord],
) -> Result<Manifest> {
    let fs_hz = records
        .first()
        .map(|r| r.segment.clean.fs())
        .unwrap_or(crate::signal::DEFAULT_FS);
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let seg = &r.segment;
        let rel = |kind: &str| format!("{kind}/{}.f32", r.id);
        write_signal(&dir.join(kind_stem("clean", &r.id)), &seg.clean)?;
        write_signal(&dir.join(kind_stem("noise", &r.id)), &seg.noise)?;
        write_signal(&dir.join(kind_stem("noisy", &r.id)), &seg.noisy)?;
        entries.push(ManifestEntry {
            id: r.id.clone(),
            snr_db: seg.spec.snr_db,
            labels: seg.spec.components.clone(),
            set: set_name(&seg.spec.components),
            seed: seg.spec.seed,
            clean: rel("clean"),
            noise: rel("noise"),
            noisy: rel("noisy"),
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        fs: fs_hz,
        spec: spec.cloned(),
        segments: entries,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn kind_stem(kind: &str, id: &str) -> PathBuf {
    Path::new(kind).join(id)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("unsupported manifest version {}", m.version),
        });
    }
    Ok(m)
}

/// A manifest entry with its clean and noisy signals loaded.
#[derive(Debug, Clone)]
pub struct LoadedSegment {
    pub entry: ManifestEntry,
    pub clean: SampleBuffer,
    pub noisy: SampleBuffer,
}

pub fn load_segments(manifest_path: &Path) -> Result<Vec<LoadedSegment>> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .segments
        .into_iter()
        .map(|entry| {
            Ok(LoadedSegment {
                clean: read_signal(&base.join(&entry.clean))?,
                noisy: read_signal(&base.join(&entry.noisy))?,
                entry,
            })
        })
        .collect()
}
