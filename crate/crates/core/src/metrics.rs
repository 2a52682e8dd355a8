//! Evaluation metrics: SNR improvement, RMSE, PRD, and the RMSE of the ARV
//! and MF feature vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{energy, stft, SampleBuffer};

/// Feature window: 200 ms at 1 kHz.
pub const FEATURE_WINDOW: usize = 200;
/// MF band limits in Hz.
pub const MF_BAND: (f64, f64) = (10.0, 500.0);
/// Frames whose clean ARV is below this fraction of the maximum are inactive.
pub const ACTIVE_FRACTION: f64 = 0.1;

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `10 log10(sum x^2 / sum (x - y)^2)`.
pub fn snr(clean: &SampleBuffer, other: &SampleBuffer) -> Result<f64> {
    clean.check_compatible(other)?;
    let s = energy(clean.samples());
    if s == 0.0 {
        return Err(Error::ZeroReference);
    }
    let e = sq_err(clean.samples(), other.samples());
    if e == 0.0 {
        return Err(Error::PerfectMatch);
    }
    Ok(10.0 * (s / e).log10())
}

pub fn snr_in(clean: &SampleBuffer, noisy: &SampleBuffer) -> Result<f64> {
    snr(clean, noisy)
}

pub fn snr_out(clean: &SampleBuffer, enhanced: &SampleBuffer) -> Result<f64> {
    snr(clean, enhanced)
}

pub fn rmse(clean: &SampleBuffer, enhanced: &SampleBuffer) -> Result<f64> {
    clean.check_compatible(enhanced)?;
    Ok((sq_err(clean.samples(), enhanced.samples()) / clean.len() as f64).sqrt())
}

/// `100 ||x - y|| / ||x||`, in percent.
pub fn prd(clean: &SampleBuffer, enhanced: &SampleBuffer) -> Result<f64> {
    clean.check_compatible(enhanced)?;
    let s = energy(clean.samples());
    if s == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(100.0 * (sq_err(clean.samples(), enhanced.samples()) / s).sqrt())
}

/// Per-frame feature values on a non-overlapping frame grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub frame_len: usize,
    /// Frames that take part in comparisons; `None` means all of them.
    pub active_mask: Option<Vec<bool>>,
    /// Active frames dropped because their spectrum was empty.
    pub degenerate: usize,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active_mask.as_ref().is_none_or(|m| m[i])
    }
}

fn frames(buf: &SampleBuffer, window: usize) -> Result<std::slice::ChunksExact<'_, f64>> {
    if window == 0 || window > buf.len() {
        return Err(Error::BadWindow(format!(
            "feature window must be in 1..={}, got {window}",
            buf.len()
        )));
    }
    Ok(buf.samples().chunks_exact(window))
}

/// Average rectified value per frame.
pub fn arv_vector(buf: &SampleBuffer, window: usize) -> Result<FeatureVector> {
    let values = frames(buf, window)?
        .map(|f| f.iter().map(|v| v.abs()).sum::<f64>() / window as f64)
        .collect();
    Ok(FeatureVector {
        values,
        frame_len: window,
        active_mask: None,
        degenerate: 0,
    })
}

/// Frames of `reference` whose ARV exceeds 10% of its largest frame ARV.
pub fn activation_mask(reference: &SampleBuffer, window: usize) -> Result<Vec<bool>> {
    let arv = arv_vector(reference, window)?.values;
    let peak = arv.iter().cloned().fold(0.0, f64::max);
    Ok(arv.iter().map(|&a| peak > 0.0 && a > ACTIVE_FRACTION * peak).collect())
}

/// Mean frequency per frame: amplitude-weighted mean over 10-500 Hz of the
/// frame's amplitude spectrum. Frames inactive in `reference` are masked.
pub fn mf_vector(buf: &SampleBuffer, reference: &SampleBuffer, window: usize) -> Result<FeatureVector> {
    buf.check_compatible(reference)?;
    let mut mask = activation_mask(reference, window)?;
    let mut values = Vec::with_capacity(mask.len());
    let mut degenerate = 0;
    for frame in stft(buf, window) {
        let (mut num, mut den) = (0.0, 0.0);
        for (&f, &s) in frame.frequencies.iter().zip(&frame.amplitudes) {
            if (MF_BAND.0..=MF_BAND.1).contains(&f) {
                num += f * s;
                den += s;
            }
        }
        if den > 0.0 {
            values.push(num / den);
        } else {
            values.push(0.0);
            if mask[frame.frame_index] {
                mask[frame.frame_index] = false;
                degenerate += 1;
            }
        }
    }
    Ok(FeatureVector {
        values,
        frame_len: window,
        active_mask: Some(mask),
        degenerate,
    })
}

/// RMSE over the frames active in both vectors.
pub fn feature_rmse(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.len() != b.len() || a.frame_len != b.frame_len {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..a.len() {
        if a.is_active(i) && b.is_active(i) {
            sum += (a.values[i] - b.values[i]).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoComparableFrames);
    }
    Ok((sum / count as f64).sqrt())
}

/// All metrics of one enhanced segment. `None` marks an undefined value
/// (perfect reconstruction for the SNR, no comparable frames for MF).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub id: String,
    pub method: String,
    pub contaminants: String,
    pub snr_level: f64,
    pub snr_in: f64,
    pub snr_out: Option<f64>,
    pub snr_imp: Option<f64>,
    pub rmse: f64,
    pub prd: f64,
    pub rmse_arv: f64,
    pub rmse_mf: Option<f64>,
}

/// Group keys carried into a [`MetricReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportKeys {
    pub id: String,
    pub method: String,
    pub contaminants: String,
    pub snr_level: f64,
}

/// Scores `enhanced` against `clean`, with `noisy` as the input reference.
pub fn evaluate(
    clean: &SampleBuffer,
    noisy: &SampleBuffer,
    enhanced: &SampleBuffer,
    keys: ReportKeys,
) -> Result<MetricReport> {
    clean.check_compatible(noisy)?;
    clean.check_compatible(enhanced)?;
    let snr_in = snr_in(clean, noisy)?;
    let snr_out = match snr_out(clean, enhanced) {
        Ok(v) => Some(v),
        Err(Error::PerfectMatch) => None,
        Err(e) => return Err(e),
    };
    let window = FEATURE_WINDOW.min(clean.len());
    let rmse_arv = feature_rmse(&arv_vector(clean, window)?, &arv_vector(enhanced, window)?)?;
    let rmse_mf = match feature_rmse(&mf_vector(clean, clean, window)?, &mf_vector(enhanced, clean, window)?) {
        Ok(v) => Some(v),
        Err(Error::NoComparableFrames) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        id: keys.id,
        method: keys.method,
        contaminants: keys.contaminants,
        snr_level: keys.snr_level,
        snr_in,
        snr_imp: snr_out.map(|o| o - snr_in),
        snr_out,
        rmse: rmse(clean, enhanced)?,
        prd: prd(clean, enhanced)?,
        rmse_arv,
        rmse_mf,
    })
}

/// Mean and sample standard deviation of one metric over a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    /// `"all"` or a contaminant set such as `"bw+pli"`.
    pub contaminants: String,
    /// `None` pools every SNR level.
    pub snr_level: Option<f64>,
    pub count: usize,
    pub snr_imp: Option<Stat>,
    pub rmse: Option<Stat>,
    pub prd: Option<Stat>,
    pub rmse_arv: Option<Stat>,
    pub rmse_mf: Option<Stat>,
}

fn row(method: &str, contaminants: &str, snr_level: Option<f64>, group: &[&MetricReport]) -> AggregateRow {
    AggregateRow {
        method: method.to_string(),
        contaminants: contaminants.to_string(),
        snr_level,
        count: group.len(),
        snr_imp: Stat::of(group.iter().filter_map(|r| r.snr_imp)),
        rmse: Stat::of(group.iter().map(|r| r.rmse)),
        prd: Stat::of(group.iter().map(|r| r.prd)),
        rmse_arv: Stat::of(group.iter().map(|r| r.rmse_arv)),
        rmse_mf: Stat::of(group.iter().filter_map(|r| r.rmse_mf)),
    }
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Groups reports by method, then within each method pools everything, splits
/// by SNR level and splits by contaminant set. Order follows first
/// appearance in `reports`.
pub fn aggregate(reports: &[MetricReport]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for method in first_seen(reports.iter().map(|r| r.method.clone())) {
        let mine: Vec<&MetricReport> = reports.iter().filter(|r| r.method == method).collect();
        out.push(row(&method, "all", None, &mine));
        for level in first_seen(mine.iter().map(|r| r.snr_level)) {
            let g: Vec<_> = mine.iter().copied().filter(|r| r.snr_level == level).collect();
            out.push(row(&method, "all", Some(level), &g));
        }
        for set in first_seen(mine.iter().map(|r| r.contaminants.clone())) {
            let g: Vec<_> = mine.iter().copied().filter(|r| r.contaminants == set).collect();
            out.push(row(&method, &set, None, &g));
        }
    }
    out
}
