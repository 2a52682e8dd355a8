//! ECG burst detection and template subtraction (the TS+IIR pipeline).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iir::{apply_zero_phase, design_butterworth, iir_denoise, moving_average_slice, Band};
use crate::signal::SampleBuffer;
use crate::synthesis::ContaminantLabel;

/// Minimum region length kept by [`detect_ecg`], in seconds.
pub const MIN_REGION_S: f64 = 0.14;

/// A detected ECG burst, `[start, end)` in sample indices of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcgRegion {
    pub start: usize,
    pub end: usize,
}

impl EcgRegion {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }
}

fn odd_window(samples: f64) -> usize {
    (samples / 2.0).round() as usize * 2 + 1
}

/// Finds ECG bursts where a 0.1 s moving average of the rectified signal
/// rises above the 1 s moving average for longer than 0.14 s.
///
/// The rectified signal is zero-padded by 0.5 s on both sides before
/// averaging. Windows are rounded to the nearest odd length (1001 and 101
/// samples at 1 kHz).
pub fn detect_ecg(noisy: &SampleBuffer) -> Vec<EcgRegion> {
    let fs = noisy.fs();
    let pad = (0.5 * fs).round() as usize;
    let n = noisy.len();
    let mut rect = vec![0.0; n + 2 * pad];
    for (r, x) in rect[pad..pad + n].iter_mut().zip(noisy.samples()) {
        *r = x.abs();
    }
    let (Ok(slow), Ok(fast)) = (
        moving_average_slice(&rect, odd_window(fs)),
        moving_average_slice(&rect, odd_window(0.1 * fs)),
    ) else {
        return Vec::new();
    };

    let mut regions = Vec::new();
    let mut open: Option<usize> = None;
    let mut above_prev = false;
    for i in 0..rect.len() {
        let above = fast[i] - slow[i] > 0.0;
        match (above_prev, above, open) {
            (false, true, None) => open = Some(i),
            (true, false, Some(s)) => {
                regions.push((s, i));
                open = None;
            }
            _ => {}
        }
        above_prev = above;
    }
    if let Some(s) = open {
        regions.push((s, rect.len()));
    }

    // Durations are measured after clipping to the unpadded signal.
    regions
        .into_iter()
        .map(|(s, e)| EcgRegion {
            start: s.saturating_sub(pad).min(n),
            end: e.saturating_sub(pad).min(n),
        })
        .filter(|r| r.len() as f64 / fs > MIN_REGION_S)
        .collect()
}

/// Replaces each region by its 50 Hz high-passed version, then high-passes
/// the whole buffer at 40 Hz. Both filters are 4th-order zero-phase
/// Butterworth.
pub fn ts_denoise(noisy: &SampleBuffer, regions: &[EcgRegion]) -> Result<SampleBuffer> {
    let n = noisy.len();
    if let Some(r) = regions.iter().find(|r| r.is_empty() || r.end > n) {
        return Err(Error::BadWindow(format!(
            "region {}..{} outside a buffer of {n} samples",
            r.start, r.end
        )));
    }
    let fs = noisy.fs();
    let mut x = noisy.samples().to_vec();
    if !regions.is_empty() {
        let hp50 = design_butterworth(4, Band::Highpass { cutoff: 50.0 }, fs)?;
        let filtered = apply_zero_phase(&hp50, noisy)?;
        for r in regions {
            x[r.start..r.end].copy_from_slice(&filtered.samples()[r.start..r.end]);
        }
    }
    let hp40 = design_butterworth(4, Band::Highpass { cutoff: 40.0 }, fs)?;
    apply_zero_phase(&hp40, &noisy.derived(x))
}

/// Template subtraction for ECG, the filter table for everything else.
pub fn ts_iir_denoise(noisy: &SampleBuffer, labels: &[ContaminantLabel]) -> Result<SampleBuffer> {
    ts_iir_denoise_regions(noisy, labels).map(|(out, _)| out)
}

/// As [`ts_iir_denoise`], also returning the detected regions.
pub fn ts_iir_denoise_regions(
    noisy: &SampleBuffer,
    labels: &[ContaminantLabel],
) -> Result<(SampleBuffer, Vec<EcgRegion>)> {
    if labels.is_empty() {
        return Err(Error::BadLabelSet("no contaminant labels given".into()));
    }
    let mut out = noisy.clone();
    let mut regions = Vec::new();
    if labels.contains(&ContaminantLabel::Ecg) {
        regions = detect_ecg(noisy);
        out = ts_denoise(noisy, &regions)?;
    }
    let rest: Vec<_> = labels
        .iter()
        .copied()
        .filter(|&l| l != ContaminantLabel::Ecg)
        .collect();
    if !rest.is_empty() {
        out = iir_denoise(&out, &rest)?;
    }
    Ok((out, regions))
}
