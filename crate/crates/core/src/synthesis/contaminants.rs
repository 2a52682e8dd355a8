use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ContaminantLabel;
use crate::error::{Error, Result};
use crate::iir::{apply_zero_phase, band_limited, design_butterworth, moving_average, Band};
use crate::seed;
use crate::signal::{normalize_max_abs, SampleBuffer};

/// Dataset side. Only the power-line frequency grid differs between sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
}

/// Muscle activation envelope applied to the surrogate clean signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Activation {
    Constant,
    /// Contraction/rest cadence compressed so one period spans the whole
    /// segment: half the rest, a trapezoidal contraction, the other half of
    /// the rest. `ramp` is the fraction of the contraction spent on each
    /// ramp; `floor` is the envelope level at rest.
    Cadence {
        on_s: f64,
        off_s: f64,
        ramp: f64,
        floor: f64,
    },
    /// Explicit per-sample envelope (must match the segment length).
    Custom { envelope: Vec<f64> },
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Cadence {
            on_s: 5.0,
            off_s: 3.0,
            ramp: 0.1,
            floor: 0.05,
        }
    }
}

impl Activation {
    pub fn envelope(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Activation::Constant => Ok(vec![1.0; n]),
            Activation::Custom { envelope } => {
                if envelope.len() != n {
                    return Err(Error::LengthMismatch {
                        left: n,
                        right: envelope.len(),
                    });
                }
                Ok(envelope.clone())
            }
            &Activation::Cadence {
                on_s,
                off_s,
                ramp,
                floor,
            } => {
                let period = on_s + off_s;
                let start = 0.5 * off_s / period;
                let on = on_s / period;
                let ramp = (ramp * on).max(f64::EPSILON);
                Ok((0..n)
                    .map(|i| {
                        let t = (i as f64 + 0.5) / n as f64 - start;
                        let level = if t <= 0.0 || t >= on {
                            0.0
                        } else {
                            (t / ramp).min((on - t) / ramp).min(1.0)
                        };
                        floor + (1.0 - floor) * level
                    })
                    .collect())
            }
        }
    }
}

fn sample_count(fs: f64, duration: f64) -> Result<usize> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::BadRate(fs));
    }
    if !(duration.is_finite() && duration >= 2.0 - 1e-9) {
        return Err(Error::BadDuration(duration));
    }
    Ok((duration * fs).round() as usize)
}

fn white(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Surrogate clean sEMG: band-limited Gaussian noise shaped by an activation
/// envelope, normalized to unit peak.
pub fn gen_clean(seed: u64, fs: f64, duration: f64, activation: &Activation) -> Result<SampleBuffer> {
    let n = sample_count(fs, duration)?;
    let mut rng = seed::rng(seed);
    let raw = SampleBuffer::new(white(&mut rng, n), fs)?;
    let band = band_limited(4, 20.0, 500.0, fs)?;
    let filtered = apply_zero_phase(&band, &raw)?;
    let env = activation.envelope(n)?;
    let shaped = filtered
        .samples()
        .iter()
        .zip(&env)
        .map(|(s, e)| s * e)
        .collect();
    normalize_max_abs(&SampleBuffer::new(shaped, fs)?)
}

/// Power-line frequencies a split draws from.
pub fn pli_frequency_grid(split: Split) -> Vec<f64> {
    match split {
        Split::Train => (0..=15).map(|i| 58.4 + 0.2 * i as f64).collect(),
        Split::Test => (0..=7).map(|i| 58.8 + 0.375 * i as f64).collect(),
    }
}

/// Synthetic ECG and the sample indices of its R peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgTrain {
    pub signal: SampleBuffer,
    pub r_peaks: Vec<usize>,
}

// (offset from R in s, amplitude, width in s) for P, Q, R, S, T.
const ECG_WAVES: [(f64, f64, f64); 5] = [
    (-0.20, 0.12, 0.025),
    (-0.035, -0.12, 0.010),
    (0.0, 1.0, 0.012),
    (0.035, -0.25, 0.010),
    (0.28, 0.30, 0.045),
];

/// Beat train at a uniform 60-100 bpm with up to 5% beat-to-beat jitter.
pub fn gen_ecg(seed: u64, fs: f64, duration: f64) -> Result<EcgTrain> {
    let n = sample_count(fs, duration)?;
    let mut rng = seed::rng(seed);
    let bpm: f64 = rng.gen_range(60.0..=100.0);
    let rr = 60.0 / bpm;
    let end = n as f64 / fs;
    let mut beats = Vec::new();
    let mut t = rng.gen_range(0.0..rr) - rr;
    while t < end + rr {
        beats.push(t);
        t += rr * (1.0 + rng.gen_range(-0.05..=0.05));
    }
    let mut x = vec![0.0; n];
    for &r in &beats {
        for &(offset, amp, width) in &ECG_WAVES {
            let centre = r + offset;
            let lo = (((centre - 5.0 * width) * fs).floor().max(0.0)) as usize;
            let hi = (((centre + 5.0 * width) * fs).ceil().max(0.0) as usize).min(n);
            for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
                let d = (i as f64 / fs - centre) / width;
                *v += amp * (-0.5 * d * d).exp();
            }
        }
    }
    let r_peaks = beats
        .iter()
        .map(|r| (r * fs).round())
        .filter(|&i| i >= 0.0 && (i as usize) < n)
        .map(|i| i as usize)
        .collect();
    Ok(EcgTrain {
        signal: SampleBuffer::new(x, fs)?,
        r_peaks,
    })
}

fn gen_moa(rng: &mut impl Rng, n: usize, fs: f64) -> Result<SampleBuffer> {
    let end = n as f64 / fs;
    let gap = Exp::new(1.0).expect("rate is positive");
    let mut onsets = Vec::new();
    let mut t: f64 = gap.sample(rng);
    while t < end {
        onsets.push(t);
        t += gap.sample(rng);
    }
    if onsets.is_empty() {
        onsets.push(rng.gen_range(0.0..end));
    }
    let mut x = vec![0.0; n];
    for onset in onsets {
        let width: f64 = rng.gen_range(0.05..=0.15);
        let amp: f64 = rng.gen_range(0.5..=1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let lo = (onset * fs).floor() as usize;
        let hi = (((onset + width) * fs).ceil() as usize).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            let phase = (i as f64 / fs - onset) / width;
            if (0.0..=1.0).contains(&phase) {
                *v += amp * (2.0 * PI * phase).sin();
            }
        }
    }
    let lp = design_butterworth(4, Band::Lowpass { cutoff: 20.0 }, fs)?;
    apply_zero_phase(&lp, &SampleBuffer::new(x, fs)?)
}

/// Preprocessing for recorded electrode-tapping artifacts: 51-point moving
/// average.
pub fn moa_from_recording(recording: &SampleBuffer) -> Result<SampleBuffer> {
    moving_average(recording, 51)
}

/// One contaminant realization.
///
/// * PLI: fixed-frequency sinusoid from the split's grid, random phase.
/// * WGN: i.i.d. standard normal samples.
/// * BW: white noise through a 4th-order 1 Hz low-pass.
/// * ECG: see [`gen_ecg`].
/// * MOA: Poisson (1/s) biphasic bursts 50-150 ms wide, low-passed at 20 Hz;
///   at least one burst per segment.
pub fn gen_contaminant(
    label: ContaminantLabel,
    seed: u64,
    fs: f64,
    duration: f64,
    split: Split,
) -> Result<SampleBuffer> {
    let n = sample_count(fs, duration)?;
    let mut rng = seed::rng(seed);
    match label {
        ContaminantLabel::Pli => {
            let grid = pli_frequency_grid(split);
            let f = grid[rng.gen_range(0..grid.len())];
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            let x = (0..n)
                .map(|i| (2.0 * PI * f * i as f64 / fs + phase).sin())
                .collect();
            SampleBuffer::new(x, fs)
        }
        ContaminantLabel::Wgn => SampleBuffer::new(white(&mut rng, n), fs),
        ContaminantLabel::Bw => {
            let lp = design_butterworth(4, Band::Lowpass { cutoff: 1.0 }, fs)?;
            apply_zero_phase(&lp, &SampleBuffer::new(white(&mut rng, n), fs)?)
        }
        ContaminantLabel::Ecg => gen_ecg(seed, fs, duration).map(|e| e.signal),
        ContaminantLabel::Moa => gen_moa(&mut rng, n, fs),
    }
}
