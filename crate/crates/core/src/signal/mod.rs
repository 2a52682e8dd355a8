//! Core signal types and the spectral utilities every other module builds on.
//!
//! All arithmetic is done in `f64`. Functions here are pure and allocate
//! their outputs.

mod fft;
pub mod io;

pub use fft::{fft_real, ifft_real, Fft};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate used throughout the workbench unless a file says otherwise.
pub const DEFAULT_FS: f64 = 1000.0;

/// A finite, non-empty run of real samples at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    samples: Vec<f64>,
    fs: f64,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::BadRate(fs));
        }
        if samples.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { samples, fs })
    }

    pub fn zeros(len: usize, fs: f64) -> Result<Self> {
        Self::new(vec![0.0; len], fs)
    }

    /// Builds a buffer sharing this buffer's sample rate.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.fs)
    }

    /// Same as [`with_samples`](Self::with_samples) for values produced by
    /// internal arithmetic that is known to stay finite and non-empty.
    pub(crate) fn derived(&self, samples: Vec<f64>) -> Self {
        debug_assert!(!samples.is_empty());
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            fs: self.fs,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        std_dev(&self.samples)
    }

    pub(crate) fn check_compatible(&self, other: &SampleBuffer) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        if self.fs != other.fs {
            return Err(Error::RateMismatch {
                left: self.fs,
                right: other.fs,
            });
        }
        Ok(())
    }
}

pub(crate) fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub(crate) fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// One frame of a short-time amplitude spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StftFrame {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub frame_index: usize,
    pub window_len: usize,
}

/// One-sided magnitude spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    /// Frequency of the largest magnitude. Ties go to the lowest frequency.
    pub fn peak_frequency(&self) -> f64 {
        let mut best = 0;
        for (i, &m) in self.magnitudes.iter().enumerate() {
            if m > self.magnitudes[best] {
                best = i;
            }
        }
        self.frequencies[best]
    }
}

/// Divides every sample by the largest absolute sample.
pub fn normalize_max_abs(buf: &SampleBuffer) -> Result<SampleBuffer> {
    let peak = buf.max_abs();
    if peak == 0.0 {
        return Err(Error::AllZero);
    }
    Ok(buf.derived(buf.samples.iter().map(|s| s / peak).collect()))
}

/// Splits into non-overlapping segments of `seg_len`, dropping the remainder.
pub fn segment(buf: &SampleBuffer, seg_len: usize) -> Vec<SampleBuffer> {
    if seg_len == 0 {
        return Vec::new();
    }
    buf.samples
        .chunks_exact(seg_len)
        .map(|c| buf.derived(c.to_vec()))
        .collect()
}

/// Sum of squared samples.
pub fn power(buf: &SampleBuffer) -> f64 {
    energy(&buf.samples)
}

/// One-sided magnitude spectrum over `[0, fs/2]` at the native resolution
/// `fs / len` (no zero-padding, so a tone with a whole number of cycles
/// lands on exactly one bin).
pub fn spectrum(buf: &SampleBuffer) -> Spectrum {
    let n = buf.len();
    let spec = fft_real(&buf.samples);
    let bins = n / 2 + 1;
    let df = buf.fs / n as f64;
    Spectrum {
        frequencies: (0..bins).map(|k| k as f64 * df).collect(),
        magnitudes: spec[..bins].iter().map(|c| c.norm()).collect(),
    }
}

/// Frequency with the largest spectral magnitude (f_max).
pub fn fmax(buf: &SampleBuffer) -> f64 {
    spectrum(buf).peak_frequency()
}

/// Rectangular, non-overlapping short-time amplitude spectra.
///
/// Amplitudes are `|X_k| / window_len`; bins run from DC to the largest
/// frequency not above `fs/2`.
pub fn stft(buf: &SampleBuffer, window_len: usize) -> Vec<StftFrame> {
    if window_len == 0 || window_len > buf.len() {
        return Vec::new();
    }
    let plan = Fft::new(window_len);
    let bins = window_len / 2 + 1;
    let df = buf.fs / window_len as f64;
    let frequencies: Vec<f64> = (0..bins).map(|k| k as f64 * df).collect();
    buf.samples
        .chunks_exact(window_len)
        .enumerate()
        .map(|(frame_index, chunk)| {
            let spec = plan.forward_real(chunk);
            StftFrame {
                frequencies: frequencies.clone(),
                amplitudes: spec[..bins]
                    .iter()
                    .map(|c| c.norm() / window_len as f64)
                    .collect(),
                frame_index,
                window_len,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn buf(v: &[f64]) -> SampleBuffer {
        SampleBuffer::new(v.to_vec(), DEFAULT_FS).unwrap()
    }

    fn tone(freq: f64, amp: f64, n: usize, fs: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    // Direct O(n^2) DFT, kept independent of the FFT path.
    fn naive_dft_mag(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(SampleBuffer::new(vec![], 1.0), Err(Error::Empty)));
        assert!(matches!(
            SampleBuffer::new(vec![1.0, f64::NAN], 1.0),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(matches!(
            SampleBuffer::new(vec![1.0], 0.0),
            Err(Error::BadRate(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let out = normalize_max_abs(&buf(&[1.0, -2.0, 0.5])).unwrap();
        assert_eq!(out.samples(), &[0.5, -1.0, 0.25]);
        assert_eq!(normalize_max_abs(&buf(&[0.3])).unwrap().samples(), &[1.0]);
        assert!(matches!(
            normalize_max_abs(&buf(&[0.0, 0.0, 0.0])),
            Err(Error::AllZero)
        ));
    }

    #[test]
    fn segment_examples() {
        let b = SampleBuffer::zeros(5000, DEFAULT_FS).unwrap();
        let segs = segment(&b, 2000);
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.len() == 2000));
        assert_eq!(segment(&SampleBuffer::zeros(2000, 1.0).unwrap(), 2000).len(), 1);
        assert!(segment(&SampleBuffer::zeros(1999, 1.0).unwrap(), 2000).is_empty());
    }

    #[test]
    fn power_examples() {
        assert_eq!(power(&buf(&[1.0; 4])), 4.0);
        assert_eq!(power(&buf(&[0.0; 7])), 0.0);
        let p = power(&buf(&tone(13.0, 1.0, 1000, 1000.0)));
        assert!((p - 500.0).abs() <= 1.0, "{p}");
    }

    #[test]
    fn fmax_examples() {
        assert_eq!(fmax(&buf(&tone(60.0, 1.0, 2000, 1000.0))), 60.0);
        assert_eq!(fmax(&buf(&[0.7; 300])), 0.0);
        let mixed: Vec<f64> = tone(30.0, 1.0, 2000, 1000.0)
            .iter()
            .zip(tone(100.0, 2.0, 2000, 1000.0))
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(fmax(&buf(&mixed)), 100.0);
    }

    #[test]
    fn fmax_exact_for_short_bin_aligned_tone() {
        assert_eq!(fmax(&buf(&tone(40.0, 1.0, 250, 1000.0))), 40.0);
        assert_eq!(fmax(&buf(&tone(10.0, 1.0, 100, 1000.0))), 10.0);
    }

    #[test]
    fn spectrum_matches_naive_dft() {
        let x: Vec<f64> = (0..1024).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let s = spectrum(&buf(&x));
        let oracle = naive_dft_mag(&x);
        for (a, b) in s.magnitudes.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b));
        }
    }

    #[test]
    fn stft_examples() {
        let b = buf(&tone(100.0, 1.0, 2000, 1000.0));
        let frames = stft(&b, 200);
        assert_eq!(frames.len(), 10);
        for f in &frames {
            let peak = f
                .amplitudes
                .iter()
                .enumerate()
                .fold(0, |best, (i, &a)| if a > f.amplitudes[best] { i } else { best });
            assert_eq!(f.frequencies[peak], 100.0);
            assert!(f.frequencies.windows(2).all(|w| w[0] < w[1]));
            assert!(*f.frequencies.last().unwrap() <= 500.0);
        }
        let zeros = stft(&SampleBuffer::zeros(400, 1000.0).unwrap(), 200);
        assert!(zeros.iter().all(|f| f.amplitudes.iter().all(|&a| a == 0.0)));
    }

    #[test]
    fn stft_frame_matches_naive_dft() {
        let x: Vec<f64> = (0..400).map(|i| ((i as f64) * 0.37).sin() + 0.1 * i as f64 / 400.0).collect();
        let frames = stft(&buf(&x), 200);
        for f in &frames {
            let chunk = &x[f.frame_index * 200..(f.frame_index + 1) * 200];
            let oracle = naive_dft_mag(chunk);
            for (k, a) in f.amplitudes.iter().enumerate() {
                assert!((a - oracle[k] / 200.0).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn parseval(x in prop::collection::vec(-10.0f64..10.0, 1..300)) {
            let spec = fft_real(&x);
            let lhs: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64;
            let rhs = energy(&x);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-300));
        }

        #[test]
        fn segment_concat_is_prefix(x in prop::collection::vec(-1.0f64..1.0, 1..200), seg in 1usize..50) {
            let b = buf(&x);
            let joined: Vec<f64> = segment(&b, seg).into_iter().flat_map(|s| s.into_samples()).collect();
            prop_assert_eq!(&joined[..], &x[..(x.len() / seg) * seg]);
        }

        #[test]
        fn normalize_idempotent(x in prop::collection::vec(-5.0f64..5.0, 1..100)) {
            prop_assume!(x.iter().any(|v| *v != 0.0));
            let once = normalize_max_abs(&buf(&x)).unwrap();
            let twice = normalize_max_abs(&once).unwrap();
            prop_assert_eq!(once.samples(), twice.samples());
            prop_assert_eq!(once.max_abs(), 1.0);
        }

        #[test]
        fn fmax_bin_aligned_tone_exact(k in 1usize..250, n_half in 50usize..600) {
            let n = n_half * 2;
            prop_assume!(k < n / 2);
            let fs = 1000.0;
            let f = k as f64 * fs / n as f64;
            let x = tone(f, 1.0, n, fs);
            prop_assert!((fmax(&buf(&x)) - f).abs() < 1e-9);
        }
    }
}
