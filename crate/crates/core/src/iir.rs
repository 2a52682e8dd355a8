//! IIR filter design and zero-phase application.
//!
//! Butterworth filters are built from the analog prototype with the bilinear
//! transform (cutoff pre-warped), already factored into second-order
//! sections. A band-pass is the cascade of an order-N high-pass and an
//! order-N low-pass, so `order` always describes the roll-off of each edge.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::SampleBuffer;
use crate::synthesis::ContaminantLabel;

/// `y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Frequency response at `f` Hz.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    /// Largest pole radius.
    pub fn pole_radius(&self) -> f64 {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((-self.a1 + s) / 2.0).abs().max(((-self.a1 - s) / 2.0).abs())
        } else {
            self.a2.sqrt()
        }
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Transposed direct-form II state that is at rest for a constant unit input.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b0, self.b2 - self.a2 * g]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b0 * input + z[0];
            z[0] = self.b1 * input - self.a1 * y + z[1];
            z[1] = self.b2 * input - self.a2 * y;
            *v = y;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Band {
    Lowpass { cutoff: f64 },
    Highpass { cutoff: f64 },
    Bandpass { low: f64, high: f64 },
}

impl Band {
    /// Cutoffs where the magnitude response should sit at -3.01 dB.
    pub fn cutoffs(&self) -> Vec<f64> {
        match *self {
            Band::Lowpass { cutoff } | Band::Highpass { cutoff } => vec![cutoff],
            Band::Bandpass { low, high } => vec![low, high],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterDesc {
    Identity,
    Butterworth { order: usize, band: Band },
    Notch { f0: f64, q: f64 },
    Chain { stages: Vec<FilterDesc> },
}

/// Ordered second-order sections. Every section is stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub fs: f64,
    pub description: FilterDesc,
}

impl BiquadCascade {
    pub fn new(sections: Vec<Biquad>, fs: f64, description: FilterDesc) -> Result<Self> {
        for (i, s) in sections.iter().enumerate() {
            let finite = [s.b0, s.b1, s.b2, s.a1, s.a2].iter().all(|c| c.is_finite());
            if !finite || s.pole_radius() >= 1.0 {
                return Err(Error::BadCutoff(format!(
                    "section {i} is unstable or non-finite: {s:?}"
                )));
            }
        }
        Ok(Self {
            sections,
            fs,
            description,
        })
    }

    pub fn identity(fs: f64) -> Self {
        Self {
            sections: vec![Biquad::IDENTITY],
            fs,
            description: FilterDesc::Identity,
        }
    }

    /// Runs `other` after `self`.
    pub fn then(mut self, other: BiquadCascade) -> Self {
        self.sections.extend(other.sections);
        let mut stages = match self.description {
            FilterDesc::Chain { stages } => stages,
            d => vec![d],
        };
        match other.description {
            FilterDesc::Chain { stages: s } => stages.extend(s),
            d => stages.push(d),
        }
        self.description = FilterDesc::Chain { stages };
        self
    }

    pub fn response(&self, f: f64) -> Complex64 {
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(f, self.fs))
    }

    pub fn gain(&self, f: f64) -> f64 {
        self.response(f).norm()
    }

    pub fn gain_db(&self, f: f64) -> f64 {
        20.0 * self.gain(f).log10()
    }

    /// Single causal pass from rest.
    pub fn filter_causal(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    /// Causal pass with every section started in the steady state for a
    /// constant input equal to `x[0]`.
    fn filter_settled(&self, y: &mut [f64]) {
        let mut level = y.first().copied().unwrap_or(0.0);
        for s in &self.sections {
            let zi = s.steady_state();
            s.run(y, [zi[0] * level, zi[1] * level]);
            level *= s.dc_gain();
        }
    }

    /// Reflection padding used by [`apply_zero_phase`].
    pub fn padding(&self) -> usize {
        3 * (2 * self.sections.len()).max(24)
    }
}

fn check_freq(f: f64, fs: f64, what: &str) -> Result<()> {
    if !(f.is_finite() && f > 0.0 && f < fs / 2.0) {
        return Err(Error::BadCutoff(format!(
            "{what} {f} Hz must lie strictly between 0 and fs/2 = {} Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

fn butter_sections(order: usize, cutoff: f64, fs: f64, highpass: bool) -> Vec<Biquad> {
    let k = (PI * cutoff / fs).tan();
    let k2 = k * k;
    (0..order / 2)
        .map(|i| {
            let theta = (2 * i + 1) as f64 * PI / (2 * order) as f64;
            let q = 1.0 / (2.0 * theta.cos());
            let norm = 1.0 / (1.0 + k / q + k2);
            let a1 = 2.0 * (k2 - 1.0) * norm;
            let a2 = (1.0 - k / q + k2) * norm;
            if highpass {
                Biquad {
                    b0: norm,
                    b1: -2.0 * norm,
                    b2: norm,
                    a1,
                    a2,
                }
            } else {
                let b0 = k2 * norm;
                Biquad {
                    b0,
                    b1: 2.0 * b0,
                    b2: b0,
                    a1,
                    a2,
                }
            }
        })
        .collect()
}

/// Butterworth filter of even `order` as second-order sections.
pub fn design_butterworth(order: usize, band: Band, fs: f64) -> Result<BiquadCascade> {
    if order == 0 || !order.is_multiple_of(2) {
        return Err(Error::BadOrder(order));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::BadRate(fs));
    }
    let sections = match band {
        Band::Lowpass { cutoff } => {
            check_freq(cutoff, fs, "cutoff")?;
            butter_sections(order, cutoff, fs, false)
        }
        Band::Highpass { cutoff } => {
            check_freq(cutoff, fs, "cutoff")?;
            butter_sections(order, cutoff, fs, true)
        }
        Band::Bandpass { low, high } => {
            check_freq(low, fs, "low cutoff")?;
            check_freq(high, fs, "high cutoff")?;
            if low >= high {
                return Err(Error::BadCutoff(format!(
                    "band-pass cutoffs must be ordered, got {low} >= {high}"
                )));
            }
            let mut s = butter_sections(order, low, fs, true);
            s.extend(butter_sections(order, high, fs, false));
            s
        }
    };
    BiquadCascade::new(sections, fs, FilterDesc::Butterworth { order, band })
}

/// Second-order notch at `f0` whose -3 dB bandwidth is `f0 / q`.
pub fn design_notch(f0: f64, q: f64, fs: f64) -> Result<BiquadCascade> {
    check_freq(f0, fs, "notch frequency")?;
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::BadCutoff(format!("quality factor must be positive, got {q}")));
    }
    let w0 = 2.0 * PI * f0 / fs;
    let bw = w0 / q;
    let gain = 1.0 / (1.0 + (bw / 2.0).tan());
    let c = w0.cos();
    let section = Biquad {
        b0: gain,
        b1: -2.0 * gain * c,
        b2: gain,
        a1: -2.0 * gain * c,
        a2: 2.0 * gain - 1.0,
    };
    BiquadCascade::new(vec![section], fs, FilterDesc::Notch { f0, q })
}

/// Forward-backward filtering with odd reflection padding.
///
/// The effective response is `|H(f)|^2` with zero phase.
pub fn apply_zero_phase(filter: &BiquadCascade, buf: &SampleBuffer) -> Result<SampleBuffer> {
    if buf.fs() != filter.fs {
        return Err(Error::RateMismatch {
            left: filter.fs,
            right: buf.fs(),
        });
    }
    let x = buf.samples();
    let n = x.len();
    let pad = filter.padding();
    if n <= pad {
        return Err(Error::TooShort { len: n, need: pad });
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    filter.filter_settled(&mut ext);
    ext.reverse();
    filter.filter_settled(&mut ext);
    ext.reverse();
    Ok(buf.derived(ext[pad..pad + n].to_vec()))
}

/// Centered moving average of odd length; edges replicate the end samples.
pub fn moving_average(buf: &SampleBuffer, window: usize) -> Result<SampleBuffer> {
    Ok(buf.derived(moving_average_slice(buf.samples(), window)?))
}

pub(crate) fn moving_average_slice(x: &[f64], window: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if window == 0 || window.is_multiple_of(2) || window > n {
        return Err(Error::BadWindow(format!(
            "moving-average window must be odd and at most {n}, got {window}"
        )));
    }
    let half = (window / 2) as isize;
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    let mut sum: f64 = (-half..=half).map(at).sum();
    let mut out = Vec::with_capacity(n);
    for i in 0..n as isize {
        out.push(sum / window as f64);
        sum += at(i + half + 1) - at(i - half);
    }
    Ok(out)
}

/// Which high-pass the motion-artifact row uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoaSource {
    /// Electrode-tapping recordings: 40 Hz high-pass.
    Tapping,
    /// Electrode-motion noise of the stress-test kind: 20 Hz high-pass.
    #[default]
    Nstdb,
}

/// Settings for the per-contaminant filter table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IirRecipe {
    pub order: usize,
    pub bw_cutoff: f64,
    pub pli_freq: f64,
    pub pli_q: f64,
    pub ecg_cutoff: f64,
    pub moa_source: MoaSource,
    pub wgn_band: (f64, f64),
}

impl Default for IirRecipe {
    fn default() -> Self {
        Self {
            order: 4,
            bw_cutoff: 10.0,
            pli_freq: 60.0,
            pli_q: 5.0,
            ecg_cutoff: 40.0,
            moa_source: MoaSource::Nstdb,
            wgn_band: (20.0, 500.0),
        }
    }
}

impl IirRecipe {
    pub fn moa_cutoff(&self) -> f64 {
        match self.moa_source {
            MoaSource::Tapping => 40.0,
            MoaSource::Nstdb => 20.0,
        }
    }
}

/// Butterworth band-pass, falling back to a high-pass when the upper edge
/// reaches the Nyquist frequency (nothing above it to remove).
pub fn band_limited(order: usize, low: f64, high: f64, fs: f64) -> Result<BiquadCascade> {
    if high >= fs / 2.0 {
        design_butterworth(order, Band::Highpass { cutoff: low }, fs)
    } else {
        design_butterworth(order, Band::Bandpass { low, high }, fs)
    }
}

/// The removal filter for one contaminant.
pub fn table_filter(label: ContaminantLabel, fs: f64, recipe: &IirRecipe) -> Result<BiquadCascade> {
    let hp = |cutoff| design_butterworth(recipe.order, Band::Highpass { cutoff }, fs);
    match label {
        ContaminantLabel::Bw => hp(recipe.bw_cutoff),
        ContaminantLabel::Pli => design_notch(recipe.pli_freq, recipe.pli_q, fs),
        ContaminantLabel::Ecg => hp(recipe.ecg_cutoff),
        ContaminantLabel::Moa => hp(recipe.moa_cutoff()),
        ContaminantLabel::Wgn => band_limited(recipe.order, recipe.wgn_band.0, recipe.wgn_band.1, fs),
    }
}

/// Applies the table filter of every present label, in canonical label order.
pub fn iir_denoise(noisy: &SampleBuffer, labels: &[ContaminantLabel]) -> Result<SampleBuffer> {
    iir_denoise_with(noisy, labels, &IirRecipe::default())
}

pub fn iir_denoise_with(
    noisy: &SampleBuffer,
    labels: &[ContaminantLabel],
    recipe: &IirRecipe,
) -> Result<SampleBuffer> {
    if labels.is_empty() {
        return Err(Error::BadLabelSet("no contaminant labels given".into()));
    }
    let mut out = noisy.clone();
    for label in ContaminantLabel::ALL {
        if labels.contains(&label) {
            out = apply_zero_phase(&table_filter(label, noisy.fs(), recipe)?, &out)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::DEFAULT_FS;

    fn sine(freq: f64, n: usize, fs: f64) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    // Steady-state gain measured by pushing a long sine through one causal
    // pass and comparing RMS after the transient.
    fn measured_gain(filter: &BiquadCascade, freq: f64) -> f64 {
        let n = 20_000;
        let x = sine(freq, n, filter.fs);
        let y = filter.filter_causal(&x);
        rms(&y[n / 2..]) / rms(&x[n / 2..])
    }

    #[test]
    fn butterworth_cutoff_is_minus_3db() {
        for (order, band) in [
            (4, Band::Highpass { cutoff: 10.0 }),
            (4, Band::Highpass { cutoff: 40.0 }),
            (4, Band::Lowpass { cutoff: 10.0 }),
            (2, Band::Lowpass { cutoff: 200.0 }),
            (6, Band::Highpass { cutoff: 30.0 }),
        ] {
            let f = design_butterworth(order, band, DEFAULT_FS).unwrap();
            for c in band.cutoffs() {
                assert!((f.gain_db(c) + 3.0103).abs() < 1e-6, "{band:?}: {}", f.gain_db(c));
                let g = measured_gain(&f, c);
                assert!((20.0 * g.log10() + 3.01).abs() < 0.1);
            }
        }
    }

    #[test]
    fn bandpass_edges_and_out_of_band() {
        let f = design_butterworth(4, Band::Bandpass { low: 20.0, high: 500.0 }, 2000.0).unwrap();
        assert!((f.gain_db(20.0) + 3.01).abs() < 0.1);
        assert!((f.gain_db(500.0) + 3.01).abs() < 0.1);
        assert!(f.gain_db(999.0) < -3.0);
        assert!(f.gain_db(2.0) < -3.0);
        assert!(f.gain_db(150.0).abs() < 0.01);
    }

    #[test]
    fn bad_designs() {
        assert!(matches!(
            design_butterworth(4, Band::Highpass { cutoff: 500.0 }, 1000.0),
            Err(Error::BadCutoff(_))
        ));
        assert!(matches!(
            design_butterworth(4, Band::Bandpass { low: 50.0, high: 20.0 }, 1000.0),
            Err(Error::BadCutoff(_))
        ));
        assert!(matches!(
            design_butterworth(3, Band::Lowpass { cutoff: 50.0 }, 1000.0),
            Err(Error::BadOrder(3))
        ));
        assert!(matches!(design_notch(60.0, 0.0, 1000.0), Err(Error::BadCutoff(_))));
        assert!(matches!(design_notch(0.0, 5.0, 1000.0), Err(Error::BadCutoff(_))));
    }

    #[test]
    fn every_design_is_stable() {
        for c in [1.0, 10.0, 20.0, 40.0, 50.0, 250.0, 499.0] {
            for band in [Band::Lowpass { cutoff: c }, Band::Highpass { cutoff: c }] {
                let f = design_butterworth(4, band, 1000.0).unwrap();
                assert!(f.sections.iter().all(|s| s.pole_radius() < 1.0));
            }
        }
    }

    #[test]
    fn highpass_kills_dc() {
        let f = design_butterworth(4, Band::Highpass { cutoff: 10.0 }, DEFAULT_FS).unwrap();
        let y = f.filter_causal(&vec![1.0; 3000]);
        assert!(y[2999].abs() < 1e-6);
    }

    #[test]
    fn notch_examples() {
        let f = design_notch(60.0, 5.0, DEFAULT_FS).unwrap();
        assert!(20.0 * measured_gain(&f, 60.0).log10() <= -30.0);
        assert!((measured_gain(&f, 200.0) - 1.0).abs() <= 0.05);
        assert!(f.gain(60.0) < 1e-12);

        let narrow = design_notch(60.0, 20.0, DEFAULT_FS).unwrap();
        // -3 dB points bracket a 3 Hz band around 60 Hz.
        let half = 1.0 / 2f64.sqrt();
        let mut lo = 55.0;
        while narrow.gain(lo) > half {
            lo += 0.001;
        }
        let mut hi = 65.0;
        while narrow.gain(hi) > half {
            hi -= 0.001;
        }
        assert!(((hi - lo) - 3.0).abs() < 0.05, "bandwidth {}", hi - lo);
    }

    #[test]
    fn zero_phase_examples() {
        let ident = BiquadCascade::identity(DEFAULT_FS);
        let mut imp = vec![0.0; 200];
        imp[100] = 1.0;
        let b = SampleBuffer::new(imp.clone(), DEFAULT_FS).unwrap();
        assert_eq!(apply_zero_phase(&ident, &b).unwrap().samples(), &imp[..]);

        let notch = design_notch(60.0, 5.0, DEFAULT_FS).unwrap();
        // Whole cycles between the first and last sample: both ends sit on a
        // zero crossing and the odd reflection continues the tone exactly.
        let x = SampleBuffer::new(sine(60.0, 2001, DEFAULT_FS), DEFAULT_FS).unwrap();
        let y = apply_zero_phase(&notch, &x).unwrap();
        assert!(rms(y.samples()) < 0.02 * rms(x.samples()));

        // 2000 samples end 0.38 rad before a zero crossing; the reflection
        // kink rings at the edge (3.17% overall, same as scipy's sosfiltfilt
        // with padlen 72) while the interior is fully notched.
        let x = SampleBuffer::new(sine(60.0, 2000, DEFAULT_FS), DEFAULT_FS).unwrap();
        let y = apply_zero_phase(&notch, &x).unwrap();
        let ratio = rms(y.samples()) / rms(x.samples());
        assert!((ratio - 0.031652).abs() < 1e-5, "{ratio}");
        assert!(rms(&y.samples()[200..1800]) < 1e-4);

        let z = SampleBuffer::zeros(500, DEFAULT_FS).unwrap();
        assert!(apply_zero_phase(&notch, &z).unwrap().samples().iter().all(|&v| v == 0.0));

        let short = SampleBuffer::zeros(50, DEFAULT_FS).unwrap();
        assert!(matches!(apply_zero_phase(&notch, &short), Err(Error::TooShort { .. })));
    }

    #[test]
    fn zero_phase_has_no_lag() {
        let f = design_butterworth(4, Band::Lowpass { cutoff: 80.0 }, DEFAULT_FS).unwrap();
        let x = sine(25.0, 2000, DEFAULT_FS);
        let y = apply_zero_phase(&f, &SampleBuffer::new(x.clone(), DEFAULT_FS).unwrap()).unwrap();
        let y = y.samples();
        let xcorr = |lag: isize| -> f64 {
            (300..1700)
                .map(|i| x[i] * y[(i as isize + lag) as usize])
                .sum()
        };
        let best = (-20..=20).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn moving_average_examples() {
        let b = |v: &[f64]| SampleBuffer::new(v.to_vec(), 1.0).unwrap();
        assert_eq!(moving_average(&b(&[2.0; 9]), 5).unwrap().samples(), &[2.0; 9]);
        let x = [0.3, -1.0, 4.0];
        assert_eq!(moving_average(&b(&x), 1).unwrap().samples(), &x);
        let y = moving_average(&b(&[0.0, 0.0, 3.0, 0.0, 0.0]), 3).unwrap();
        for (a, e) in y.samples().iter().zip([0.0, 1.0, 1.0, 1.0, 0.0]) {
            assert!((a - e).abs() < 1e-12);
        }
        assert!(matches!(moving_average(&b(&x), 2), Err(Error::BadWindow(_))));
        assert!(matches!(moving_average(&b(&x), 5), Err(Error::BadWindow(_))));
    }

    #[test]
    fn iir_denoise_composition() {
        let x: Vec<f64> = (0..2000).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
        let x = SampleBuffer::new(x, DEFAULT_FS).unwrap();
        let recipe = IirRecipe::default();

        let pli = iir_denoise(&x, &[ContaminantLabel::Pli]).unwrap();
        let notch = design_notch(60.0, 5.0, DEFAULT_FS).unwrap();
        assert_eq!(pli, apply_zero_phase(&notch, &x).unwrap());

        let wgn = iir_denoise(&x, &[ContaminantLabel::Wgn]).unwrap();
        let bp = table_filter(ContaminantLabel::Wgn, DEFAULT_FS, &recipe).unwrap();
        assert_eq!(wgn, apply_zero_phase(&bp, &x).unwrap());

        let combo = iir_denoise(
            &x,
            &[ContaminantLabel::Wgn, ContaminantLabel::Bw, ContaminantLabel::Pli],
        )
        .unwrap();
        let mut manual = x.clone();
        for l in [ContaminantLabel::Bw, ContaminantLabel::Pli, ContaminantLabel::Wgn] {
            manual = apply_zero_phase(&table_filter(l, DEFAULT_FS, &recipe).unwrap(), &manual).unwrap();
        }
        assert_eq!(combo, manual);
        assert!(iir_denoise(&x, &[]).is_err());
    }

    #[test]
    fn moa_source_selects_cutoff() {
        let tap = IirRecipe {
            moa_source: MoaSource::Tapping,
            ..IirRecipe::default()
        };
        let f = table_filter(ContaminantLabel::Moa, DEFAULT_FS, &tap).unwrap();
        assert!((f.gain_db(40.0) + 3.01).abs() < 0.01);
        let f = table_filter(ContaminantLabel::Moa, DEFAULT_FS, &IirRecipe::default()).unwrap();
        assert!((f.gain_db(20.0) + 3.01).abs() < 0.01);
    }

    #[test]
    fn cascade_dumps_as_json() {
        let f = table_filter(ContaminantLabel::Bw, DEFAULT_FS, &IirRecipe::default()).unwrap();
        let v = serde_json::to_value(&f).unwrap();
        assert_eq!(v["description"]["kind"], "butterworth");
        assert_eq!(v["sections"].as_array().unwrap().len(), 2);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn random_designs_are_stable_with_3db_edges(
            c in 0.5f64..480.0,
            order in proptest::sample::select(vec![2usize, 4, 6, 8]),
            high in proptest::bool::ANY,
        ) {
            let band = if high { Band::Highpass { cutoff: c } } else { Band::Lowpass { cutoff: c } };
            let f = design_butterworth(order, band, DEFAULT_FS).unwrap();
            proptest::prop_assert!(f.sections.iter().all(|s| s.pole_radius() < 1.0));
            proptest::prop_assert!((f.gain_db(c) + 3.0103).abs() < 1e-6);
        }

        #[test]
        fn zero_phase_tone_has_zero_lag(f in 25.0f64..300.0) {
            let hp = design_butterworth(4, Band::Highpass { cutoff: 20.0 }, DEFAULT_FS).unwrap();
            let x = SampleBuffer::new(sine(f, 2000, DEFAULT_FS), DEFAULT_FS).unwrap();
            let y = apply_zero_phase(&hp, &x).unwrap();
            let xs = &x.samples()[400..1600];
            let corr = |lag: i64| -> f64 {
                xs.iter().enumerate().map(|(i, v)| v * y.samples()[(400 + i as i64 + lag) as usize]).sum()
            };
            let best = (-20..=20i64).max_by(|&a, &b| corr(a).total_cmp(&corr(b))).unwrap();
            proptest::prop_assert_eq!(best, 0);
        }
    }
}
