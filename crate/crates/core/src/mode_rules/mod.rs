//! Per-contaminant cleanup of decomposition modes and waveform
//! reconstruction.
//!
//! The gating rules (BW, PLI, ECG, MOA) see the residue as one more mode
//! after the IMFs; the WGN rules act on the IMFs only.

pub mod interval;
pub mod wavelet;

use serde::{Deserialize, Serialize};

use crate::decomposition::{decompose, DecompositionParams, ImfSet, Method};
use crate::error::{Error, Result};
use crate::iir::{apply_zero_phase, design_butterworth, design_notch, Band, BiquadCascade, FilterDesc};
use crate::signal::{fmax, pearson, std_dev, SampleBuffer};
use crate::synthesis::ContaminantLabel;

pub const BW_DROP_HZ: f64 = 10.0;
pub const PLI_BAND_HZ: (f64, f64) = (50.0, 70.0);
pub const PLI_Q: f64 = 20.0;
pub const ECG_TEMPLATE_HP_HZ: f64 = 40.0;
pub const ECG_MODE_HP_HZ: f64 = 30.0;
pub const ECG_MODES: usize = 5;
pub const MOA_DROP_HZ: f64 = 20.0;

/// What a rule did to one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Drop,
    Keep,
    /// `complement` means the mode minus its filtered version was kept.
    Filter { filter: FilterDesc, complement: bool },
    WaveletThreshold { sigma: f64, threshold: f64 },
    IntervalThreshold { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDecision {
    /// 1-based; the residue is `imfs.len() + 1`.
    pub mode_index: usize,
    pub residue: bool,
    pub label: ContaminantLabel,
    pub rule: String,
    pub action: Action,
}

/// Decisions in the order they were taken.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub decisions: Vec<ModeDecision>,
}

impl DecisionLog {
    fn push(&mut self, set: &ImfSet, idx: usize, label: ContaminantLabel, rule: &str, action: Action) {
        self.decisions.push(ModeDecision {
            mode_index: idx + 1,
            residue: idx == set.imfs.len(),
            label,
            rule: rule.to_string(),
            action,
        });
    }
}

fn part(set: &ImfSet, idx: usize) -> &SampleBuffer {
    set.imfs.get(idx).unwrap_or(&set.residue)
}

fn replace(set: &mut ImfSet, idx: usize, samples: Vec<f64>) {
    if idx < set.imfs.len() {
        set.imfs[idx] = set.imfs[idx].derived(samples);
    } else {
        set.residue = set.residue.derived(samples);
    }
}

fn zeroed(buf: &SampleBuffer) -> Vec<f64> {
    vec![0.0; buf.len()]
}

fn butter(band: Band, fs: f64) -> Result<BiquadCascade> {
    design_butterworth(4, band, fs)
}

/// Modes with f_max below 10 Hz are dropped; every other mode keeps only
/// what a 10 Hz low-pass removes.
pub fn rule_bw(imfs: &ImfSet, log: &mut DecisionLog) -> Result<ImfSet> {
    let mut out = imfs.clone();
    let lp = butter(Band::Lowpass { cutoff: BW_DROP_HZ }, imfs.residue.fs())?;
    for i in 0..=imfs.len() {
        let m = part(imfs, i);
        let action = if fmax(m) < BW_DROP_HZ {
            replace(&mut out, i, zeroed(m));
            Action::Drop
        } else {
            let low = apply_zero_phase(&lp, m)?;
            replace(&mut out, i, m.samples().iter().zip(low.samples()).map(|(a, b)| a - b).collect());
            Action::Filter {
                filter: lp.description.clone(),
                complement: true,
            }
        };
        log.push(imfs, i, ContaminantLabel::Bw, "bw-fmax-lowpass", action);
    }
    Ok(out)
}

/// Modes whose f_max lies in 50-70 Hz get a Q = 20 notch at f_max.
pub fn rule_pli(imfs: &ImfSet, log: &mut DecisionLog) -> Result<ImfSet> {
    let mut out = imfs.clone();
    let fs = imfs.residue.fs();
    for i in 0..=imfs.len() {
        let m = part(imfs, i);
        let f = fmax(m);
        let action = if (PLI_BAND_HZ.0..=PLI_BAND_HZ.1).contains(&f) {
            let notch = design_notch(f, PLI_Q, fs)?;
            replace(&mut out, i, apply_zero_phase(&notch, m)?.into_samples());
            Action::Filter {
                filter: notch.description,
                complement: false,
            }
        } else {
            Action::Keep
        };
        log.push(imfs, i, ContaminantLabel::Pli, "pli-fmax-notch", action);
    }
    Ok(out)
}

/// ECG template: `noisy - HPF40(noisy)`.
pub fn ecg_template(noisy: &SampleBuffer) -> Result<Vec<f64>> {
    let hp = butter(Band::Highpass { cutoff: ECG_TEMPLATE_HP_HZ }, noisy.fs())?;
    let high = apply_zero_phase(&hp, noisy)?;
    Ok(noisy.samples().iter().zip(high.samples()).map(|(a, b)| a - b).collect())
}

/// The (up to) five modes most correlated with the ECG template are
/// high-passed at 30 Hz. Constant modes have no defined correlation and are
/// never picked.
pub fn rule_ecg(imfs: &ImfSet, noisy: &SampleBuffer, log: &mut DecisionLog) -> Result<ImfSet> {
    imfs.residue.check_compatible(noisy)?;
    let template = ecg_template(noisy)?;
    let mut ranked: Vec<(usize, f64)> = (0..=imfs.len())
        .map(|i| (i, pearson(part(imfs, i).samples(), &template).abs()))
        .filter(|&(_, r)| r > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(ECG_MODES);
    let hp = butter(Band::Highpass { cutoff: ECG_MODE_HP_HZ }, noisy.fs())?;
    let mut out = imfs.clone();
    for i in 0..=imfs.len() {
        let action = if ranked.iter().any(|&(j, _)| j == i) {
            replace(&mut out, i, apply_zero_phase(&hp, part(imfs, i))?.into_samples());
            Action::Filter {
                filter: hp.description.clone(),
                complement: false,
            }
        } else {
            Action::Keep
        };
        log.push(imfs, i, ContaminantLabel::Ecg, "ecg-correlation-highpass", action);
    }
    Ok(out)
}

/// Modes with f_max below 20 Hz are dropped; the rest are high-passed at
/// 20 Hz.
pub fn rule_moa(imfs: &ImfSet, log: &mut DecisionLog) -> Result<ImfSet> {
    let mut out = imfs.clone();
    let hp = butter(Band::Highpass { cutoff: MOA_DROP_HZ }, imfs.residue.fs())?;
    for i in 0..=imfs.len() {
        let m = part(imfs, i);
        let action = if fmax(m) < MOA_DROP_HZ {
            replace(&mut out, i, zeroed(m));
            Action::Drop
        } else {
            replace(&mut out, i, apply_zero_phase(&hp, m)?.into_samples());
            Action::Filter {
                filter: hp.description.clone(),
                complement: false,
            }
        };
        log.push(imfs, i, ContaminantLabel::Moa, "moa-fmax-highpass", action);
    }
    Ok(out)
}

/// Drops the first IMF. Each later IMF whose standard deviation exceeds its
/// wavelet noise estimate is soft-thresholded in the sym8 domain at the
/// universal threshold; the others are dropped.
pub fn rule_wgn_emd(imfs: &ImfSet, log: &mut DecisionLog) -> Result<ImfSet> {
    if imfs.len() < 2 {
        return Err(Error::TooFewModes { need: 2, got: imfs.len() });
    }
    let mut out = imfs.clone();
    out.imfs[0] = imfs.imfs[0].derived(zeroed(&imfs.imfs[0]));
    log.push(imfs, 0, ContaminantLabel::Wgn, "wgn-first-mode", Action::Drop);
    for i in 1..imfs.len() {
        let m = imfs.imfs[i].samples();
        let sigma = wavelet::noise_sigma(m);
        let action = if std_dev(m) > sigma {
            let t = wavelet::universal_threshold(sigma, m.len());
            out.imfs[i] = imfs.imfs[i].derived(wavelet::wavelet_shrink(m, t, wavelet::LEVELS));
            Action::WaveletThreshold { sigma, threshold: t }
        } else {
            out.imfs[i] = imfs.imfs[i].derived(vec![0.0; m.len()]);
            Action::Drop
        };
        log.push(imfs, i, ContaminantLabel::Wgn, "wgn-std-wavelet", action);
    }
    Ok(out)
}

/// Interval thresholding of every IMF with mode-dependent thresholds.
pub fn rule_wgn_vmd(imfs: &ImfSet, log: &mut DecisionLog) -> Result<ImfSet> {
    if imfs.is_empty() {
        return Err(Error::TooFewModes { need: 1, got: 0 });
    }
    let modes: Vec<Vec<f64>> = imfs.imfs.iter().map(|m| m.samples().to_vec()).collect();
    let (shrunk, ts) = interval::interval_threshold_modes(&modes);
    let mut out = imfs.clone();
    for (i, (m, t)) in shrunk.into_iter().zip(ts).enumerate() {
        out.imfs[i] = imfs.imfs[i].derived(m);
        log.push(imfs, i, ContaminantLabel::Wgn, "wgn-interval", Action::IntervalThreshold { threshold: t });
    }
    Ok(out)
}

/// Applies the rules of the present labels in canonical order. For VMD the
/// ECG rule is skipped here; see [`decomposition_denoise`].
pub fn apply_rules(
    imfs: &ImfSet,
    labels: &[ContaminantLabel],
    noisy: &SampleBuffer,
    log: &mut DecisionLog,
) -> Result<ImfSet> {
    let mut set = imfs.clone();
    for label in ContaminantLabel::ALL {
        if !labels.contains(&label) {
            continue;
        }
        set = match (label, imfs.method) {
            (ContaminantLabel::Bw, _) => rule_bw(&set, log)?,
            (ContaminantLabel::Pli, _) => rule_pli(&set, log)?,
            (ContaminantLabel::Ecg, Method::Vmd) => set,
            (ContaminantLabel::Ecg, _) => rule_ecg(&set, noisy, log)?,
            (ContaminantLabel::Moa, _) => rule_moa(&set, log)?,
            (ContaminantLabel::Wgn, Method::Vmd) => rule_wgn_vmd(&set, log)?,
            (ContaminantLabel::Wgn, _) => rule_wgn_emd(&set, log)?,
        };
    }
    Ok(set)
}

/// Output of [`decomposition_denoise_logged`].
#[derive(Debug, Clone)]
pub struct DenoiseOutcome {
    pub enhanced: SampleBuffer,
    pub imfs: ImfSet,
    pub log: DecisionLog,
}

/// Decompose, clean the modes, and sum them back.
pub fn decomposition_denoise(
    noisy: &SampleBuffer,
    labels: &[ContaminantLabel],
    params: &DecompositionParams,
    seed: u64,
) -> Result<SampleBuffer> {
    decomposition_denoise_logged(noisy, labels, params, seed).map(|o| o.enhanced)
}

pub fn decomposition_denoise_logged(
    noisy: &SampleBuffer,
    labels: &[ContaminantLabel],
    params: &DecompositionParams,
    seed: u64,
) -> Result<DenoiseOutcome> {
    if labels.is_empty() {
        return Err(Error::BadLabelSet("no contaminant labels given".into()));
    }
    let imfs = decompose(noisy, params, seed)?;
    let mut log = DecisionLog::default();
    let cleaned = apply_rules(&imfs, labels, noisy, &mut log)?;
    let mut enhanced = cleaned.reconstruct();
    if imfs.method == Method::Vmd && labels.contains(&ContaminantLabel::Ecg) {
        let hp = butter(Band::Highpass { cutoff: ECG_TEMPLATE_HP_HZ }, noisy.fs())?;
        enhanced = apply_zero_phase(&hp, &enhanced)?;
    }
    Ok(DenoiseOutcome { enhanced, imfs, log })
}
