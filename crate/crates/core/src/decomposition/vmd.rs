//! Variational mode decomposition by ADMM in the Fourier domain.

use rustfft::num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ImfSet, Method};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{Fft, SampleBuffer};

pub const MIN_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmdParams {
    pub k_modes: usize,
    pub alpha: f64,
    pub tol: f64,
    /// Dual ascent step; 0 disables the Lagrangian update.
    pub tau: f64,
    pub max_iterations: usize,
    /// Perturb the uniform initial centre frequencies by up to `fs/(8K)`.
    pub jitter: bool,
}

impl Default for VmdParams {
    fn default() -> Self {
        Self {
            k_modes: 10,
            alpha: 1000.0,
            tol: 1e-3,
            tau: 0.0,
            max_iterations: 500,
            jitter: false,
        }
    }
}

/// ADMM state at termination.
#[derive(Debug, Clone, PartialEq)]
pub struct VmdState {
    /// One-sided spectra of the mirrored modes, in update order.
    pub mode_spectra: Vec<Vec<Complex64>>,
    /// Centre frequencies in Hz, in update order.
    pub center_freqs: Vec<f64>,
    /// Initial centre frequencies in Hz.
    pub initial_freqs: Vec<f64>,
    pub lagrange: Vec<Complex64>,
    pub alpha: f64,
    pub tau: f64,
    pub iteration: usize,
    /// Last relative update size.
    pub change: f64,
    /// Bandwidth term `sum_k alpha * ||d/dt analytic mode_k||^2` per iteration
    /// (up to a constant factor).
    pub bandwidth_history: Vec<f64>,
    /// Penalised objective (bandwidth plus data misfit) per iteration.
    pub objective_history: Vec<f64>,
}

/// Initial centre frequencies in Hz: `(k - 0.5) fs / (2K)`, optionally
/// jittered by up to `fs / (8K)`.
pub fn initial_freqs(k_modes: usize, fs: f64, jitter: bool, seed: u64) -> Vec<f64> {
    let mut rng = seed::child_rng(seed, "vmd-init", 0);
    let step = fs / (2.0 * k_modes as f64);
    (0..k_modes)
        .map(|k| {
            let base = (k as f64 + 0.5) * step;
            let j = if jitter {
                rng.gen_range(-0.25..=0.25) * step
            } else {
                0.0
            };
            (base + j).clamp(0.0, fs / 2.0)
        })
        .collect()
}

pub fn vmd(buf: &SampleBuffer, params: VmdParams, seed: u64) -> Result<ImfSet> {
    vmd_with_state(buf, params, seed).map(|(set, _)| set)
}

/// Modes come back ordered by decreasing centre frequency, so mode 1 is the
/// highest-frequency one.
pub fn vmd_with_state(buf: &SampleBuffer, params: VmdParams, seed: u64) -> Result<(ImfSet, VmdState)> {
    let n = buf.len();
    if n < MIN_LEN {
        return Err(Error::TooShort { len: n, need: MIN_LEN });
    }
    if params.k_modes == 0 {
        return Err(Error::TooFewModes { need: 1, got: 0 });
    }
    let fs = buf.fs();
    let x = buf.samples();
    let k_modes = params.k_modes;

    // Mirror extension: half a signal on each side.
    let left = n / 2;
    let right = n - left;
    let t = 2 * n;
    let mut ext = Vec::with_capacity(t);
    ext.extend(x[..left].iter().rev());
    ext.extend_from_slice(x);
    ext.extend(x[n - right..].iter().rev());

    let fft = Fft::new(t);
    let full = fft.forward_real(&ext);
    // Positive frequencies only: bins 0..=t/2.
    let bins = t / 2 + 1;
    let nu: Vec<f64> = (0..bins).map(|j| j as f64 / t as f64).collect();
    let f_hat: Vec<Complex64> = full[..bins].to_vec();

    let init = initial_freqs(k_modes, fs, params.jitter, seed);
    let mut omega: Vec<f64> = init.iter().map(|f| f / fs).collect();
    let zero = Complex64::new(0.0, 0.0);
    let mut u = vec![vec![zero; bins]; k_modes];
    let mut lambda = vec![zero; bins];
    let mut sum = vec![zero; bins];
    let mut bandwidth_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut iteration = 0;
    let mut change = f64::INFINITY;

    while iteration < params.max_iterations {
        iteration += 1;
        change = 0.0;
        for k in 0..k_modes {
            let uk = &mut u[k];
            let (mut diff, mut old_norm, mut num, mut den) = (0.0, 0.0, 0.0, 0.0);
            for j in 0..bins {
                let others = sum[j] - uk[j];
                let d = nu[j] - omega[k];
                let new = (f_hat[j] - others + lambda[j] * 0.5) / (1.0 + 2.0 * params.alpha * d * d);
                diff += (new - uk[j]).norm_sqr();
                old_norm += uk[j].norm_sqr();
                sum[j] = others + new;
                uk[j] = new;
                let p = new.norm_sqr();
                num += nu[j] * p;
                den += p;
            }
            if den > 0.0 {
                omega[k] = num / den;
            }
            change += if old_norm > 0.0 {
                diff / old_norm
            } else if diff > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
        }
        if params.tau > 0.0 {
            for j in 0..bins {
                lambda[j] += (sum[j] - f_hat[j]) * params.tau;
            }
        }
        let mut bw = 0.0;
        for k in 0..k_modes {
            for j in 0..bins {
                let d = nu[j] - omega[k];
                bw += d * d * u[k][j].norm_sqr();
            }
        }
        bw *= 2.0 * params.alpha;
        let misfit: f64 = (0..bins).map(|j| (f_hat[j] - sum[j]).norm_sqr()).sum();
        bandwidth_history.push(bw);
        objective_history.push(bw + misfit);
        if iteration > 1 && change < params.tol {
            break;
        }
    }
    if change >= params.tol && change > 100.0 * params.tol {
        return Err(Error::NoConvergence { iterations: iteration, change });
    }

    // Back to the time domain with Hermitian symmetry, then crop the mirror.
    let mut order: Vec<usize> = (0..k_modes).collect();
    order.sort_by(|&a, &b| omega[b].total_cmp(&omega[a]).then(a.cmp(&b)));
    let mut imfs = Vec::with_capacity(k_modes);
    let mut total = vec![0.0; n];
    for &k in &order {
        let mut spec = vec![zero; t];
        spec[..bins].copy_from_slice(&u[k]);
        for j in 1..t - bins + 1 {
            spec[t - j] = u[k][j].conj();
        }
        spec[0] = Complex64::new(spec[0].re, 0.0);
        if t.is_multiple_of(2) {
            spec[t / 2] = Complex64::new(spec[t / 2].re, 0.0);
        }
        fft.inverse(&mut spec);
        let mode: Vec<f64> = spec[left..left + n].iter().map(|c| c.re).collect();
        total.iter_mut().zip(&mode).for_each(|(a, b)| *a += b);
        imfs.push(buf.derived(mode));
    }
    let residue: Vec<f64> = x.iter().zip(&total).map(|(a, b)| a - b).collect();
    let center_hz: Vec<f64> = omega.iter().map(|w| w * fs).collect();
    let set = ImfSet {
        imfs,
        residue: buf.derived(residue),
        method: Method::Vmd,
        center_freqs: Some(order.iter().map(|&k| center_hz[k]).collect()),
    };
    let state = VmdState {
        mode_spectra: u,
        center_freqs: center_hz,
        initial_freqs: init,
        lagrange: lambda,
        alpha: params.alpha,
        tau: params.tau,
        iteration,
        change,
        bandwidth_history,
        objective_history,
    };
    Ok((set, state))
}
