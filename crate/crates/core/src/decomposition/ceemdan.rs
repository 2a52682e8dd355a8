//! Complete ensemble EMD with adaptive noise.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emd::{emd, has_oscillation, sift, MIN_LEN};
use super::{ImfSet, Method};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::SampleBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeemdanParams {
    pub max_imfs: usize,
    /// Noise amplitude relative to the input standard deviation.
    pub noise_scale: f64,
    pub trials: usize,
}

impl Default for CeemdanParams {
    fn default() -> Self {
        Self {
            max_imfs: 8,
            noise_scale: 0.005,
            trials: 20,
        }
    }
}

/// Mode `k` is the ensemble mean, over `trials` white-noise realizations
/// `w_i`, of the first IMF of `r_{k-1} + beta * E_k(w_i)`, where `E_k` is the
/// k-th EMD mode and `beta = noise_scale * std(buf)`. Noise streams are
/// seeded per trial, so the result does not depend on scheduling.
pub fn ceemdan(buf: &SampleBuffer, params: CeemdanParams, seed: u64) -> Result<ImfSet> {
    if buf.len() < MIN_LEN {
        return Err(Error::TooShort {
            len: buf.len(),
            need: MIN_LEN,
        });
    }
    if params.max_imfs == 0 || params.trials == 0 {
        return Err(Error::TooFewModes {
            need: 1,
            got: params.max_imfs.min(params.trials),
        });
    }
    let n = buf.len();
    let beta = params.noise_scale * buf.std();

    let noise_modes: Vec<Vec<Vec<f64>>> = if beta == 0.0 {
        Vec::new()
    } else {
        (0..params.trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::child_rng(seed, "ceemdan-noise", i as u64);
                let w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let w = buf.derived(w);
                emd(&w, params.max_imfs)
                    .map(|s| s.imfs.into_iter().map(SampleBuffer::into_samples).collect())
            })
            .collect::<Result<_>>()?
    };

    let mut residue = buf.samples().to_vec();
    let mut imfs = Vec::new();
    for k in 0..params.max_imfs {
        if !has_oscillation(&residue) {
            break;
        }
        let mode = if beta == 0.0 {
            let Some(s) = sift(&residue) else { break };
            s
        } else {
            let trials: Vec<Vec<f64>> = noise_modes
                .par_iter()
                .map(|modes| {
                    let mut y = residue.clone();
                    if let Some(e) = modes.get(k) {
                        y.iter_mut().zip(e).for_each(|(v, w)| *v += beta * w);
                    }
                    // A trial with no oscillation contributes nothing.
                    sift(&y).unwrap_or_else(|| vec![0.0; n])
                })
                .collect();
            let mut mean = vec![0.0; n];
            for t in &trials {
                mean.iter_mut().zip(t).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= params.trials as f64);
            mean
        };
        residue.iter_mut().zip(&mode).for_each(|(r, v)| *r -= v);
        imfs.push(buf.derived(mode));
    }
    Ok(ImfSet {
        imfs,
        residue: buf.derived(residue),
        method: Method::Ceemdan,
        center_freqs: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::DEFAULT_FS;
    use std::f64::consts::PI;

    fn noisy_tone(seed: u64) -> SampleBuffer {
        let mut rng = seed::rng(seed);
        let x = (0..1000)
            .map(|i| {
                let w: f64 = StandardNormal.sample(&mut rng);
                (2.0 * PI * 100.0 * i as f64 / DEFAULT_FS).sin() * 2f64.sqrt() + 0.2 * w
            })
            .collect();
        SampleBuffer::new(x, DEFAULT_FS).unwrap()
    }

    #[test]
    fn reconstruction_and_determinism() {
        let x = noisy_tone(1);
        let a = ceemdan(&x, CeemdanParams::default(), 7).unwrap();
        let b = ceemdan(&x, CeemdanParams::default(), 7).unwrap();
        assert_eq!(a, b);
        let tol = 10.0 * 0.005 * x.std();
        let rec = a.reconstruct();
        for (r, v) in rec.samples().iter().zip(x.samples()) {
            assert!((r - v).abs() <= tol);
        }
        assert!(a.imfs.len() <= 8);
    }

    #[test]
    fn dominant_mode_tracks_tone() {
        let x: Vec<f64> = (0..1000)
            .map(|i| (2.0 * PI * 100.0 * i as f64 / DEFAULT_FS).sin() * 2f64.sqrt())
            .collect();
        let set = ceemdan(&SampleBuffer::new(x.clone(), DEFAULT_FS).unwrap(), CeemdanParams::default(), 3)
            .unwrap();
        let best = set
            .imfs
            .iter()
            .max_by(|a, b| a.std().total_cmp(&b.std()))
            .unwrap();
        assert!(crate::signal::pearson(best.samples(), &x) > 0.95);
    }

    #[test]
    fn single_noiseless_trial_is_emd() {
        let x = noisy_tone(5);
        let p = CeemdanParams {
            max_imfs: 8,
            noise_scale: 0.0,
            trials: 1,
        };
        let c = ceemdan(&x, p, 99).unwrap();
        let e = emd(&x, 8).unwrap();
        assert_eq!(c.imfs, e.imfs);
        assert_eq!(c.residue, e.residue);
    }
}
