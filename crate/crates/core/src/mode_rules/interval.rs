//! Zero-crossing interval thresholding.

use super::wavelet::{median, universal_threshold, MAD_SCALE};

/// Decay of mode energy with mode index for white noise.
pub const ENERGY_DECAY: f64 = 0.719 / 2.01;
/// Final threshold divisor.
pub const THRESHOLD_DIVISOR: f64 = 4.0;

/// Half-open index ranges between sign changes.
pub fn zero_crossing_intervals(x: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..x.len() {
        if (x[i] >= 0.0) != (x[i - 1] >= 0.0) {
            out.push((start, i));
            start = i;
        }
    }
    if !x.is_empty() {
        out.push((start, x.len()));
    }
    out
}

/// Scales every interval by `max(0, 1 - t / |extremum|)`.
pub fn interval_shrink(x: &[f64], t: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    for (s, e) in zero_crossing_intervals(x) {
        let peak = x[s..e].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g = if peak > 0.0 { (1.0 - t / peak).max(0.0) } else { 0.0 };
        y[s..e].iter_mut().for_each(|v| *v *= g);
    }
    y
}

/// `median|x| / 0.6745`.
pub fn mad_sigma(x: &[f64]) -> f64 {
    let mut abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    median(&mut abs) / MAD_SCALE
}

/// Threshold of mode `k` (1-based) for a noise level `sigma` and length `n`.
pub fn mode_threshold(sigma: f64, n: usize, k: usize) -> f64 {
    universal_threshold(sigma, n) * ENERGY_DECAY.powf((k as f64 - 1.0) / 2.0) / THRESHOLD_DIVISOR
}

/// Thresholds every mode; `sigma` is estimated from the first mode, then
/// re-estimated once from what the first pass removed from it.
///
/// Returns the shrunk modes and the final per-mode thresholds.
pub fn interval_threshold_modes(modes: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let Some(first) = modes.first() else {
        return (Vec::new(), Vec::new());
    };
    let n = first.len();
    let pass = |sigma: f64| -> (Vec<Vec<f64>>, Vec<f64>) {
        let ts: Vec<f64> = (1..=modes.len()).map(|k| mode_threshold(sigma, n, k)).collect();
        let out = modes.iter().zip(&ts).map(|(m, &t)| interval_shrink(m, t)).collect();
        (out, ts)
    };
    let (first_pass, _) = pass(mad_sigma(first));
    let removed: Vec<f64> = first.iter().zip(&first_pass[0]).map(|(a, b)| a - b).collect();
    pass(mad_sigma(&removed))
}
