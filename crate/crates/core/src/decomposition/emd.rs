//! Empirical mode decomposition by sifting.

use super::spline::natural_spline;
use super::{ImfSet, Method};
use crate::error::{Error, Result};
use crate::signal::SampleBuffer;

pub const MIN_LEN: usize = 16;
pub const SD_THRESHOLD: f64 = 0.2;
pub const MAX_SIFTS: usize = 100;

/// Indices of local maxima and minima. Flat runs count once, at their middle.
pub(crate) fn extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let n = x.len();
    let (mut maxima, mut minima) = (Vec::new(), Vec::new());
    let mut i = 1;
    while i + 1 < n {
        if x[i] == x[i - 1] {
            i += 1;
            continue;
        }
        let rising = x[i] > x[i - 1];
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 < n {
            let mid = (i + j) / 2;
            if rising && x[j + 1] < x[i] {
                maxima.push(mid);
            } else if !rising && x[j + 1] > x[i] {
                minima.push(mid);
            }
        }
        i = j + 1;
    }
    (maxima, minima)
}

/// Spline envelope through `idx`, mirrored about both end samples with two
/// extrema on each side.
fn envelope(x: &[f64], idx: &[usize]) -> Vec<f64> {
    let n = x.len();
    let last = (n - 1) as f64;
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(idx.len() + 4);
    let head: Vec<usize> = idx.iter().copied().filter(|&i| i > 0).take(2).collect();
    for &i in head.iter().rev() {
        knots.push((-(i as f64), x[i]));
    }
    knots.extend(idx.iter().map(|&i| (i as f64, x[i])));
    for &i in idx.iter().rev().filter(|&&i| i < n - 1).take(2) {
        knots.push((2.0 * last - i as f64, x[i]));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
    natural_spline(&xs, &ys, n)
}

/// Number of extrema below which a signal is treated as a residue.
const MIN_EXTREMA: usize = 3;

pub(crate) fn has_oscillation(x: &[f64]) -> bool {
    let (mx, mn) = extrema(x);
    mx.len() + mn.len() >= MIN_EXTREMA && !mx.is_empty() && !mn.is_empty()
}

/// Sifts the first IMF out of `x`; `None` when `x` is already a residue.
pub(crate) fn sift(x: &[f64]) -> Option<Vec<f64>> {
    if !has_oscillation(x) {
        return None;
    }
    let mut h = x.to_vec();
    let mut sifts = 0;
    while sifts < MAX_SIFTS {
        let (mx, mn) = extrema(&h);
        if mx.is_empty() || mn.is_empty() || mx.len() + mn.len() < MIN_EXTREMA {
            break;
        }
        let upper = envelope(&h, &mx);
        let lower = envelope(&h, &mn);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((v, u), l) in h.iter_mut().zip(&upper).zip(&lower) {
            let m = 0.5 * (u + l);
            den += *v * *v;
            num += m * m;
            *v -= m;
        }
        sifts += 1;
        if den == 0.0 || num / den < SD_THRESHOLD {
            break;
        }
    }
    Some(h)
}

/// Decomposes into at most `max_imfs` IMFs plus a residue.
///
/// The residue is `input - sum(imfs)`, so the decomposition is complete up
/// to rounding.
pub fn emd(buf: &SampleBuffer, max_imfs: usize) -> Result<ImfSet> {
    if buf.len() < MIN_LEN {
        return Err(Error::TooShort {
            len: buf.len(),
            need: MIN_LEN,
        });
    }
    if max_imfs == 0 {
        return Err(Error::TooFewModes { need: 1, got: 0 });
    }
    let mut residue = buf.samples().to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < max_imfs {
        let Some(s) = sift(&residue) else { break };
        residue.iter_mut().zip(&s).for_each(|(r, v)| *r -= v);
        imfs.push(buf.derived(s));
    }
    Ok(ImfSet {
        imfs,
        residue: buf.derived(residue),
        method: Method::Emd,
        center_freqs: None,
    })
}
