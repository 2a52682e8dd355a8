//! Convolutions, normalisation and activations with hand-written backward
//! passes. Activations are `[batch, channels, length]` row-major.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

pub const KERNEL: usize = 8;
pub const BN_MOMENTUM: f64 = 0.1;
pub const NORM_EPS: f64 = 1e-5;

/// Weight `[out, in, k]` for a convolution, `[in, out, k]` for a transposed
/// one; bias `[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNorm {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[c], 1.0),
            beta: Tensor::zeros(&[c]),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::filled(&[c], 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    pub fn new(n: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[n], 1.0),
            beta: Tensor::zeros(&[n]),
        }
    }
}

/// `[in, out]` weight and `[out]` bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub lin: usize,
    pub lout: usize,
    pub stride: usize,
    /// Left padding for a convolution, left crop for a transposed one.
    pub offset: usize,
}

impl Geometry {
    /// Position on the long side paired with short-side index `t` and tap
    /// `j`, if it is inside the buffer.
    #[inline]
    fn tap(&self, t: usize, j: usize, long: usize) -> Option<usize> {
        let p = (t * self.stride + j) as isize - self.offset as isize;
        (p >= 0 && (p as usize) < long).then_some(p as usize)
    }
}

pub(crate) fn conv_forward(x: &[f64], conv: &Conv, g: Geometry) -> Vec<f64> {
    let (w, k) = (&conv.w.data, KERNEL);
    let mut y = vec![0.0; g.batch * g.cout * g.lout];
    for b in 0..g.batch {
        for o in 0..g.cout {
            let yr = &mut y[(b * g.cout + o) * g.lout..][..g.lout];
            yr.iter_mut().for_each(|v| *v = conv.b.data[o]);
            for i in 0..g.cin {
                let xr = &x[(b * g.cin + i) * g.lin..][..g.lin];
                let wr = &w[(o * g.cin + i) * k..][..k];
                for (t, yv) in yr.iter_mut().enumerate() {
                    for (j, wv) in wr.iter().enumerate() {
                        if let Some(p) = g.tap(t, j, g.lin) {
                            *yv += wv * xr[p];
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `dx`; accumulates into `grad`.
pub(crate) fn conv_backward(x: &[f64], dy: &[f64], conv: &Conv, g: Geometry, grad: &mut Conv) -> Vec<f64> {
    let k = KERNEL;
    let mut dx = vec![0.0; x.len()];
    for b in 0..g.batch {
        for o in 0..g.cout {
            let dyr = &dy[(b * g.cout + o) * g.lout..][..g.lout];
            grad.b.data[o] += dyr.iter().sum::<f64>();
            for i in 0..g.cin {
                let base = (b * g.cin + i) * g.lin;
                let wo = (o * g.cin + i) * k;
                for (t, &d) in dyr.iter().enumerate() {
                    for j in 0..k {
                        if let Some(p) = g.tap(t, j, g.lin) {
                            grad.w.data[wo + j] += d * x[base + p];
                            dx[base + p] += d * conv.w.data[wo + j];
                        }
                    }
                }
            }
        }
    }
    dx
}

pub(crate) fn conv_t_forward(x: &[f64], conv: &Conv, g: Geometry) -> Vec<f64> {
    let k = KERNEL;
    let mut y = vec![0.0; g.batch * g.cout * g.lout];
    for b in 0..g.batch {
        for o in 0..g.cout {
            let yr = &mut y[(b * g.cout + o) * g.lout..][..g.lout];
            yr.iter_mut().for_each(|v| *v = conv.b.data[o]);
            for i in 0..g.cin {
                let xr = &x[(b * g.cin + i) * g.lin..][..g.lin];
                let wr = &conv.w.data[(i * g.cout + o) * k..][..k];
                for (l, &xv) in xr.iter().enumerate() {
                    for (j, wv) in wr.iter().enumerate() {
                        if let Some(t) = g.tap(l, j, g.lout) {
                            yr[t] += wv * xv;
                        }
                    }
                }
            }
        }
    }
    y
}

pub(crate) fn conv_t_backward(x: &[f64], dy: &[f64], conv: &Conv, g: Geometry, grad: &mut Conv) -> Vec<f64> {
    let k = KERNEL;
    let mut dx = vec![0.0; x.len()];
    for b in 0..g.batch {
        for o in 0..g.cout {
            let dyr = &dy[(b * g.cout + o) * g.lout..][..g.lout];
            grad.b.data[o] += dyr.iter().sum::<f64>();
            for i in 0..g.cin {
                let base = (b * g.cin + i) * g.lin;
                let wo = (i * g.cout + o) * k;
                for l in 0..g.lin {
                    let xv = x[base + l];
                    let mut acc = 0.0;
                    for j in 0..k {
                        if let Some(t) = g.tap(l, j, g.lout) {
                            grad.w.data[wo + j] += dyr[t] * xv;
                            acc += dyr[t] * conv.w.data[wo + j];
                        }
                    }
                    dx[base + l] += acc;
                }
            }
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Biased batch variance; unused in eval mode.
    pub var: Vec<f64>,
    pub train: bool,
}

/// Batch statistics over `(batch, length)` per channel in training mode,
/// running statistics otherwise.
pub(crate) fn bn_forward(x: &[f64], bn: &BatchNorm, batch: usize, c: usize, l: usize, train: bool) -> (Vec<f64>, BnCache) {
    let count = (batch * l) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    if train {
        for ch in 0..c {
            let (mut s, mut s2) = (0.0, 0.0);
            for b in 0..batch {
                for v in &x[(b * c + ch) * l..][..l] {
                    s += v;
                }
            }
            let m = s / count;
            for b in 0..batch {
                for v in &x[(b * c + ch) * l..][..l] {
                    s2 += (v - m) * (v - m);
                }
            }
            mean[ch] = m;
            var[ch] = s2 / count;
        }
    } else {
        mean.copy_from_slice(&bn.running_mean.data);
        var.copy_from_slice(&bn.running_var.data);
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for b in 0..batch {
        for ch in 0..c {
            let off = (b * c + ch) * l;
            for t in off..off + l {
                xhat[t] = (x[t] - mean[ch]) * inv_std[ch];
                y[t] = bn.gamma.data[ch] * xhat[t] + bn.beta.data[ch];
            }
        }
    }
    (y, BnCache { xhat, inv_std, mean, var, train })
}

pub(crate) fn bn_backward(
    dy: &[f64],
    cache: &BnCache,
    bn: &BatchNorm,
    batch: usize,
    c: usize,
    l: usize,
    grad: &mut BatchNorm,
) -> Vec<f64> {
    let count = (batch * l) as f64;
    let mut dx = vec![0.0; dy.len()];
    for ch in 0..c {
        let (mut sum_d, mut sum_dx) = (0.0, 0.0);
        for b in 0..batch {
            let off = (b * c + ch) * l;
            for t in off..off + l {
                sum_d += dy[t];
                sum_dx += dy[t] * cache.xhat[t];
            }
        }
        grad.gamma.data[ch] += sum_dx;
        grad.beta.data[ch] += sum_d;
        let g = bn.gamma.data[ch];
        let s = cache.inv_std[ch];
        for b in 0..batch {
            let off = (b * c + ch) * l;
            for t in off..off + l {
                dx[t] = if cache.train {
                    g * s * (dy[t] - sum_d / count - cache.xhat[t] * sum_dx / count)
                } else {
                    g * s * dy[t]
                };
            }
        }
    }
    dx
}

/// Moves running statistics towards the batch statistics of `cache`.
pub(crate) fn bn_update_running(bn: &mut BatchNorm, cache: &BnCache, count: usize) {
    let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
    for ch in 0..cache.mean.len() {
        let rm = &mut bn.running_mean.data[ch];
        *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * cache.mean[ch];
        let rv = &mut bn.running_var.data[ch];
        *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * cache.var[ch] * unbias;
    }
}

pub(crate) fn relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Gradient through a ReLU whose output was `y`.
pub(crate) fn relu_backward(dy: &mut [f64], y: &[f64]) {
    dy.iter_mut().zip(y).for_each(|(d, &v)| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Normalises each row of `x [rows, n]`.
pub(crate) fn ln_forward(x: &[f64], ln: &LayerNorm, n: usize) -> (Vec<f64>, LnCache) {
    let rows = x.len() / n;
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    let mut y = vec![0.0; x.len()];
    for r in 0..rows {
        let row = &x[r * n..][..n];
        let m = row.iter().sum::<f64>() / n as f64;
        let v = row.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n as f64;
        let s = 1.0 / (v + NORM_EPS).sqrt();
        inv_std[r] = s;
        for j in 0..n {
            let h = (row[j] - m) * s;
            xhat[r * n + j] = h;
            y[r * n + j] = ln.gamma.data[j] * h + ln.beta.data[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn ln_backward(dy: &[f64], cache: &LnCache, ln: &LayerNorm, n: usize, grad: &mut LayerNorm) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len()];
    for (r, &s) in cache.inv_std.iter().enumerate() {
        let (mut sum_d, mut sum_dx) = (0.0, 0.0);
        for j in 0..n {
            let i = r * n + j;
            let dh = dy[i] * ln.gamma.data[j];
            grad.gamma.data[j] += dy[i] * cache.xhat[i];
            grad.beta.data[j] += dy[i];
            sum_d += dh;
            sum_dx += dh * cache.xhat[i];
        }
        for j in 0..n {
            let i = r * n + j;
            let dh = dy[i] * ln.gamma.data[j];
            dx[i] = s * (dh - sum_d / n as f64 - cache.xhat[i] * sum_dx / n as f64);
        }
    }
    dx
}
