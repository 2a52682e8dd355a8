use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// A planned forward/inverse transform pair of a fixed length.
pub struct Fft {
    len: usize,
    forward: Arc<dyn rustfft::Fft<f64>>,
    inverse: Arc<dyn rustfft::Fft<f64>>,
}

impl Fft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.len);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        self.forward.process(buf);
    }

    /// Unnormalized inverse, scaled by `1/len` here so that
    /// `inverse(forward(x)) == x`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        self.inverse.process(buf);
        let scale = 1.0 / self.len as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

/// Full complex spectrum of a real sequence (unnormalized).
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    if x.is_empty() {
        return Vec::new();
    }
    Fft::new(x.len()).forward_real(x)
}

/// Real part of the normalized inverse transform.
pub fn ifft_real(spec: &[Complex64]) -> Vec<f64> {
    if spec.is_empty() {
        return Vec::new();
    }
    let mut buf = spec.to_vec();
    Fft::new(spec.len()).inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}
