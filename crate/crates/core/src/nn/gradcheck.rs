//! Central finite-difference check of the analytic gradients.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::model::{backward, forward, ModelConfig, ModelParams, Pass};
use super::tensor::Tensor;
use crate::error::Result;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub batch: usize,
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub tolerance: f64,
    /// Check at most this many entries per tensor (evenly spaced).
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            batch: 2,
            step: 1e-5,
            floor: 1e-5,
            tolerance: 1e-4,
            max_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub bottleneck: String,
    pub checked: usize,
    /// Entries skipped because a perturbation flipped a ReLU.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub worst: String,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

struct Probe<'a> {
    config: &'a ModelConfig,
    x: &'a Tensor,
    proj: &'a [f64],
    pattern: &'a [bool],
}

impl Probe<'_> {
    /// Loss and whether the ReLU pattern matches the unperturbed pass.
    fn eval(&self, p: &ModelParams, x: &Tensor) -> (f64, bool) {
        let (y, cache) = forward(p, self.config, x, Pass::Train { dropout_seed: 0 }).expect("checked shapes");
        let loss = y.data.iter().zip(self.proj).map(|(a, b)| a * b).sum();
        (loss, cache.relu_pattern() == self.pattern)
    }

    /// Central difference around the current value of `slot`, shrinking the
    /// step when it crosses a kink. `None` if no step avoids one.
    fn numeric(&self, step: f64, mut set: impl FnMut(f64) -> (f64, bool)) -> Option<f64> {
        let mut h = step;
        for _ in 0..3 {
            let (lp, okp) = set(h);
            let (lm, okm) = set(-h);
            set(0.0);
            if okp && okm {
                return Some((lp - lm) / (2.0 * h));
            }
            h /= 10.0;
        }
        None
    }
}

fn entries(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < len => (0..m).map(|i| i * len / m).collect(),
        _ => (0..len).collect(),
    }
}

/// Checks every trainable parameter and the input gradient of the loss
/// `sum(y * R)` for a random projection `R`, in training mode without
/// dropout.
pub fn gradcheck(config: &ModelConfig, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let config = ModelConfig {
        dropout: 0.0,
        ..config.clone()
    };
    let params = ModelParams::init(&config)?;
    let d = config.input_len;
    let mut rng = seed::child_rng(opts.seed, "gradcheck", 0);
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let x = Tensor::from_vec(&[opts.batch, 1, d], normal(opts.batch * d));
    let proj = normal(opts.batch * d);

    let (y, cache) = forward(&params, &config, &x, Pass::Train { dropout_seed: 0 })?;
    let grads = backward(&params, &config, &cache, &Tensor::from_vec(&y.shape, proj.clone()))?;
    let pattern = cache.relu_pattern();
    let probe = Probe {
        config: &config,
        x: &x,
        proj: &proj,
        pattern: &pattern,
    };

    let analytic: Vec<(String, &Tensor)> = grads.params.tensors().into_iter().filter(|t| t.2).map(|t| (t.0, t.1)).collect();
    let jobs: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(ti, (_, t))| entries(t.len(), opts.max_per_tensor).into_iter().map(move |e| (ti, e)))
        .collect();

    let slots: Vec<usize> = params
        .tensors()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.2)
        .map(|(i, _)| i)
        .collect();
    let results: Vec<(usize, usize, Option<f64>)> = jobs
        .par_iter()
        .map_init(
            || params.clone(),
            |p, &(ti, e)| {
                let orig = p.tensors()[slots[ti]].1.data[e];
                let num = probe.numeric(opts.step, |h| {
                    p.tensors_mut()[slots[ti]].1.data[e] = orig + h;
                    probe.eval(p, probe.x)
                });
                (ti, e, num)
            },
        )
        .collect();

    let mut report = GradcheckReport {
        bottleneck: format!("{:?}", config.bottleneck).to_lowercase(),
        checked: 0,
        kinks: 0,
        max_rel_error: 0.0,
        worst: String::new(),
        tolerance: opts.tolerance,
        passed: true,
    };
    let mut record = |name: String, a: f64, n: Option<f64>| match n {
        None => report.kinks += 1,
        Some(n) => {
            report.checked += 1;
            let r = relative_error(a, n, opts.floor);
            if r > report.max_rel_error {
                report.max_rel_error = r;
                report.worst = format!("{name} (analytic {a:.6e}, numeric {n:.6e})");
            }
        }
    };
    for (ti, e, n) in results {
        let (name, t) = &analytic[ti];
        record(format!("{name}[{e}]"), t.data[e], n);
    }

    let mut xp = x.clone();
    for e in entries(d * opts.batch, opts.max_per_tensor) {
        let orig = x.data[e];
        let n = probe.numeric(opts.step, |h| {
            xp.data[e] = orig + h;
            probe.eval(&params, &xp)
        });
        record(format!("input[{e}]"), grads.input.data[e], n);
    }
    report.passed = report.max_rel_error <= opts.tolerance && report.checked > 0;
    Ok(report)
}
