//! Windowed examples, L1 training with early stopping, and inference on
//! whole recordings.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward, ModelConfig, ModelParams, Pass};
use super::optim::{AdamState, LrSchedule};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::SampleBuffer;
use crate::synthesis::dataset::load_segments;

/// One training window, both halves scaled by the same factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub noisy: Vec<f64>,
    pub clean: Vec<f64>,
}

/// Cuts aligned `(clean, noisy)` recordings into non-overlapping windows of
/// `d` samples, each scaled so that its noisy half peaks at 1. All-zero
/// windows are skipped; at most `per_recording` windows are taken from each.
pub fn windows(pairs: &[(&[f64], &[f64])], d: usize, per_recording: Option<usize>) -> Vec<Example> {
    let mut out = Vec::new();
    for (clean, noisy) in pairs {
        let n = clean.len().min(noisy.len()) / d;
        for w in 0..n.min(per_recording.unwrap_or(usize::MAX)) {
            let c = &clean[w * d..][..d];
            let x = &noisy[w * d..][..d];
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                continue;
            }
            out.push(Example {
                noisy: x.iter().map(|v| v / scale).collect(),
                clean: c.iter().map(|v| v / scale).collect(),
            });
        }
    }
    out
}

/// Windows from every segment of a dataset manifest.
pub fn examples_from_manifest(manifest: &Path, d: usize, per_recording: Option<usize>) -> Result<Vec<Example>> {
    let segs = load_segments(manifest)?;
    let pairs: Vec<(&[f64], &[f64])> = segs.iter().map(|s| (s.clean.samples(), s.noisy.samples())).collect();
    Ok(windows(&pairs, d, per_recording))
}

/// Mean absolute error and its gradient `sign(y - t) / count`.
pub fn l1_loss(y: &[f64], t: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let loss = y.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let grad = y
        .iter()
        .zip(t)
        .map(|(a, b)| {
            let d = a - b;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    (loss, grad)
}

/// Relative decrease below which a loss counts as unchanged (summation
/// order noise).
pub const MIN_IMPROVEMENT: f64 = 1e-12;

/// Stops once `patience` epochs pass without a lower loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Records the loss of `epoch`; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        let improved = if self.best.is_finite() {
            loss < self.best - MIN_IMPROVEMENT * self.best.abs()
        } else {
            loss < self.best
        };
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
        }
        (improved, epoch >= self.best_epoch + self.patience)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 15,
            batch_size: 4,
            schedule: LrSchedule::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Monitored loss: validation L1 when a validation set is given,
    /// otherwise the mean training L1 of the epoch.
    pub loss: f64,
    pub train_loss: f64,
    pub best_loss: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest monitored loss.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn batch_tensor(batch: &[&Example], d: usize, f: impl Fn(&Example) -> &[f64]) -> Tensor {
    let mut data = Vec::with_capacity(batch.len() * d);
    for e in batch {
        data.extend_from_slice(f(e));
    }
    Tensor::from_vec(&[batch.len(), 1, d], data)
}

/// Eval-mode mean L1 over `examples`.
pub fn evaluate_l1(params: &ModelParams, config: &ModelConfig, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = config.input_len;
    let refs: Vec<&Example> = examples.iter().collect();
    let mut total = 0.0;
    for chunk in refs.chunks(16) {
        let (y, _) = forward(params, config, &batch_tensor(chunk, d, |e| &e.noisy), Pass::Eval)?;
        let t = batch_tensor(chunk, d, |e| &e.clean);
        total += l1_loss(&y.data, &t.data).0 * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Mini-batch Adam on the L1 loss from `config.seed`-initialised weights.
pub fn train(
    config: &ModelConfig,
    examples: &[Example],
    validation: Option<&[Example]>,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if examples.is_empty() || validation.is_some_and(|v| v.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let d = config.input_len;
    if let Some(e) = examples.iter().find(|e| e.noisy.len() != d || e.clean.len() != d) {
        return Err(Error::ShapeMismatch(format!("example of length {} for d = {d}", e.noisy.len())));
    }
    let mut params = ModelParams::init(config)?;
    let mut adam = AdamState::new(&params, opts.schedule.clone());
    let mut stopper = EarlyStopping::new(opts.patience);
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut stopped_early = false;
    let batch_size = opts.batch_size.max(1);

    for epoch in 0..opts.max_epochs {
        order.shuffle(&mut seed::child_rng(opts.seed, "shuffle", epoch as u64));
        let mut sum = 0.0;
        for (bi, idx) in order.chunks(batch_size).enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            let x = batch_tensor(&batch, d, |e| &e.noisy);
            let t = batch_tensor(&batch, d, |e| &e.clean);
            let dropout_seed = seed::derive(opts.seed, "dropout", (epoch * order.len() + bi) as u64);
            let (y, cache) = forward(&params, config, &x, Pass::Train { dropout_seed })?;
            let (loss, g) = l1_loss(&y.data, &t.data);
            sum += loss * batch.len() as f64;
            let grads = backward(&params, config, &cache, &Tensor::from_vec(&y.shape, g))?;
            params.update_running_stats(&cache);
            adam.update(&mut params, &grads.params, epoch);
        }
        let train_loss = sum / examples.len() as f64;
        let loss = match validation {
            Some(v) => evaluate_l1(&params, config, v)?,
            None => train_loss,
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite { index: epoch });
        }
        let (improved, stop) = stopper.observe(epoch, loss);
        if improved {
            best = params.clone();
        }
        history.push(EpochRecord {
            epoch,
            lr: opts.schedule.lr(epoch),
            loss,
            train_loss,
            best_loss: stopper.best,
            improved,
        });
        if stop {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch: stopper.best_epoch,
        stopped_early,
    })
}

/// Denoises a recording window by window (the last window zero-padded),
/// with the same per-window peak scaling as training.
pub fn enhance(params: &ModelParams, config: &ModelConfig, noisy: &SampleBuffer) -> Result<SampleBuffer> {
    let d = config.input_len;
    let x = noisy.samples();
    let mut out = Vec::with_capacity(x.len() + d);
    for chunk in x.chunks(d) {
        let mut w = chunk.to_vec();
        w.resize(d, 0.0);
        let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            out.extend(std::iter::repeat_n(0.0, chunk.len()));
            continue;
        }
        w.iter_mut().for_each(|v| *v /= scale);
        let (y, _) = forward(params, config, &Tensor::from_vec(&[1, 1, d], w), Pass::Eval)?;
        out.extend(y.data[..chunk.len()].iter().map(|v| v * scale));
    }
    noisy.with_samples(out)
}
