//! Adam with a step learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::model::ModelParams;

/// `(first epoch, learning rate)` pairs in increasing epoch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub table: Vec<(usize, f64)>,
}

impl Default for LrSchedule {
    /// 0.01, then 0.001 from epoch 3, then 0.0001 from epoch 30 (0-based).
    fn default() -> Self {
        Self {
            table: vec![(0, 1e-2), (3, 1e-3), (30, 1e-4)],
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self { table: vec![(0, lr)] }
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        self.table
            .iter()
            .take_while(|(from, _)| *from <= epoch)
            .last()
            .or(self.table.first())
            .map_or(0.0, |&(_, lr)| lr)
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
}

impl AdamState {
    pub fn new(params: &ModelParams, schedule: LrSchedule) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
        }
    }

    /// One bias-corrected update of every trainable tensor.
    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, epoch: usize) {
        self.step += 1;
        let lr = self.schedule.lr(epoch);
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let g = grads.tensors();
        let m = self.m.tensors_mut();
        let v = self.v.tensors_mut();
        for (((_, p, trainable), (_, g, _)), ((_, m, _), (_, v, _))) in
            params.tensors_mut().into_iter().zip(g).zip(m.into_iter().zip(v))
        {
            if !trainable {
                continue;
            }
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                p.data[i] -= lr * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + self.eps);
            }
        }
        params.generation += 1;
    }
}
