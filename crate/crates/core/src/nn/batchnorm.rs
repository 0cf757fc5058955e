//! Batch normalization over per-step recurrent outputs. Statistics pool all
//! timesteps of all sequences in the batch (population variance); inference
//! uses exponentially averaged running statistics.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Per-feature mean and population variance over every row of every sequence.
pub(crate) fn batch_stats(seqs: &[&[f64]], h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; h];
    let mut count = 0usize;
    for seq in seqs {
        debug_assert_eq!(seq.len() % h, 0);
        for row in seq.chunks_exact(h) {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        count += seq.len() / h;
    }
    let n = count.max(1) as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; h];
    for seq in seqs {
        for row in seq.chunks_exact(h) {
            for j in 0..h {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
    }
    for v in var.iter_mut() {
        *v /= n;
    }
    (mean, var)
}

/// y = gamma * (x - mean) / sqrt(var + eps) + beta, written into `out`.
pub(crate) fn normalize_into(
    xs: &[f64],
    h: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    beta: &[f64],
    out: &mut [f64],
) {
    debug_assert_eq!(xs.len(), out.len());
    for (x_row, y_row) in xs.chunks_exact(h).zip(out.chunks_exact_mut(h)) {
        for j in 0..h {
            y_row[j] = gamma[j] * (x_row[j] - mean[j]) * inv_std[j] + beta[j];
        }
    }
}

pub(crate) fn inv_std_from_var(var: &[f64], eps: f64) -> Vec<f64> {
    var.iter().map(|&v| 1.0 / math::sqrt(v + eps)).collect()
}

/// Accumulated sums needed by the coupled batch-norm backward pass.
pub(crate) struct BnBackward {
    pub dgamma: Vec<f64>,
    pub dbeta: Vec<f64>,
    sum_dxhat: Vec<f64>,
    sum_dxhat_xhat: Vec<f64>,
    count: usize,
}

impl BnBackward {
    pub fn new(h: usize) -> Self {
        BnBackward {
            dgamma: vec![0.0; h],
            dbeta: vec![0.0; h],
            sum_dxhat: vec![0.0; h],
            sum_dxhat_xhat: vec![0.0; h],
            count: 0,
        }
    }

    /// Feeds one sequence's upstream gradient dy and its source rows x.
    pub fn accumulate(&mut self, dy: &[f64], xs: &[f64], h: usize, mean: &[f64], inv_std: &[f64], gamma: &[f64]) {
        debug_assert_eq!(dy.len(), xs.len());
        for (dy_row, x_row) in dy.chunks_exact(h).zip(xs.chunks_exact(h)) {
            for j in 0..h {
                let xhat = (x_row[j] - mean[j]) * inv_std[j];
                let dxhat = dy_row[j] * gamma[j];
                self.dgamma[j] += dy_row[j] * xhat;
                self.dbeta[j] += dy_row[j];
                self.sum_dxhat[j] += dxhat;
                self.sum_dxhat_xhat[j] += dxhat * xhat;
            }
        }
        self.count += dy.len() / h;
    }

    /// Writes dL/dx for one sequence once every sequence has been fed:
    /// dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)).
    pub fn input_grad_into(
        &self,
        dy: &[f64],
        xs: &[f64],
        h: usize,
        mean: &[f64],
        inv_std: &[f64],
        gamma: &[f64],
        dx: &mut [f64],
    ) {
        let n = self.count.max(1) as f64;
        for ((dy_row, x_row), dx_row) in dy
            .chunks_exact(h)
            .zip(xs.chunks_exact(h))
            .zip(dx.chunks_exact_mut(h))
        {
            for j in 0..h {
                let xhat = (x_row[j] - mean[j]) * inv_std[j];
                let dxhat = dy_row[j] * gamma[j];
                dx_row[j] = inv_std[j]
                    * (dxhat - self.sum_dxhat[j] / n - xhat * self.sum_dxhat_xhat[j] / n);
            }
        }
    }
}

/// running = momentum * running + (1 - momentum) * batch.
pub(crate) fn update_running(running: &mut [f64], batch: &[f64], momentum: f64) {
    for (r, &b) in running.iter_mut().zip(batch) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
}
