//! Weight initialization: Glorot-uniform input weights, orthogonal recurrent
//! weights (one orthogonal matrix per gate), forget bias 1.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngExt};

use crate::math;

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
pub(crate) fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

/// One standard normal draw via Box-Muller.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.random_range(0.0..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let r = math::sqrt(-2.0 * math::ln(u1));
        return r * math::cos(core::f64::consts::TAU * u2);
    }
}

/// Row-major orthogonal [n x n] matrix: modified Gram-Schmidt over the
/// columns of a Gaussian matrix.
pub(crate) fn orthogonal<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut a: Vec<f64> = (0..n * n).map(|_| standard_normal(rng)).collect();
    for j in 0..n {
        for k in 0..j {
            let mut dot = 0.0;
            for r in 0..n {
                dot += a[r * n + k] * a[r * n + j];
            }
            for r in 0..n {
                a[r * n + j] -= dot * a[r * n + k];
            }
        }
        let mut norm = 0.0;
        for r in 0..n {
            norm += a[r * n + j] * a[r * n + j];
        }
        let mut norm = math::sqrt(norm);
        if norm < 1e-10 {
            // A numerically dependent column; nudge it and re-orthogonalize.
            a[j * n + j] += 1.0;
            for k in 0..j {
                let mut dot = 0.0;
                for r in 0..n {
                    dot += a[r * n + k] * a[r * n + j];
                }
                for r in 0..n {
                    a[r * n + j] -= dot * a[r * n + k];
                }
            }
            norm = 0.0;
            for r in 0..n {
                norm += a[r * n + j] * a[r * n + j];
            }
            norm = math::sqrt(norm);
        }
        for r in 0..n {
            a[r * n + j] /= norm;
        }
    }
    a
}

/// Gate bias vector [4H]: zeros with the forget slice set to 1.
pub(crate) fn gate_bias(h: usize) -> Vec<f64> {
    let mut b = vec![0.0; 4 * h];
    b[h..2 * h].fill(1.0);
    b
}
