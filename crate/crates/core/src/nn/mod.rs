//! The numerical core: a two-layer recurrent encoder with batch
//! normalization and dropout, triplet loss, exact backpropagation through
//! time, Adam updates, and a finite-difference gradient checker.

pub mod adam;
mod batchnorm;
pub mod encoder;
pub mod gradcheck;
mod init;
mod linalg;
pub mod loss;
mod lstm;

pub use adam::{adam_step, AdamState, OptimizerConfig};
pub use encoder::{EncoderConfig, EncoderModel, TrainBatchOutput};
pub use gradcheck::{gradient_check, GradCheckReport, GradCheckSpec};
pub use loss::{triplet_loss, TripletLoss, TripletLossConfig};

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngExt};

use crate::math;

/// An E-dimensional embedding of one time window.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Embedding {
    pub v: Vec<f64>,
}

impl Embedding {
    /// Euclidean distance to another embedding.
    pub fn distance(&self, other: &Embedding) -> f64 {
        math::sqrt(linalg::squared_distance(&self.v, &other.v))
    }
}

/// Inverted dropout masks for one training batch: entries are 0 or 1/(1-p),
/// so expected activations match inference. Recurrent masks are drawn once
/// per sequence and layer (variational style); between-layer masks once per
/// sequence and feature, constant across timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    /// [layer][window] -> [H] mask on h_prev in the recurrent term.
    pub recurrent: Vec<Vec<Vec<f64>>>,
    /// [inter-layer position][window] -> [H] mask after batch norm.
    pub between: Vec<Vec<Vec<f64>>>,
}

fn sample_mask<R: Rng>(rng: &mut R, n: usize, rate: f64) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 - rate;
    (0..n)
        .map(|_| {
            if rng.random_range(0.0..1.0) < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect()
}

impl DropoutMasks {
    /// Identity masks (inference semantics).
    pub fn ones(config: &EncoderConfig, batch: usize) -> Self {
        let h = config.hidden_units;
        DropoutMasks {
            recurrent: vec![vec![vec![1.0; h]; batch]; config.num_layers],
            between: vec![vec![vec![1.0; h]; batch]; config.num_layers - 1],
        }
    }

    /// Fresh masks for one batch, drawn from `rng`.
    pub fn sample<R: Rng>(config: &EncoderConfig, batch: usize, rng: &mut R) -> Self {
        let h = config.hidden_units;
        let recurrent = (0..config.num_layers)
            .map(|_| {
                (0..batch)
                    .map(|_| sample_mask(rng, h, config.recurrent_dropout))
                    .collect()
            })
            .collect();
        let between = (0..config.num_layers - 1)
            .map(|_| {
                (0..batch)
                    .map(|_| sample_mask(rng, h, config.dropout_between))
                    .collect()
            })
            .collect();
        DropoutMasks { recurrent, between }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn embedding_distance() {
        let a = Embedding { v: vec![0.0, 0.0] };
        let b = Embedding { v: vec![3.0, 4.0] };
        assert_eq!(a.distance(&b), 5.0);
        assert_eq!(a.distance(&a), 0.0);
    }

    #[test]
    fn masks_are_inverted_and_reproducible() {
        let config = EncoderConfig::new(12).unwrap();
        let mut rng = seed::rng_from_seed(3);
        let masks = DropoutMasks::sample(&config, 8, &mut rng);
        let mut rng2 = seed::rng_from_seed(3);
        let masks2 = DropoutMasks::sample(&config, 8, &mut rng2);
        assert_eq!(masks, masks2);

        for per_window in &masks.between[0] {
            for &m in per_window {
                assert!(m == 0.0 || (m - 2.0).abs() < 1e-12);
            }
        }
        for per_window in &masks.recurrent[0] {
            for &m in per_window {
                assert!(m == 0.0 || (m - 1.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mask_keep_rate_is_calibrated() {
        let config = EncoderConfig::new(12).unwrap();
        let mut rng = seed::rng_from_seed(9);
        let masks = DropoutMasks::sample(&config, 512, &mut rng);
        let zeros: usize = masks.between[0]
            .iter()
            .flat_map(|m| m.iter())
            .filter(|&&v| v == 0.0)
            .count();
        let total = 512 * config.hidden_units;
        let rate = zeros as f64 / total as f64;
        assert!((rate - 0.5).abs() < 0.02, "dropout rate {rate}");
    }
}
