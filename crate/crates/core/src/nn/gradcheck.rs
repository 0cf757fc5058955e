//! Finite-difference verification of the analytic gradients. A small seeded
//! model and batch are built, the margin is nudged so no triplet sits on the
//! hinge kink, and every parameter is perturbed both ways with central
//! differences.

use alloc::string::String;
use alloc::vec::Vec;

use rand::RngExt;

use crate::data::ModalityKind;
use crate::error::CoreError;
use crate::nn::encoder::{EncoderConfig, EncoderModel};
use crate::nn::loss::{triplet_loss, TripletLossConfig};
use crate::nn::DropoutMasks;
use crate::seed;
use crate::window::FeatureWindow;
use crate::Result;

/// Shape of the check. The default is small enough to difference every
/// parameter in well under a second.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckSpec {
    /// Modality providing the input channel count.
    pub modality: ModalityKind,
    pub hidden_units: usize,
    pub window_len: usize,
    pub n_triplets: usize,
    /// When set, sampled dropout masks are held fixed across both the
    /// analytic and numeric passes.
    pub with_dropout: bool,
    pub seed: u64,
    /// Central-difference step.
    pub step: f64,
    /// Starting margin; nudged upward until every triplet clears the kink.
    pub margin: f64,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        GradCheckSpec {
            modality: ModalityKind::GravitySensor,
            hidden_units: 4,
            window_len: 10,
            n_triplets: 2,
            with_dropout: false,
            seed: 11,
            step: 1e-5,
            margin: 1.0,
        }
    }
}

/// Outcome of a full check, with the worst parameter block identified.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_block: String,
    pub block_errors: Vec<(String, f64)>,
    pub params_checked: usize,
    pub active_triplets: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

fn random_window(
    modality: ModalityKind,
    m: usize,
    rng: &mut impl rand::Rng,
) -> Result<FeatureWindow> {
    let cols = modality.feature_columns();
    let data: Vec<f64> = (0..m * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureWindow::from_raw(modality, m, data)
}

fn batch_loss(
    model: &EncoderModel,
    windows: &[FeatureWindow],
    triplets: &[[usize; 3]],
    masks: &DropoutMasks,
    loss_cfg: TripletLossConfig,
) -> Result<f64> {
    let (embeddings, _) = model.forward_train_batch(windows, masks)?;
    let total: f64 = triplets
        .iter()
        .map(|&[a, p, n]| triplet_loss(&embeddings[a], &embeddings[p], &embeddings[n], loss_cfg).loss)
        .sum();
    Ok(total / triplets.len() as f64)
}

/// Central-difference gradient of the mean triplet loss with respect to
/// every model parameter, holding windows and masks fixed.
pub fn numeric_gradient(
    model: &EncoderModel,
    windows: &[FeatureWindow],
    triplets: &[[usize; 3]],
    masks: &DropoutMasks,
    loss_cfg: TripletLossConfig,
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = model.clone();
    let n = probe.params().len();
    let mut grad = Vec::with_capacity(n);
    for idx in 0..n {
        let original = probe.params()[idx];
        probe.params_mut()[idx] = original + step;
        let plus = batch_loss(&probe, windows, triplets, masks, loss_cfg)?;
        probe.params_mut()[idx] = original - step;
        let minus = batch_loss(&probe, windows, triplets, masks, loss_cfg)?;
        probe.params_mut()[idx] = original;
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

/// Worst relative disagreement between two gradient vectors, with the index
/// where it occurs. Each entry is scored as |a - n| / max(|a|, |n|, 1e-4).
pub fn compare_gradients(analytic: &[f64], numeric: &[f64]) -> (f64, usize) {
    debug_assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0;
    let mut worst_idx = 0;
    for (idx, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let denom = a.abs().max(n.abs()).max(1e-4);
        let rel = (a - n).abs() / denom;
        if rel > worst {
            worst = rel;
            worst_idx = idx;
        }
    }
    (worst, worst_idx)
}

/// Runs the full check: analytic gradients from one training batch against
/// central differences over every parameter.
pub fn gradient_check(spec: &GradCheckSpec) -> Result<GradCheckReport> {
    if spec.hidden_units == 0 || spec.hidden_units > 8 {
        return Err(CoreError::InvalidConfig(String::from(
            "gradient check is sized for 1..=8 hidden units",
        )));
    }
    if spec.n_triplets == 0 || spec.window_len == 0 || spec.step <= 0.0 {
        return Err(CoreError::InvalidConfig(String::from(
            "gradient check needs positive triplets, window length, and step",
        )));
    }
    let input_dim = spec.modality.feature_columns();
    let config = EncoderConfig::with_hidden(input_dim, spec.hidden_units)?;
    let model = EncoderModel::new(config, seed::derive(spec.seed, "gradcheck.model"))?;

    let mut rng = seed::derived_rng(spec.seed, "gradcheck.data");
    let b = 3 * spec.n_triplets;
    let windows: Vec<FeatureWindow> = (0..b)
        .map(|_| random_window(spec.modality, spec.window_len, &mut rng))
        .collect::<Result<_>>()?;
    let triplets: Vec<[usize; 3]> = (0..spec.n_triplets)
        .map(|i| [3 * i, 3 * i + 1, 3 * i + 2])
        .collect();
    let masks = if spec.with_dropout {
        let mut mask_rng = seed::derived_rng(spec.seed, "gradcheck.masks");
        DropoutMasks::sample(&config, b, &mut mask_rng)
    } else {
        DropoutMasks::ones(&config, b)
    };

    let (embeddings, _) = model.forward_train_batch(&windows, &masks)?;
    let raw_margins: Vec<f64> = triplets
        .iter()
        .map(|&[a, p, n]| {
            let d_ap: f64 = embeddings[a]
                .v
                .iter()
                .zip(&embeddings[p].v)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let d_an: f64 = embeddings[a]
                .v
                .iter()
                .zip(&embeddings[n].v)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d_ap - d_an
        })
        .collect();
    let mut margin = spec.margin;
    let clearance = 1e-2;
    let mut attempts = 0;
    while raw_margins
        .iter()
        .any(|&r| (r + margin).abs() < clearance)
        || raw_margins.iter().all(|&r| r + margin <= 0.0)
    {
        margin += 2.1 * clearance;
        attempts += 1;
        if attempts > 1000 {
            return Err(CoreError::InvalidConfig(String::from(
                "could not place the margin away from the hinge kink",
            )));
        }
    }
    let loss_cfg = TripletLossConfig { margin };

    let analytic = model.train_batch(&windows, &triplets, &masks, loss_cfg)?;
    let numeric = numeric_gradient(&model, &windows, &triplets, &masks, loss_cfg, spec.step)?;

    let mut block_errors = Vec::new();
    let mut max_rel_error = 0.0;
    let mut worst_block = String::new();
    for (name, range) in config.param_blocks() {
        let (rel, _) = compare_gradients(&analytic.grads[range.clone()], &numeric[range]);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_block = name.clone();
        }
        block_errors.push((name, rel));
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_block,
        block_errors,
        params_checked: numeric.len(),
        active_triplets: analytic.active_triplets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_differences() {
        let report = gradient_check(&GradCheckSpec::default()).unwrap();
        assert!(report.active_triplets > 0);
        assert!(
            report.passes(1e-4),
            "worst block {} at {}",
            report.worst_block,
            report.max_rel_error
        );
    }

    #[test]
    fn gradients_match_with_dropout_active() {
        let spec = GradCheckSpec {
            with_dropout: true,
            seed: 29,
            ..GradCheckSpec::default()
        };
        let report = gradient_check(&spec).unwrap();
        assert!(report.active_triplets > 0);
        assert!(
            report.passes(1e-4),
            "worst block {} at {}",
            report.worst_block,
            report.max_rel_error
        );
    }

    #[test]
    fn keystroke_shape_also_passes() {
        let spec = GradCheckSpec {
            modality: ModalityKind::TouchKeystroke,
            hidden_units: 3,
            window_len: 7,
            seed: 5,
            ..GradCheckSpec::default()
        };
        let report = gradient_check(&spec).unwrap();
        assert!(report.passes(1e-4), "{}", report.max_rel_error);
    }

    #[test]
    fn corrupted_gradients_are_flagged() {
        let spec = GradCheckSpec::default();
        let config =
            EncoderConfig::with_hidden(spec.modality.feature_columns(), spec.hidden_units).unwrap();
        let model =
            EncoderModel::new(config, seed::derive(spec.seed, "gradcheck.model")).unwrap();
        let mut rng = seed::derived_rng(spec.seed, "gradcheck.data");
        let windows: Vec<FeatureWindow> = (0..6)
            .map(|_| random_window(spec.modality, spec.window_len, &mut rng).unwrap())
            .collect();
        let triplets = [[0usize, 1, 2], [3, 4, 5]];
        let masks = DropoutMasks::ones(&config, 6);
        let loss_cfg = TripletLossConfig { margin: 2.0 };
        let out = model
            .train_batch(&windows, &triplets, &masks, loss_cfg)
            .unwrap();
        let numeric =
            numeric_gradient(&model, &windows, &triplets, &masks, loss_cfg, 1e-5).unwrap();

        let mut corrupted = out.grads.clone();
        let worst_idx = corrupted
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap();
        corrupted[worst_idx] += 1.0 + corrupted[worst_idx].abs();
        let (clean_err, _) = compare_gradients(&out.grads, &numeric);
        let (bad_err, bad_idx) = compare_gradients(&corrupted, &numeric);
        assert!(clean_err < 1e-4, "clean {clean_err}");
        assert!(bad_err > 1e-2, "corrupted {bad_err}");
        assert_eq!(bad_idx, worst_idx);
    }
}
