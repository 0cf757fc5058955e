//! The recurrent encoder: flat parameter layout, initialization, inference,
//! and the batch-coupled forward/backward used for training. Batch
//! normalization ties the windows of a batch together, so training passes
//! operate on whole batches; gradients are accumulated chunk-by-chunk in a
//! fixed order, making runs bit-identical at any worker count.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::CoreError;
use crate::nn::batchnorm::{
    batch_stats, inv_std_from_var, normalize_into, update_running, BnBackward,
};
use crate::nn::init;
use crate::nn::loss::{triplet_loss, TripletLossConfig};
use crate::nn::lstm::{backward_sequence, forward_sequence, LayerCache, LayerGrads, LayerView};
use crate::nn::{DropoutMasks, Embedding};
use crate::seed;
use crate::window::FeatureWindow;
use crate::Result;

/// Architecture of the encoder. The embedding is the final hidden state of
/// the last layer, so `embedding_dim` must equal `hidden_units`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub num_layers: usize,
    pub embedding_dim: usize,
    pub dropout_between: f64,
    pub recurrent_dropout: f64,
}

impl EncoderConfig {
    /// Default architecture: two 64-unit layers, dropout 0.5 between layers,
    /// recurrent dropout 0.2.
    pub fn new(input_dim: usize) -> Result<Self> {
        Self::with_hidden(input_dim, 64)
    }

    pub fn with_hidden(input_dim: usize, hidden_units: usize) -> Result<Self> {
        let cfg = EncoderConfig {
            input_dim,
            hidden_units,
            num_layers: 2,
            embedding_dim: hidden_units,
            dropout_between: 0.5,
            recurrent_dropout: 0.2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_units == 0 || self.num_layers == 0 {
            return Err(CoreError::InvalidConfig(String::from(
                "encoder dimensions must be positive",
            )));
        }
        if self.embedding_dim != self.hidden_units {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "embedding_dim {} must equal hidden_units {} (embedding = final hidden state)",
                self.embedding_dim,
                self.hidden_units
            )));
        }
        for rate in [self.dropout_between, self.recurrent_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(CoreError::InvalidConfig(alloc::format!(
                    "dropout rates must lie in [0, 1), got {rate}"
                )));
            }
        }
        Ok(())
    }

    fn layer_input_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden_units
        }
    }

    fn layer_param_len(&self, l: usize) -> usize {
        let h = self.hidden_units;
        4 * h * self.layer_input_dim(l) + 4 * h * h + 4 * h
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|j| self.layer_param_len(j)).sum()
    }

    fn w_range(&self, l: usize) -> Range<usize> {
        let h = self.hidden_units;
        let start = self.layer_offset(l);
        start..start + 4 * h * self.layer_input_dim(l)
    }

    fn u_range(&self, l: usize) -> Range<usize> {
        let h = self.hidden_units;
        let start = self.w_range(l).end;
        start..start + 4 * h * h
    }

    fn b_range(&self, l: usize) -> Range<usize> {
        let h = self.hidden_units;
        let start = self.u_range(l).end;
        start..start + 4 * h
    }

    fn bn_base(&self) -> usize {
        self.layer_offset(self.num_layers)
    }

    fn gamma_range(&self, k: usize) -> Range<usize> {
        let h = self.hidden_units;
        let start = self.bn_base() + k * 2 * h;
        start..start + h
    }

    fn beta_range(&self, k: usize) -> Range<usize> {
        let h = self.hidden_units;
        let start = self.bn_base() + k * 2 * h + h;
        start..start + h
    }

    /// Total number of trainable parameters.
    pub fn param_len(&self) -> usize {
        self.bn_base() + (self.num_layers - 1) * 2 * self.hidden_units
    }

    /// Named parameter blocks in layout order, for reporting.
    pub fn param_blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut blocks = Vec::new();
        for l in 0..self.num_layers {
            blocks.push((alloc::format!("layer{l}.W"), self.w_range(l)));
            blocks.push((alloc::format!("layer{l}.U"), self.u_range(l)));
            blocks.push((alloc::format!("layer{l}.b"), self.b_range(l)));
        }
        for k in 0..self.num_layers - 1 {
            blocks.push((alloc::format!("bn{k}.gamma"), self.gamma_range(k)));
            blocks.push((alloc::format!("bn{k}.beta"), self.beta_range(k)));
        }
        blocks
    }
}

/// Default batch-norm running-average momentum.
pub const BN_MOMENTUM: f64 = 0.99;
/// Default batch-norm variance stabilizer.
pub const BN_EPS: f64 = 1e-5;

/// A trained or initialized encoder. Immutable during inference; training
/// mutates parameters only through `params_mut` and `update_running_stats`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncoderModel {
    config: EncoderConfig,
    params: Vec<f64>,
    running_mean: Vec<Vec<f64>>,
    running_var: Vec<Vec<f64>>,
    bn_momentum: f64,
    bn_eps: f64,
}

impl EncoderModel {
    /// Initializes a model: Glorot-uniform input weights, orthogonal
    /// recurrent weights per gate, forget bias 1, gamma 1, beta 0, running
    /// mean 0, running variance 1.
    pub fn new(config: EncoderConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_units;
        let mut rng = seed::rng_from_seed(init_seed);
        let mut params = vec![0.0; config.param_len()];
        for l in 0..config.num_layers {
            let c_in = config.layer_input_dim(l);
            let w = init::glorot_uniform(&mut rng, c_in, h, 4 * h * c_in);
            params[config.w_range(l)].copy_from_slice(&w);
            let u_range = config.u_range(l);
            for gate in 0..4 {
                let q = init::orthogonal(&mut rng, h);
                params[u_range.start + gate * h * h..u_range.start + (gate + 1) * h * h]
                    .copy_from_slice(&q);
            }
            params[config.b_range(l)].copy_from_slice(&init::gate_bias(h));
        }
        for k in 0..config.num_layers - 1 {
            params[config.gamma_range(k)].fill(1.0);
        }
        Ok(EncoderModel {
            config,
            params,
            running_mean: vec![vec![0.0; h]; config.num_layers - 1],
            running_var: vec![vec![1.0; h]; config.num_layers - 1],
            bn_momentum: BN_MOMENTUM,
            bn_eps: BN_EPS,
        })
    }

    /// Rebuilds a model from stored parts, validating shapes.
    pub fn from_parts(
        config: EncoderConfig,
        params: Vec<f64>,
        running_mean: Vec<Vec<f64>>,
        running_var: Vec<Vec<f64>>,
        bn_momentum: f64,
        bn_eps: f64,
    ) -> Result<Self> {
        config.validate()?;
        if params.len() != config.param_len() {
            return Err(CoreError::DimensionMismatch(alloc::format!(
                "parameter vector has {} entries, layout needs {}",
                params.len(),
                config.param_len()
            )));
        }
        let h = config.hidden_units;
        let positions = config.num_layers - 1;
        if running_mean.len() != positions
            || running_var.len() != positions
            || running_mean.iter().any(|v| v.len() != h)
            || running_var.iter().any(|v| v.len() != h)
        {
            return Err(CoreError::DimensionMismatch(String::from(
                "running statistics do not match the layer layout",
            )));
        }
        if params.iter().any(|v| !v.is_finite())
            || running_var.iter().flatten().any(|&v| !v.is_finite() || v < 0.0)
            || running_mean.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(CoreError::InvalidConfig(String::from(
                "model contains non-finite or negative-variance entries",
            )));
        }
        if !(0.0..1.0).contains(&bn_momentum) || bn_eps <= 0.0 {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "bad batch-norm constants: momentum {bn_momentum}, eps {bn_eps}"
            )));
        }
        Ok(EncoderModel {
            config,
            params,
            running_mean,
            running_var,
            bn_momentum,
            bn_eps,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn bn_running_mean(&self) -> &[Vec<f64>] {
        &self.running_mean
    }

    pub fn bn_running_var(&self) -> &[Vec<f64>] {
        &self.running_var
    }

    pub fn bn_momentum(&self) -> f64 {
        self.bn_momentum
    }

    pub fn bn_eps(&self) -> f64 {
        self.bn_eps
    }

    fn layer_view(&self, l: usize) -> LayerView<'_> {
        LayerView {
            w: &self.params[self.config.w_range(l)],
            u: &self.params[self.config.u_range(l)],
            b: &self.params[self.config.b_range(l)],
            input_dim: self.config.layer_input_dim(l),
            hidden: self.config.hidden_units,
        }
    }

    fn gamma(&self, k: usize) -> &[f64] {
        &self.params[self.config.gamma_range(k)]
    }

    fn beta(&self, k: usize) -> &[f64] {
        &self.params[self.config.beta_range(k)]
    }

    fn check_window(&self, window: &FeatureWindow) -> Result<()> {
        if window.cols() != self.config.input_dim {
            return Err(CoreError::ChannelMismatch {
                window: window.cols(),
                model: self.config.input_dim,
            });
        }
        Ok(())
    }

    /// Embeds one window with inference semantics: running batch-norm
    /// statistics, identity dropout.
    pub fn forward_infer(&self, window: &FeatureWindow) -> Result<Embedding> {
        self.check_window(window)?;
        let h = self.config.hidden_units;
        let m = window.m();
        let ones = vec![1.0; h];
        let mut input: Vec<f64> = window.data().to_vec();
        for l in 0..self.config.num_layers {
            let cache = forward_sequence(self.layer_view(l), &input, m, &ones);
            if l + 1 < self.config.num_layers {
                let inv_std = inv_std_from_var(&self.running_var[l], self.bn_eps);
                let mut out = vec![0.0; m * h];
                normalize_into(
                    &cache.hidden,
                    h,
                    &self.running_mean[l],
                    &inv_std,
                    self.gamma(l),
                    self.beta(l),
                    &mut out,
                );
                input = out;
            } else {
                let v = cache.hidden[(m - 1) * h..].to_vec();
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(CoreError::NonFiniteEmbedding(String::from(
                        "inference produced a non-finite embedding",
                    )));
                }
                return Ok(Embedding { v });
            }
        }
        unreachable!("num_layers >= 1 is enforced by validate")
    }

    /// Train-mode forward over a whole batch. Batch-norm statistics pool all
    /// timesteps of all windows; dropout masks come from the caller so a
    /// fixed mask set yields a deterministic pass.
    pub fn forward_train_batch(
        &self,
        windows: &[FeatureWindow],
        masks: &DropoutMasks,
    ) -> Result<(Vec<Embedding>, BatchCache)> {
        let l_total = self.config.num_layers;
        let h = self.config.hidden_units;
        let b = windows.len();
        if b == 0 {
            return Err(CoreError::EmptySequence(String::from("empty training batch")));
        }
        if masks.recurrent.len() != l_total
            || masks.recurrent.iter().any(|m| m.len() != b)
            || masks.between.len() != l_total - 1
            || masks.between.iter().any(|m| m.len() != b)
        {
            return Err(CoreError::DimensionMismatch(String::from(
                "dropout masks do not match batch and layer shapes",
            )));
        }
        for w in windows {
            self.check_window(w)?;
        }

        let mut layer_caches: Vec<Vec<LayerCache>> = Vec::with_capacity(l_total);
        let mut inputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(l_total - 1);
        let mut bn_mean = Vec::with_capacity(l_total - 1);
        let mut bn_var = Vec::with_capacity(l_total - 1);
        let mut bn_inv_std = Vec::with_capacity(l_total - 1);

        let view0 = self.layer_view(0);
        let caches0: Vec<LayerCache> = map_chunks(b, |range| {
            range
                .map(|i| {
                    forward_sequence(view0, windows[i].data(), windows[i].m(), &masks.recurrent[0][i])
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
        layer_caches.push(caches0);

        for l in 1..l_total {
            let k = l - 1;
            let prev = &layer_caches[k];
            let hid_refs: Vec<&[f64]> = prev.iter().map(|c| c.hidden.as_slice()).collect();
            let (mean, var) = batch_stats(&hid_refs, h);
            let inv_std = inv_std_from_var(&var, self.bn_eps);
            let gamma = self.gamma(k);
            let beta = self.beta(k);

            let layer_input: Vec<Vec<f64>> = map_chunks(b, |range| {
                range
                    .map(|i| {
                        let mut out = vec![0.0; prev[i].steps * h];
                        normalize_into(&prev[i].hidden, h, &mean, &inv_std, gamma, beta, &mut out);
                        let mask = &masks.between[k][i];
                        for row in out.chunks_exact_mut(h) {
                            for j in 0..h {
                                row[j] *= mask[j];
                            }
                        }
                        out
                    })
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect();

            let view = self.layer_view(l);
            let caches: Vec<LayerCache> = map_chunks(b, |range| {
                range
                    .map(|i| {
                        forward_sequence(
                            view,
                            &layer_input[i],
                            layer_input[i].len() / h,
                            &masks.recurrent[l][i],
                        )
                    })
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect();

            inputs.push(layer_input);
            layer_caches.push(caches);
            bn_mean.push(mean);
            bn_var.push(var);
            bn_inv_std.push(inv_std);
        }

        let last = &layer_caches[l_total - 1];
        let mut embeddings = Vec::with_capacity(b);
        for cache in last {
            let v = cache.hidden[(cache.steps - 1) * h..].to_vec();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CoreError::NonFiniteEmbedding(String::from(
                    "training forward produced a non-finite embedding",
                )));
            }
            embeddings.push(Embedding { v });
        }

        Ok((
            embeddings,
            BatchCache {
                layer_caches,
                inputs,
                bn_mean,
                bn_var,
                bn_inv_std,
            },
        ))
    }

    /// Exact gradients of the batch loss given per-window gradients on the
    /// embeddings. Parameter gradients are reduced chunk-by-chunk in index
    /// order, so results are independent of the worker count.
    pub fn backward_batch(
        &self,
        windows: &[FeatureWindow],
        masks: &DropoutMasks,
        cache: &BatchCache,
        d_emb: &[Vec<f64>],
    ) -> Vec<f64> {
        let l_total = self.config.num_layers;
        let h = self.config.hidden_units;
        let b = windows.len();
        debug_assert_eq!(d_emb.len(), b);

        let mut grads = vec![0.0; self.config.param_len()];
        let mut upstream: Vec<Vec<f64>> = (0..b)
            .map(|i| {
                let m = cache.layer_caches[l_total - 1][i].steps;
                let mut u = vec![0.0; m * h];
                u[(m - 1) * h..].copy_from_slice(&d_emb[i]);
                u
            })
            .collect();

        for l in (0..l_total).rev() {
            let view = self.layer_view(l);
            let c_in = view.input_dim;
            let w_len = 4 * h * c_in;
            let u_len = 4 * h * h;

            struct ChunkGrads {
                w: Vec<f64>,
                u: Vec<f64>,
                b: Vec<f64>,
                dx: Vec<Vec<f64>>,
            }
            let chunk_outs: Vec<ChunkGrads> = map_chunks(b, |range| {
                let mut out = ChunkGrads {
                    w: vec![0.0; w_len],
                    u: vec![0.0; u_len],
                    b: vec![0.0; 4 * h],
                    dx: Vec::with_capacity(range.len()),
                };
                for i in range {
                    let seq_cache = &cache.layer_caches[l][i];
                    let xs: &[f64] = if l == 0 {
                        windows[i].data()
                    } else {
                        &cache.inputs[l - 1][i]
                    };
                    let mut dx_buf = if l > 0 {
                        vec![0.0; seq_cache.steps * c_in]
                    } else {
                        Vec::new()
                    };
                    backward_sequence(
                        view,
                        xs,
                        seq_cache,
                        &masks.recurrent[l][i],
                        &upstream[i],
                        &mut LayerGrads {
                            w: &mut out.w,
                            u: &mut out.u,
                            b: &mut out.b,
                        },
                        if l > 0 { Some(&mut dx_buf) } else { None },
                    );
                    out.dx.push(dx_buf);
                }
                out
            });

            for chunk in &chunk_outs {
                accumulate(&mut grads[self.config.w_range(l)], &chunk.w);
                accumulate(&mut grads[self.config.u_range(l)], &chunk.u);
                accumulate(&mut grads[self.config.b_range(l)], &chunk.b);
            }

            if l > 0 {
                let k = l - 1;
                let gamma = self.gamma(k);
                let mean = &cache.bn_mean[k];
                let inv_std = &cache.bn_inv_std[k];
                let dys: Vec<Vec<f64>> = chunk_outs
                    .into_iter()
                    .flat_map(|c| c.dx)
                    .enumerate()
                    .map(|(i, mut dx)| {
                        let mask = &masks.between[k][i];
                        for row in dx.chunks_exact_mut(h) {
                            for j in 0..h {
                                row[j] *= mask[j];
                            }
                        }
                        dx
                    })
                    .collect();

                let mut bn_bwd = BnBackward::new(h);
                for i in 0..b {
                    bn_bwd.accumulate(
                        &dys[i],
                        &cache.layer_caches[k][i].hidden,
                        h,
                        mean,
                        inv_std,
                        gamma,
                    );
                }
                accumulate(&mut grads[self.config.gamma_range(k)], &bn_bwd.dgamma);
                accumulate(&mut grads[self.config.beta_range(k)], &bn_bwd.dbeta);

                upstream = (0..b)
                    .map(|i| {
                        let hidden = &cache.layer_caches[k][i].hidden;
                        let mut dh = vec![0.0; hidden.len()];
                        bn_bwd.input_grad_into(&dys[i], hidden, h, mean, inv_std, gamma, &mut dh);
                        dh
                    })
                    .collect();
            }
        }

        grads
    }

    /// Forward + triplet loss + backward over one batch. Triplet entries
    /// index into `windows` as (anchor, positive, negative). The loss is the
    /// mean over triplets; the returned batch statistics let the trainer
    /// update running batch-norm averages after the optimizer step.
    pub fn train_batch(
        &self,
        windows: &[FeatureWindow],
        triplets: &[[usize; 3]],
        masks: &DropoutMasks,
        loss_cfg: TripletLossConfig,
    ) -> Result<TrainBatchOutput> {
        if triplets.is_empty() {
            return Err(CoreError::EmptySequence(String::from(
                "train_batch needs at least one triplet",
            )));
        }
        let (embeddings, cache) = self.forward_train_batch(windows, masks)?;
        let e = self.config.embedding_dim;
        let n_t = triplets.len() as f64;
        let mut d_emb = vec![vec![0.0; e]; windows.len()];
        let mut total = 0.0;
        let mut active = 0usize;
        for &[ia, ip, inn] in triplets {
            let out = triplet_loss(&embeddings[ia], &embeddings[ip], &embeddings[inn], loss_cfg);
            if out.loss > 0.0 {
                active += 1;
            }
            total += out.loss;
            for j in 0..e {
                d_emb[ia][j] += out.grad_anchor[j] / n_t;
                d_emb[ip][j] += out.grad_positive[j] / n_t;
                d_emb[inn][j] += out.grad_negative[j] / n_t;
            }
        }
        let grads = self.backward_batch(windows, masks, &cache, &d_emb);
        Ok(TrainBatchOutput {
            mean_loss: total / n_t,
            active_triplets: active,
            grads,
            bn_means: cache.bn_mean,
            bn_vars: cache.bn_var,
        })
    }

    /// Folds one batch's statistics into the running averages:
    /// running = momentum * running + (1 - momentum) * batch.
    pub fn update_running_stats(&mut self, means: &[Vec<f64>], vars: &[Vec<f64>]) {
        debug_assert_eq!(means.len(), self.running_mean.len());
        for (k, (m, v)) in means.iter().zip(vars).enumerate() {
            update_running(&mut self.running_mean[k], m, self.bn_momentum);
            update_running(&mut self.running_var[k], v, self.bn_momentum);
        }
    }
}

/// Everything a backward pass needs from the forward pass.
pub struct BatchCache {
    layer_caches: Vec<Vec<LayerCache>>,
    inputs: Vec<Vec<Vec<f64>>>,
    bn_mean: Vec<Vec<f64>>,
    bn_var: Vec<Vec<f64>>,
    bn_inv_std: Vec<Vec<f64>>,
}

/// Result of one training batch: mean loss, flat gradients in parameter
/// layout order, and the batch-norm statistics observed.
pub struct TrainBatchOutput {
    pub mean_loss: f64,
    pub active_triplets: usize,
    pub grads: Vec<f64>,
    pub bn_means: Vec<Vec<f64>>,
    pub bn_vars: Vec<Vec<f64>>,
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Fixed work-partition size: chunk boundaries never depend on the worker
/// count, so per-chunk partial sums reduce identically in serial and
/// parallel builds.
const CHUNK: usize = 16;

fn chunk_ranges(count: usize) -> Vec<Range<usize>> {
    (0..count)
        .step_by(CHUNK)
        .map(|start| start..(start + CHUNK).min(count))
        .collect()
}

#[cfg(feature = "parallel")]
fn map_chunks<R, F>(count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    use rayon::prelude::*;
    chunk_ranges(count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_chunks<R, F>(count: usize, f: F) -> Vec<R>
where
    F: Fn(Range<usize>) -> R,
{
    chunk_ranges(count).into_iter().map(f).collect()
}
