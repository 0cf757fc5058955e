//! One LSTM layer: sequence forward with cached activations and the exact
//! backward pass through time. Gate order along the 4H axis is i, f, g, o.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::nn::linalg::{matvec_acc, outer_acc, tmatvec_acc};

/// Parameter slices of one layer inside the flat parameter vector.
#[derive(Clone, Copy)]
pub(crate) struct LayerView<'a> {
    /// Input weights, [4H x C_in] row-major.
    pub w: &'a [f64],
    /// Recurrent weights, [4H x H] row-major.
    pub u: &'a [f64],
    /// Gate bias, [4H].
    pub b: &'a [f64],
    pub input_dim: usize,
    pub hidden: usize,
}

/// Mutable gradient slices matching a `LayerView`.
pub(crate) struct LayerGrads<'a> {
    pub w: &'a mut [f64],
    pub u: &'a mut [f64],
    pub b: &'a mut [f64],
}

/// Cached activations of one sequence pass: activated gates per step plus the
/// cell and hidden trajectories.
pub(crate) struct LayerCache {
    /// [M x 4H], gate order i, f, g, o (post-activation).
    pub gates: Vec<f64>,
    /// [M x H].
    pub cells: Vec<f64>,
    /// [M x H].
    pub hidden: Vec<f64>,
    pub steps: usize,
}

/// Runs the layer over a sequence `xs` of M rows with `input_dim` columns.
/// `rmask` is the per-sequence recurrent dropout mask applied to h_prev in
/// the recurrent term (all ones at inference).
pub(crate) fn forward_sequence(layer: LayerView, xs: &[f64], steps: usize, rmask: &[f64]) -> LayerCache {
    let h = layer.hidden;
    let c_in = layer.input_dim;
    debug_assert_eq!(xs.len(), steps * c_in);
    debug_assert_eq!(rmask.len(), h);

    let mut gates = vec![0.0; steps * 4 * h];
    let mut cells = vec![0.0; steps * h];
    let mut hidden = vec![0.0; steps * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut masked = vec![0.0; h];
    let mut z = vec![0.0; 4 * h];

    for t in 0..steps {
        z.copy_from_slice(layer.b);
        matvec_acc(layer.w, 4 * h, c_in, &xs[t * c_in..(t + 1) * c_in], &mut z);
        for j in 0..h {
            masked[j] = rmask[j] * h_prev[j];
        }
        matvec_acc(layer.u, 4 * h, h, &masked, &mut z);

        let g_t = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            g_t[j] = math::sigmoid(z[j]);
            g_t[h + j] = math::sigmoid(z[h + j]);
            g_t[2 * h + j] = math::tanh(z[2 * h + j]);
            g_t[3 * h + j] = math::sigmoid(z[3 * h + j]);
        }
        let c_t = &mut cells[t * h..(t + 1) * h];
        let h_t = &mut hidden[t * h..(t + 1) * h];
        for j in 0..h {
            c_t[j] = g_t[h + j] * c_prev[j] + g_t[j] * g_t[2 * h + j];
            h_t[j] = g_t[3 * h + j] * math::tanh(c_t[j]);
        }
        h_prev.copy_from_slice(h_t);
        c_prev.copy_from_slice(c_t);
    }

    LayerCache {
        gates,
        cells,
        hidden,
        steps,
    }
}

/// Backpropagates through the cached sequence. `upstream_dh` supplies the
/// per-step gradient on h_t (a full [M x H] matrix; for an embedding head all
/// rows but the last are zero). Accumulates parameter gradients into `grads`
/// and, when `dx` is provided, writes input gradients ([M x C_in]).
pub(crate) fn backward_sequence(
    layer: LayerView,
    xs: &[f64],
    cache: &LayerCache,
    rmask: &[f64],
    upstream_dh: &[f64],
    grads: &mut LayerGrads,
    mut dx: Option<&mut [f64]>,
) {
    let h = layer.hidden;
    let c_in = layer.input_dim;
    let steps = cache.steps;
    debug_assert_eq!(upstream_dh.len(), steps * h);
    if let Some(dx) = dx.as_deref() {
        debug_assert_eq!(dx.len(), steps * c_in);
    }

    let mut dh_carry = vec![0.0; h];
    let mut dc_carry = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let mut masked_prev = vec![0.0; h];

    for t in (0..steps).rev() {
        let g_t = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        let c_t = &cache.cells[t * h..(t + 1) * h];
        for j in 0..h {
            let dh = upstream_dh[t * h + j] + dh_carry[j];
            let i = g_t[j];
            let f = g_t[h + j];
            let g = g_t[2 * h + j];
            let o = g_t[3 * h + j];
            let tanh_c = math::tanh(c_t[j]);
            let c_prev = if t > 0 { cache.cells[(t - 1) * h + j] } else { 0.0 };

            let d_o = dh * tanh_c;
            let dc = dc_carry[j] + dh * o * (1.0 - tanh_c * tanh_c);
            let di = dc * g;
            let dg = dc * i;
            let df = dc * c_prev;

            dz[j] = di * i * (1.0 - i);
            dz[h + j] = df * f * (1.0 - f);
            dz[2 * h + j] = dg * (1.0 - g * g);
            dz[3 * h + j] = d_o * o * (1.0 - o);

            dc_carry[j] = dc * f;
        }

        for j in 0..4 * h {
            grads.b[j] += dz[j];
        }
        let x_t = &xs[t * c_in..(t + 1) * c_in];
        outer_acc(&dz, x_t, grads.w);
        for j in 0..h {
            masked_prev[j] = if t > 0 {
                rmask[j] * cache.hidden[(t - 1) * h + j]
            } else {
                0.0
            };
        }
        outer_acc(&dz, &masked_prev, grads.u);

        dh_carry.fill(0.0);
        tmatvec_acc(layer.u, 4 * h, h, &dz, &mut dh_carry);
        for j in 0..h {
            dh_carry[j] *= rmask[j];
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dx_t = &mut dx[t * c_in..(t + 1) * c_in];
            dx_t.fill(0.0);
            tmatvec_acc(layer.w, 4 * h, c_in, &dz, dx_t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sigmoid;
    use approx::assert_abs_diff_eq;

    fn one_unit_layer(w: &[f64; 4], u: &[f64; 4], b: &[f64; 4]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (w.to_vec(), u.to_vec(), b.to_vec())
    }

    #[test]
    fn zero_everything_gives_zero_hidden() {
        let (w, u, b) = one_unit_layer(&[0.0; 4], &[0.0; 4], &[0.0; 4]);
        let layer = LayerView {
            w: &w,
            u: &u,
            b: &b,
            input_dim: 1,
            hidden: 1,
        };
        let cache = forward_sequence(layer, &[0.0, 0.0, 0.0], 3, &[1.0]);
        assert_eq!(cache.hidden, vec![0.0; 3]);
    }

    #[test]
    fn one_unit_cell_matches_hand_arithmetic() {
        // Weights chosen by hand; gate order i, f, g, o.
        let (w, u, b) = one_unit_layer(&[0.5, -0.3, 0.8, 0.2], &[0.1, 0.4, -0.2, 0.3], &[0.0, 1.0, 0.1, -0.1]);
        let layer = LayerView {
            w: &w,
            u: &u,
            b: &b,
            input_dim: 1,
            hidden: 1,
        };
        let cache = forward_sequence(layer, &[1.0], 1, &[1.0]);

        let i = sigmoid(0.5);
        let f = sigmoid(-0.3 + 1.0);
        let g = (0.8f64 + 0.1).tanh();
        let o = sigmoid(0.2 - 0.1);
        let c = f * 0.0 + i * g;
        let h = o * c.tanh();
        assert_abs_diff_eq!(cache.cells[0], c, epsilon = 1e-12);
        assert_abs_diff_eq!(cache.hidden[0], h, epsilon = 1e-12);
        let _ = f;
    }

    #[test]
    fn ones_mask_equals_no_mask_semantics() {
        let (w, u, b) = one_unit_layer(&[0.5, 0.1, 0.7, -0.4], &[0.2, -0.6, 0.3, 0.5], &[0.0; 4]);
        let layer = LayerView {
            w: &w,
            u: &u,
            b: &b,
            input_dim: 1,
            hidden: 1,
        };
        let xs = [0.4, -1.0, 0.7, 0.2];
        let with_ones = forward_sequence(layer, &xs, 4, &[1.0]);
        // A second run must be bit-identical (pure function).
        let again = forward_sequence(layer, &xs, 4, &[1.0]);
        assert_eq!(with_ones.hidden, again.hidden);
        // A zero mask severs the recurrent path: h depends only on x_t.
        let severed = forward_sequence(layer, &xs, 4, &[0.0]);
        let single = forward_sequence(layer, &xs[3..], 1, &[0.0]);
        // With f=sigmoid(0)=0.5 the cell still carries state, so only the
        // gate inputs lose the h_prev term; compare the last step's gates.
        let g4 = &severed.gates[3 * 4..4 * 4];
        let g1 = &single.gates[0..4];
        assert_abs_diff_eq!(g4[0], g1[0], epsilon = 1e-12);
        assert_abs_diff_eq!(g4[3], g1[3], epsilon = 1e-12);
    }

    /// Central finite differences on a tiny layer, final-hidden-sum loss.
    #[test]
    fn backward_matches_finite_differences() {
        let h = 2usize;
        let c_in = 2usize;
        let steps = 4usize;
        let mut rng = crate::seed::rng_from_seed(11);
        let mut params = crate::nn::init::glorot_uniform(&mut rng, c_in, h, 4 * h * c_in);
        params.extend(crate::nn::init::glorot_uniform(&mut rng, h, h, 4 * h * h));
        params.extend(crate::nn::init::gate_bias(h));
        let xs: Vec<f64> = crate::nn::init::glorot_uniform(&mut rng, 1, 1, steps * c_in);
        let rmask = [1.0, 0.8 / 0.8];

        let loss = |p: &[f64]| -> f64 {
            let layer = LayerView {
                w: &p[0..4 * h * c_in],
                u: &p[4 * h * c_in..4 * h * c_in + 4 * h * h],
                b: &p[4 * h * c_in + 4 * h * h..],
                input_dim: c_in,
                hidden: h,
            };
            let cache = forward_sequence(layer, &xs, steps, &rmask);
            cache.hidden[(steps - 1) * h..].iter().sum()
        };

        let layer = LayerView {
            w: &params[0..4 * h * c_in],
            u: &params[4 * h * c_in..4 * h * c_in + 4 * h * h],
            b: &params[4 * h * c_in + 4 * h * h..],
            input_dim: c_in,
            hidden: h,
        };
        let cache = forward_sequence(layer, &xs, steps, &rmask);
        let mut upstream = vec![0.0; steps * h];
        upstream[(steps - 1) * h..].fill(1.0);
        let mut gw = vec![0.0; 4 * h * c_in];
        let mut gu = vec![0.0; 4 * h * h];
        let mut gb = vec![0.0; 4 * h];
        backward_sequence(
            layer,
            &xs,
            &cache,
            &rmask,
            &upstream,
            &mut LayerGrads {
                w: &mut gw,
                u: &mut gu,
                b: &mut gb,
            },
            None,
        );

        let analytic: Vec<f64> = gw.iter().chain(&gu).chain(&gb).copied().collect();
        let step = 1e-6;
        for (k, &ga) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            plus[k] += step;
            let mut minus = params.clone();
            minus[k] -= step;
            let gn = (loss(&plus) - loss(&minus)) / (2.0 * step);
            let denom = ga.abs().max(gn.abs()).max(1e-4);
            assert!(
                ((ga - gn) / denom).abs() < 1e-6,
                "param {k}: analytic {ga} vs numeric {gn}"
            );
        }
    }
}
