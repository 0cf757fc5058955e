//! Triplet loss over role-tagged embeddings:
//! L = max{0, d²(vA, vP) − d²(vA, vN) + α} with Euclidean d.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::linalg::squared_distance;
use crate::nn::Embedding;

/// Margin between positive and negative squared distances.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripletLossConfig {
    pub margin: f64,
}

impl Default for TripletLossConfig {
    fn default() -> Self {
        TripletLossConfig { margin: 1.0 }
    }
}

/// Loss value plus exact subgradients on the three embeddings. At the hinge
/// kink (argument exactly zero) the inactive branch is taken: gradients are
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negative: Vec<f64>,
}

pub fn triplet_loss(
    anchor: &Embedding,
    positive: &Embedding,
    negative: &Embedding,
    cfg: TripletLossConfig,
) -> TripletLoss {
    let a = &anchor.v;
    let p = &positive.v;
    let n = &negative.v;
    debug_assert_eq!(a.len(), p.len());
    debug_assert_eq!(a.len(), n.len());

    let d_ap = squared_distance(a, p);
    let d_an = squared_distance(a, n);
    let raw = d_ap - d_an + cfg.margin;
    let dim = a.len();
    if raw <= 0.0 {
        return TripletLoss {
            loss: 0.0,
            grad_anchor: vec![0.0; dim],
            grad_positive: vec![0.0; dim],
            grad_negative: vec![0.0; dim],
        };
    }
    let mut grad_anchor = vec![0.0; dim];
    let mut grad_positive = vec![0.0; dim];
    let mut grad_negative = vec![0.0; dim];
    for j in 0..dim {
        grad_anchor[j] = 2.0 * (n[j] - p[j]);
        grad_positive[j] = -2.0 * (a[j] - p[j]);
        grad_negative[j] = 2.0 * (a[j] - n[j]);
    }
    TripletLoss {
        loss: raw,
        grad_anchor,
        grad_positive,
        grad_negative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn emb(v: &[f64]) -> Embedding {
        Embedding { v: v.to_vec() }
    }

    #[test]
    fn hinge_boundary_is_zero() {
        // anchor = positive, negative at squared distance exactly alpha.
        let a = emb(&[0.0, 0.0]);
        let n = emb(&[1.0, 0.0]);
        let out = triplet_loss(&a, &a, &n, TripletLossConfig { margin: 1.0 });
        assert_eq!(out.loss, 0.0);
        assert!(out.grad_anchor.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn degenerate_triple_costs_margin() {
        let v = emb(&[0.3, -0.7, 1.1]);
        let out = triplet_loss(&v, &v, &v, TripletLossConfig { margin: 1.0 });
        assert_eq!(out.loss, 1.0);
    }

    #[test]
    fn tagged_arithmetic_example() {
        // d²(A,P) = 1.0, d²(A,N) = 1.5, alpha = 1 → loss 0.5.
        let a = emb(&[0.0, 0.0]);
        let p = emb(&[1.0, 0.0]);
        let n = emb(&[0.0, 1.224744871391589]);
        let out = triplet_loss(&a, &p, &n, TripletLossConfig { margin: 1.0 });
        assert_abs_diff_eq!(out.loss, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let a = emb(&[0.2, -0.4, 0.9]);
        let p = emb(&[0.1, -0.1, 1.2]);
        let n = emb(&[0.5, 0.3, 0.2]);
        let cfg = TripletLossConfig { margin: 1.0 };
        let out = triplet_loss(&a, &p, &n, cfg);
        assert!(out.loss > 0.0);

        let step = 1e-6;
        let perturbed = |vec_idx: usize, j: usize, delta: f64| {
            let mut va = a.v.clone();
            let mut vp = p.v.clone();
            let mut vn = n.v.clone();
            match vec_idx {
                0 => va[j] += delta,
                1 => vp[j] += delta,
                _ => vn[j] += delta,
            }
            triplet_loss(&emb(&va), &emb(&vp), &emb(&vn), cfg).loss
        };
        for j in 0..3 {
            for (vec_idx, grad) in [
                (0, &out.grad_anchor),
                (1, &out.grad_positive),
                (2, &out.grad_negative),
            ] {
                let plus = perturbed(vec_idx, j, step);
                let minus = perturbed(vec_idx, j, -step);
                let numeric = (plus - minus) / (2.0 * step);
                assert_abs_diff_eq!(grad[j], numeric, epsilon = 1e-6);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn non_negative_and_hinge_zero(
                a in prop::collection::vec(-3.0f64..3.0, 4),
                p in prop::collection::vec(-3.0f64..3.0, 4),
                n in prop::collection::vec(-3.0f64..3.0, 4),
                margin in 0.1f64..2.0,
            ) {
                let out = triplet_loss(&emb(&a), &emb(&p), &emb(&n), TripletLossConfig { margin });
                prop_assert!(out.loss >= 0.0);
                let d_ap = crate::nn::linalg::squared_distance(&a, &p);
                let d_an = crate::nn::linalg::squared_distance(&a, &n);
                if d_an >= d_ap + margin {
                    prop_assert_eq!(out.loss, 0.0);
                } else {
                    prop_assert!((out.loss - (d_ap - d_an + margin)).abs() < 1e-12);
                }
            }
        }
    }
}
