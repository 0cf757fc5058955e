//! Minimal dense kernels over row-major flat slices, sized for 64-unit models.

/// out += A·x for row-major A of shape [rows x cols].
pub(crate) fn matvec_acc(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        out[r] += acc;
    }
}

/// out += Aᵀ·y for row-major A of shape [rows x cols]; y has rows entries.
pub(crate) fn tmatvec_acc(a: &[f64], rows: usize, cols: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for r in 0..rows {
        let yr = y[r];
        if yr == 0.0 {
            continue;
        }
        let row = &a[r * cols..(r + 1) * cols];
        for (o, w) in out.iter_mut().zip(row) {
            *o += yr * w;
        }
    }
}

/// out += g ⊗ x, with out row-major of shape [g.len() x x.len()].
pub(crate) fn outer_acc(g: &[f64], x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), g.len() * x.len());
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &mut out[r * cols..(r + 1) * cols];
        for (o, xi) in row.iter_mut().zip(x) {
            *o += gr * xi;
        }
    }
}

/// Squared Euclidean distance between equal-length vectors.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matvec_matches_hand_arithmetic() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let x = [1.0, 0.5, -1.0];
        let mut out = vec![0.0; 2];
        matvec_acc(&a, 2, 3, &x, &mut out);
        assert_eq!(out, vec![1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);

        matvec_acc(&a, 2, 3, &x, &mut out);
        assert_eq!(out, vec![-2.0, 1.0]);
    }

    #[test]
    fn transpose_matvec() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let y = [1.0, -1.0];
        let mut out = vec![0.0; 3];
        tmatvec_acc(&a, 2, 3, &y, &mut out);
        assert_eq!(out, vec![1.0 - 4.0, 2.0 - 5.0, 3.0 - 6.0]);
    }

    #[test]
    fn outer_product_accumulates() {
        let g = [2.0, -1.0];
        let x = [1.0, 3.0];
        let mut out = vec![1.0; 4];
        outer_acc(&g, &x, &mut out);
        assert_eq!(out, vec![3.0, 7.0, 0.0, -2.0]);
    }

    #[test]
    fn squared_distance_basics() {
        assert_eq!(squared_distance(&[0.0, 0.0], &[3.0, 4.0]), 25.0);
        assert_eq!(squared_distance(&[1.0], &[1.0]), 0.0);
    }
}
