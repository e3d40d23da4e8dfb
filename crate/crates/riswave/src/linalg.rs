//! Thin wrappers around the dense eigen/SVD backend.
//!
//! Gram matrices assembled from products are symmetrized before
//! factorization so floating-point asymmetry cannot leak into eigenvalues,
//! and eigenvalue lists are returned in descending order, matching the
//! stream-ordering convention used by the rate expressions.

use crate::{CMat, Error};

/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-10;

fn symmetrize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Hermitian eigendecomposition with eigenvalues sorted descending and
/// eigenvector columns permuted to match. The input is symmetrized first.
pub fn hermitian_eigen_desc(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Descending Hermitian eigenvalues without eigenvectors.
pub fn hermitian_eigenvalues_desc(m: &CMat) -> Vec<f64> {
    let vals = symmetrize(m).symmetric_eigenvalues();
    let mut out: Vec<f64> = vals.iter().copied().collect();
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    out
}

/// Clips small negative eigenvalues (floating-point noise on PSD Gram
/// matrices) to zero.
pub fn clip_nonneg(values: &mut [f64]) {
    for v in values.iter_mut() {
        if *v < 0.0 {
            debug_assert!(*v > -1e-6, "eigenvalue {v} far below zero on a Gram matrix");
            *v = 0.0;
        }
    }
}

/// Numerical rank: singular values above `RANK_REL_TOL` times the largest
/// singular value count toward the rank.
pub fn rank(m: &CMat) -> usize {
    let sv = nalgebra::SVD::new(m.clone(), false, false).singular_values;
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_REL_TOL * max).count()
}

/// First `n_cols` left-singular vectors (descending singular values).
pub fn left_singular_vectors(m: &CMat, n_cols: usize) -> CMat {
    let svd = nalgebra::SVD::new(m.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    assert!(
        n_cols <= u.ncols(),
        "requested {n_cols} singular vectors from a rank-{} factorization",
        u.ncols()
    );
    u.columns(0, n_cols).into_owned()
}

/// log2 det(I + snr·M) for a Hermitian PSD `M`, via eigenvalues of the
/// symmetrized argument. Negative eigenvalues beyond tolerance signal a
/// corrupted quadratic form upstream and surface as an error.
pub fn logdet_rate_term(m: &CMat, snr: f64) -> Result<f64, Error> {
    let vals = symmetrize(m).symmetric_eigenvalues();
    let max = vals.iter().copied().fold(0.0_f64, f64::max);
    let tol = 1e-8 * max.max(1.0);
    let mut sum = 0.0;
    for &v in vals.iter() {
        if v < -tol {
            return Err(Error::NotPsd { min_eig: v });
        }
        sum += (1.0 + snr * v.max(0.0)).log2();
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigen_desc_matches_known_spectrum() {
        // [[2, i], [-i, 3]] has eigenvalues (5 ± sqrt(5)) / 2.
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen_desc(&m);
        let hi = (5.0 + 5.0_f64.sqrt()) / 2.0;
        let lo = (5.0 - 5.0_f64.sqrt()) / 2.0;
        assert!((vals[0] - hi).abs() < 1e-12);
        assert!((vals[1] - lo).abs() < 1e-12);
        // Eigenvector property M v = λ v for the leading pair.
        let v0 = vecs.column(0).into_owned();
        let residual = (&m * &v0 - v0.scale(vals[0])).norm();
        assert!(residual < 1e-12);
    }

    #[test]
    fn eigenvalues_only_agrees_with_full() {
        let m = CMat::from_fn(4, 4, |i, j| c((i * j) as f64, (i as f64 - j as f64) * 0.5));
        let g = m.adjoint() * &m;
        let (full, _) = hermitian_eigen_desc(&g);
        let only = hermitian_eigenvalues_desc(&g);
        for (a, b) in full.iter().zip(only.iter()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn rank_of_outer_product_is_one() {
        let v = crate::CVec::from_fn(5, |i, _| c(1.0 + i as f64, 0.3 * i as f64));
        let m = &v * v.adjoint();
        assert_eq!(rank(&m), 1);
        assert_eq!(rank(&CMat::zeros(3, 3)), 0);
    }

    #[test]
    fn logdet_zero_snr_is_zero() {
        let m = CMat::identity(3, 3);
        assert_eq!(logdet_rate_term(&m, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn logdet_rejects_indefinite_argument() {
        let m = CMat::from_diagonal(&crate::CVec::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(logdet_rate_term(&m, 1.0), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn clip_only_touches_negatives() {
        let mut v = vec![2.0, 0.0, -1e-12];
        clip_nonneg(&mut v);
        assert_eq!(v, vec![2.0, 0.0, 0.0]);
    }
}
