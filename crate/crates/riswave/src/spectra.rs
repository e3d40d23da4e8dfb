//! Eigen-structure of the statistical CSI.
//!
//! The closed-form rate expressions only see the channels through the
//! descending eigenvalues of six Gram matrices per subcarrier: the five
//! steering Grams AᴴA plus the RIS cross matrix X_r = A_rtᴴ Θ A_rg, whose
//! Gram carries the entire dependence on the reflection coefficients.
//! This module computes those profiles, the effective stream counts, the
//! transmit-covariance builder that aligns the BS towards the two links'
//! departure subspaces, and the asymptotic-orthogonality diagnostic
//! ‖A_bgᴴ A_bh‖_F that must vanish as the BS array grows.

use crate::channel::{SteeringMatrices, SystemConfig};
use crate::linalg;
use crate::rcg::PhaseVector;
use crate::{C64, CMat, Error};

/// Descending eigenvalues of the six Gram matrices at one subcarrier,
/// plus the eigenvectors of X_rᴴX_r needed by the phase optimizer.
#[derive(Debug, Clone)]
pub struct SubcarrierEigens {
    /// Eigenvalues of A_utᴴA_ut (length l_t).
    pub d_ut: Vec<f64>,
    /// Eigenvalues of A_bgᴴA_bg (length l_g).
    pub d_bg: Vec<f64>,
    /// Eigenvalues of X_rᴴX_r (length l_g).
    pub d_r: Vec<f64>,
    /// Eigenvalues of A_uhᴴA_uh (length l_h).
    pub d_uh: Vec<f64>,
    /// Eigenvalues of A_bhᴴA_bh (length l_h).
    pub d_bh: Vec<f64>,
    /// Eigenvectors of X_rᴴX_r, columns matching `d_r`'s order.
    pub u_r: CMat,
}

/// Per-subcarrier eigen profiles of the statistical CSI.
#[derive(Debug, Clone)]
pub struct EigenProfile {
    pub per_subcarrier: Vec<SubcarrierEigens>,
}

/// Effective stream counts: `n_s1` over the BS-RIS-user reflecting link,
/// `n_s2` over the direct link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamRanks {
    pub n_s1: usize,
    pub n_s2: usize,
}

impl StreamRanks {
    pub fn total(&self) -> usize {
        self.n_s1 + self.n_s2
    }
}

/// Cross matrix X_r = A_rtᴴ · diag(θ) · A_rg (l_t × l_g).
pub fn cross_matrix(a_rt: &CMat, theta: &PhaseVector, a_rg: &CMat) -> Result<CMat, Error> {
    let n_r = theta.len();
    if a_rt.nrows() != n_r || a_rg.nrows() != n_r {
        return Err(Error::Dimension(format!(
            "cross matrix needs {n_r}-row steering matrices, got {} and {}",
            a_rt.nrows(),
            a_rg.nrows()
        )));
    }
    // diag(θ)·A_rg as a row scaling; avoids materializing the diagonal.
    let scaled = CMat::from_fn(n_r, a_rg.ncols(), |r, c| theta[r] * a_rg[(r, c)]);
    Ok(a_rt.adjoint() * scaled)
}

/// Eigenvalues and eigenvectors of X_rᴴX_r for one subcarrier, descending,
/// with floating-point negatives clipped to zero.
pub(crate) fn reflect_gram_eigs(
    a_rt: &CMat,
    theta: &PhaseVector,
    a_rg: &CMat,
) -> Result<(Vec<f64>, CMat), Error> {
    let x = cross_matrix(a_rt, theta, a_rg)?;
    let gram = x.adjoint() * &x;
    let (mut values, vectors) = linalg::hermitian_eigen_desc(&gram);
    linalg::clip_nonneg(&mut values);
    Ok((values, vectors))
}

fn steering_gram_eigs(a: &CMat) -> Vec<f64> {
    let gram = a.adjoint() * a;
    let mut values = linalg::hermitian_eigenvalues_desc(&gram);
    linalg::clip_nonneg(&mut values);
    values
}

/// Eigen profiles of all six Gram matrices at every subcarrier for the
/// given reflection coefficients.
pub fn eigen_profile(
    steering: &[SteeringMatrices],
    theta: &PhaseVector,
    _config: &SystemConfig,
) -> Result<EigenProfile, Error> {
    let per_subcarrier = steering
        .iter()
        .map(|s| {
            let (d_r, u_r) = reflect_gram_eigs(&s.a_rt, theta, &s.a_rg)?;
            Ok(SubcarrierEigens {
                d_ut: steering_gram_eigs(&s.a_ut),
                d_bg: steering_gram_eigs(&s.a_bg),
                d_r,
                d_uh: steering_gram_eigs(&s.a_uh),
                d_bh: steering_gram_eigs(&s.a_bh),
                u_r,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(EigenProfile { per_subcarrier })
}

/// Stream counts from numerical ranks: n_s1 is the minimum rank among
/// A_bg, A_ut and X_r; n_s2 the minimum among A_bh and A_uh.
///
/// Ranks are computed at every subcarrier and must agree; a disagreement
/// (possible only for degenerate angle draws) is surfaced as an error
/// rather than silently picking one subcarrier's answer.
pub fn stream_ranks(
    steering: &[SteeringMatrices],
    theta: &PhaseVector,
    _config: &SystemConfig,
) -> Result<StreamRanks, Error> {
    let mut ranks: Option<StreamRanks> = None;
    for (k, s) in steering.iter().enumerate() {
        let x = cross_matrix(&s.a_rt, theta, &s.a_rg)?;
        let n_s1 = linalg::rank(&s.a_bg)
            .min(linalg::rank(&s.a_ut))
            .min(linalg::rank(&x));
        let n_s2 = linalg::rank(&s.a_bh).min(linalg::rank(&s.a_uh));
        let current = StreamRanks { n_s1, n_s2 };
        match ranks {
            None => ranks = Some(current),
            Some(first) if first != current => {
                return Err(Error::RankInconsistent(format!(
                    "subcarrier {k} gives (n_s1, n_s2) = ({}, {}), subcarrier 0 gave ({}, {})",
                    current.n_s1, current.n_s2, first.n_s1, first.n_s2
                )));
            }
            Some(_) => {}
        }
    }
    Ok(ranks.expect("at least one subcarrier"))
}

/// Transmit covariance for one subcarrier: Q = U_q diag(q) U_qᴴ where U_q
/// stacks the first n_s1 left-singular vectors of A_bg and the first n_s2
/// of A_bh. The two blocks are not mutually orthogonal in general; Q is
/// still Hermitian PSD and trace(Q) equals Σᵢ qᵢ because every column has
/// unit norm.
pub fn build_covariance(
    a_bg: &CMat,
    a_bh: &CMat,
    ranks: &StreamRanks,
    q: &[f64],
) -> Result<CMat, Error> {
    if q.len() != ranks.total() {
        return Err(Error::PowerLength { got: q.len(), expected: ranks.total() });
    }
    debug_assert!(q.iter().all(|&v| v >= 0.0), "negative stream power");
    let n_b = a_bg.nrows();
    let u4 = linalg::left_singular_vectors(a_bg, ranks.n_s1);
    let u5 = linalg::left_singular_vectors(a_bh, ranks.n_s2);
    let mut u_q = CMat::zeros(n_b, ranks.total());
    u_q.columns_mut(0, ranks.n_s1).copy_from(&u4);
    u_q.columns_mut(ranks.n_s1, ranks.n_s2).copy_from(&u5);
    let lambda = CMat::from_diagonal(&crate::CVec::from_fn(q.len(), |i, _| C64::new(q[i], 0.0)));
    Ok(&u_q * lambda * u_q.adjoint())
}

/// Per-subcarrier transmit covariances for a full power matrix (K × n_s).
pub fn transmit_covariance(
    steering: &[SteeringMatrices],
    ranks: &StreamRanks,
    q: &nalgebra::DMatrix<f64>,
) -> Result<Vec<CMat>, Error> {
    if q.nrows() != steering.len() {
        return Err(Error::Dimension(format!(
            "power matrix has {} rows, expected one per subcarrier ({})",
            q.nrows(),
            steering.len()
        )));
    }
    steering
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let row: Vec<f64> = q.row(k).iter().copied().collect();
            build_covariance(&s.a_bg, &s.a_bh, ranks, &row)
        })
        .collect()
}

/// Asymptotic-orthogonality diagnostic ‖A_bgᴴ A_bh‖_F.
///
/// For random distinct departure angles this decays as the BS array grows;
/// it is the quantity whose vanishing justifies dropping the cross term
/// between the reflecting and direct links.
pub fn orthogonality_defect(a_bg: &CMat, a_bh: &CMat) -> f64 {
    (a_bg.adjoint() * a_bh).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_statistics, steering_matrices, ula_steering};
    use crate::seeds;
    use crate::CVec;
    use std::f64::consts::PI;

    fn small_config() -> SystemConfig {
        SystemConfig {
            n_b: 8,
            n_u: 3,
            n_r_y: 2,
            n_r_z: 3,
            k_sub: 3,
            l_g: 2,
            l_t: 2,
            l_h: 2,
            ..SystemConfig::desk_scale()
        }
    }

    fn setup(seed: u64, config: &SystemConfig) -> (Vec<SteeringMatrices>, PhaseVector) {
        let stats = sample_statistics(&mut seeds::stream(seed, &[seeds::DOMAIN_ANGLES]), config);
        let steering = steering_matrices(&stats, config);
        let theta =
            PhaseVector::random(&mut seeds::stream(seed, &[seeds::DOMAIN_PHASES]), config.n_r());
        (steering, theta)
    }

    /// Phase-aligning θ for rank-one links: θ = unt(a_rt ⊙ a_rg*).
    fn aligned_theta(a_rt: &CMat, a_rg: &CMat) -> PhaseVector {
        let v = CVec::from_fn(a_rt.nrows(), |i, _| a_rt[(i, 0)] * a_rg[(i, 0)].conj());
        PhaseVector::unit_modulus(&v)
    }

    #[test]
    fn cross_matrix_matches_triple_product() {
        let config = small_config();
        let (steering, theta) = setup(21, &config);
        let s = &steering[1];
        let x = cross_matrix(&s.a_rt, &theta, &s.a_rg).unwrap();
        let diag = CMat::from_diagonal(theta.as_vector());
        let oracle = s.a_rt.adjoint() * diag * &s.a_rg;
        assert!((&x - &oracle).norm() < 1e-12);
        assert_eq!(x.nrows(), config.l_t);
        assert_eq!(x.ncols(), config.l_g);
    }

    #[test]
    fn aligned_single_paths_reach_unit_cross_gain() {
        let config = SystemConfig { l_g: 1, l_t: 1, ..small_config() };
        let (steering, _) = setup(22, &config);
        let s = &steering[0];
        let theta = aligned_theta(&s.a_rt, &s.a_rg);
        let x = cross_matrix(&s.a_rt, &theta, &s.a_rg).unwrap();
        assert!((x[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_phases_identical_arrays_give_unity() {
        let config = SystemConfig { l_g: 1, l_t: 1, ..small_config() };
        let mut stats = sample_statistics(&mut seeds::stream(23, &[1]), &config);
        stats.ris_user.aod_ris_azimuth = stats.bs_ris.aoa_ris_azimuth.clone();
        stats.ris_user.aod_ris_elevation = stats.bs_ris.aoa_ris_elevation.clone();
        let steering = steering_matrices(&stats, &config);
        let theta = PhaseVector::from_phases(&vec![0.0; config.n_r()]);
        let s = &steering[0];
        let x = cross_matrix(&s.a_rt, &theta, &s.a_rg).unwrap();
        assert!((x[(0, 0)] - crate::C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn cross_matrix_rejects_wrong_dims() {
        let config = small_config();
        let (steering, _) = setup(24, &config);
        let theta = PhaseVector::from_phases(&[0.0; 3]); // wrong length
        assert!(cross_matrix(&steering[0].a_rt, &theta, &steering[0].a_rg).is_err());
    }

    #[test]
    fn single_path_profile_is_all_ones() {
        let config = SystemConfig { l_g: 1, l_t: 1, l_h: 1, ..small_config() };
        let (steering, theta) = setup(25, &config);
        let profile = eigen_profile(&steering, &theta, &config).unwrap();
        for sub in &profile.per_subcarrier {
            assert!((sub.d_ut[0] - 1.0).abs() < 1e-12);
            assert!((sub.d_bg[0] - 1.0).abs() < 1e-12);
            assert!((sub.d_uh[0] - 1.0).abs() < 1e-12);
            assert!((sub.d_bh[0] - 1.0).abs() < 1e-12);
        }
        let ranks = stream_ranks(&steering, &theta, &config).unwrap();
        assert_eq!(ranks, StreamRanks { n_s1: 1, n_s2: 1 });
    }

    #[test]
    fn aligned_theta_reaches_unit_reflect_eigenvalue() {
        let config = SystemConfig { l_g: 1, l_t: 1, ..small_config() };
        let (steering, _) = setup(26, &config);
        let theta = aligned_theta(&steering[0].a_rt, &steering[0].a_rg);
        let profile = eigen_profile(&steering, &theta, &config).unwrap();
        assert!((profile.per_subcarrier[0].d_r[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_eigenvalues_match_svd_oracle() {
        let config = small_config();
        let (steering, theta) = setup(27, &config);
        let profile = eigen_profile(&steering, &theta, &config).unwrap();
        for (s, sub) in steering.iter().zip(&profile.per_subcarrier) {
            let x = cross_matrix(&s.a_rt, &theta, &s.a_rg).unwrap();
            let sv = nalgebra::SVD::new(x, false, false).singular_values;
            for (i, &d) in sub.d_r.iter().enumerate() {
                let expected = if i < sv.len() { sv[i] * sv[i] } else { 0.0 };
                assert!((d - expected).abs() < 1e-10, "d_r[{i}] {d} vs {expected}");
            }
        }
    }

    #[test]
    fn bg_eigenvalues_sum_to_path_count() {
        // trace(A_bgᴴA_bg) = l_g for unit-norm columns.
        let config = small_config();
        let (steering, theta) = setup(28, &config);
        let profile = eigen_profile(&steering, &theta, &config).unwrap();
        for sub in &profile.per_subcarrier {
            let total: f64 = sub.d_bg.iter().sum();
            assert!((total - config.l_g as f64).abs() < 1e-10);
            assert!(sub.d_bg.windows(2).all(|w| w[0] >= w[1]));
            assert!(sub.d_r.iter().all(|&d| d >= 0.0));
            let bound = (config.l_g * config.l_t) as f64;
            assert!(sub.d_r[0] <= bound + 1e-9);
        }
    }

    #[test]
    fn profile_invariant_to_global_phase() {
        let config = small_config();
        let (steering, theta) = setup(29, &config);
        let rotated = theta.rotated(1.234);
        let a = eigen_profile(&steering, &theta, &config).unwrap();
        let b = eigen_profile(&steering, &rotated, &config).unwrap();
        for (sa, sb) in a.per_subcarrier.iter().zip(&b.per_subcarrier) {
            for (x, y) in sa.d_r.iter().zip(&sb.d_r) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn covariance_zero_power_is_zero() {
        let config = small_config();
        let (steering, theta) = setup(30, &config);
        let ranks = stream_ranks(&steering, &theta, &config).unwrap();
        let q = vec![0.0; ranks.total()];
        let q_cov = build_covariance(&steering[0].a_bg, &steering[0].a_bh, &ranks, &q).unwrap();
        assert_eq!(q_cov.norm(), 0.0);
    }

    #[test]
    fn covariance_trace_is_power_sum() {
        let config = SystemConfig { l_g: 1, l_t: 1, l_h: 1, ..small_config() };
        let (steering, theta) = setup(31, &config);
        let ranks = stream_ranks(&steering, &theta, &config).unwrap();
        let k = config.k_sub as f64;
        let q = vec![0.5 / k, 0.5 / k];
        let q_cov = build_covariance(&steering[0].a_bg, &steering[0].a_bh, &ranks, &q).unwrap();
        let trace: f64 = q_cov.diagonal().iter().map(|c| c.re).sum();
        assert!((trace - 1.0 / k).abs() < 1e-12);
    }

    #[test]
    fn covariance_is_hermitian_psd() {
        let config = small_config();
        let (steering, theta) = setup(32, &config);
        let ranks = stream_ranks(&steering, &theta, &config).unwrap();
        let q: Vec<f64> = (0..ranks.total()).map(|i| 0.01 * (i + 1) as f64).collect();
        let q_cov = build_covariance(&steering[1].a_bg, &steering[1].a_bh, &ranks, &q).unwrap();
        assert!((&q_cov - q_cov.adjoint()).norm() < 1e-12);
        let eigs = crate::linalg::hermitian_eigenvalues_desc(&q_cov);
        assert!(eigs.iter().all(|&v| v >= -1e-10));
        let trace: f64 = q_cov.diagonal().iter().map(|c| c.re).sum();
        let expected: f64 = q.iter().sum();
        assert!((trace - expected).abs() < 1e-10);
    }

    #[test]
    fn covariance_rejects_wrong_power_length() {
        let config = small_config();
        let (steering, theta) = setup(33, &config);
        let ranks = stream_ranks(&steering, &theta, &config).unwrap();
        let q = vec![0.1; ranks.total() + 1];
        assert!(matches!(
            build_covariance(&steering[0].a_bg, &steering[0].a_bh, &ranks, &q),
            Err(Error::PowerLength { .. })
        ));
    }

    #[test]
    fn defect_is_one_for_identical_single_angles() {
        let a = ula_steering(0.4, 28e9, 28e9, 8);
        let m = CMat::from_fn(8, 1, |r, _| a[r]);
        assert!((orthogonality_defect(&m, &m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn defect_with_single_antenna_is_sqrt_of_products() {
        // With one BS antenna every steering "vector" is the scalar 1.
        let l_g = 3;
        let l_h = 2;
        let a_bg = CMat::from_fn(1, l_g, |_, _| crate::C64::new(1.0, 0.0));
        let a_bh = CMat::from_fn(1, l_h, |_, _| crate::C64::new(1.0, 0.0));
        let expected = ((l_g * l_h) as f64).sqrt();
        assert!((orthogonality_defect(&a_bg, &a_bh) - expected).abs() < 1e-12);
    }

    #[test]
    fn defect_shrinks_with_array_size() {
        let mut rng = seeds::stream(99, &[seeds::DOMAIN_ANGLES]);
        let mut means = Vec::new();
        for &n_b in &[8usize, 32, 128] {
            let mut total = 0.0;
            let draws = 50;
            for _ in 0..draws {
                let ang = |rng: &mut rand_chacha::ChaCha12Rng| rng.gen_range(-PI..PI);
                let a_bg = CMat::from_columns(&[
                    ula_steering(ang(&mut rng), 28e9, 28e9, n_b),
                    ula_steering(ang(&mut rng), 28e9, 28e9, n_b),
                ]);
                let a_bh = CMat::from_columns(&[
                    ula_steering(ang(&mut rng), 28e9, 28e9, n_b),
                    ula_steering(ang(&mut rng), 28e9, 28e9, n_b),
                ]);
                total += orthogonality_defect(&a_bg, &a_bh);
            }
            means.push(total / draws as f64);
        }
        assert!(means[0] > means[1] && means[1] > means[2], "means {means:?}");
    }

    use rand::Rng;
}
