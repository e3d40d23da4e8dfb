//! Rate functionals.
//!
//! Four views of the same quantity, from exact to most closed-form:
//!
//! 1. [`instantaneous_rate`]: the per-realization log-det rate of the
//!    effective channel H_eff,k = T_k Θ G_k + H_k.
//! 2. [`mc_ergodic_rate`]: its Monte-Carlo average over path-gain draws
//!    with angles held fixed (the statistical-CSI protocol).
//! 3. [`approx_rate_sampled`]: the majorization approximation — eigenvalue
//!    products of the statistical CSI paired with sampled squared gains.
//! 4. [`jensen_rate`] / [`jensen_rate_uniform`]: the Jensen upper bounds
//!    obtained by moving the expectation inside the logarithm, for the
//!    aligned covariance and the isotropic covariance respectively.
//!
//! All rates carry the OFDM prefactor 1/(K + N_cp) and are in bps/Hz.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp};

use crate::channel::{
    assemble_from_steering, sample_gains, ChannelStatistics, ChannelTriple, LinkVariances,
    SteeringMatrices, SystemConfig,
};
use crate::linalg;
use crate::rcg::PhaseVector;
use crate::seeds;
use crate::spectra::{EigenProfile, StreamRanks};
use crate::{CMat, Error};

/// A Monte-Carlo rate estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    /// Mean rate in bps/Hz.
    pub value: f64,
    pub n_draws: usize,
    /// Standard error of the mean, zero for a single draw.
    pub std_err: f64,
}

fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Per-realization rate: (1/(K+N_cp)) Σ_k log2 det(I + snr·H_eff,k Q_k H_eff,kᴴ).
///
/// The quadratic form is symmetrized before its eigendecomposition; a
/// negative eigenvalue beyond tolerance means the supplied covariance was
/// not PSD and is reported as an error.
pub fn instantaneous_rate(
    channels: &[ChannelTriple],
    q_cov: &[CMat],
    theta: &PhaseVector,
    snr: f64,
    config: &SystemConfig,
) -> Result<f64, Error> {
    if channels.len() != q_cov.len() {
        return Err(Error::Dimension(format!(
            "{} channel triples but {} covariance matrices",
            channels.len(),
            q_cov.len()
        )));
    }
    let prefactor = 1.0 / (config.k_sub + config.n_cp) as f64;
    let mut total = 0.0;
    for (ch, q) in channels.iter().zip(q_cov.iter()) {
        // Θ G as a row scaling of G.
        let n_r = theta.len();
        if ch.g.nrows() != n_r || ch.t.ncols() != n_r {
            return Err(Error::Dimension(format!(
                "RIS dimension mismatch: θ has {n_r} entries, G has {} rows, T has {} columns",
                ch.g.nrows(),
                ch.t.ncols()
            )));
        }
        let theta_g = CMat::from_fn(n_r, ch.g.ncols(), |r, c| theta[r] * ch.g[(r, c)]);
        let h_eff = &ch.t * theta_g + &ch.h;
        let m = &h_eff * q * h_eff.adjoint();
        total += linalg::logdet_rate_term(&m, snr)?;
    }
    Ok(prefactor * total)
}

/// Monte-Carlo ergodic rate over independent gain draws, angles fixed.
///
/// Each draw uses a substream keyed by its index, so the estimate does not
/// depend on evaluation order; the parent stream is advanced exactly once.
#[allow(clippy::too_many_arguments)]
pub fn mc_ergodic_rate<R: RngCore>(
    rng: &mut R,
    stats: &ChannelStatistics,
    steering: &[SteeringMatrices],
    q_cov: &[CMat],
    theta: &PhaseVector,
    snr: f64,
    n_draws: usize,
    config: &SystemConfig,
) -> Result<RateSample, Error> {
    assert!(n_draws >= 1, "at least one draw");
    let base = rng.next_u64();
    let mut rates = Vec::with_capacity(n_draws);
    for draw in 0..n_draws {
        let mut sub = seeds::stream(base, &[seeds::DOMAIN_MC_DRAW, draw as u64]);
        let gains = sample_gains(&mut sub, stats);
        let channels = assemble_from_steering(steering, stats, &gains, config);
        rates.push(instantaneous_rate(&channels, q_cov, theta, snr, config)?);
    }
    let (value, std_err) = mean_and_std_err(&rates);
    Ok(RateSample { value, n_draws, std_err })
}

fn sample_sq_gains<R: Rng>(rng: &mut R, variances: &[f64], count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let v = variances[i];
            if v > 0.0 {
                Exp::new(1.0 / v).expect("positive rate").sample(rng)
            } else {
                0.0
            }
        })
        .collect()
}

/// One realization of the majorization approximation for given squared
/// gains; shared by the sampled estimator and its tests.
fn approx_rate_draw(
    profile: &EigenProfile,
    ranks: &StreamRanks,
    q: &nalgebra::DMatrix<f64>,
    g_sq: &[f64],
    t_sq: &[f64],
    h_sq: &[f64],
    snr: f64,
    config: &SystemConfig,
) -> f64 {
    let n_r = config.n_r() as f64;
    let reflect_base =
        snr * config.n_b as f64 * config.n_u as f64 * n_r * n_r / (config.l_g as f64 * config.l_t as f64);
    let direct_base = snr * config.n_b as f64 * config.n_u as f64 / config.l_h as f64;
    let prefactor = 1.0 / (config.k_sub + config.n_cp) as f64;
    let mut total = 0.0;
    for (k, sub) in profile.per_subcarrier.iter().enumerate() {
        for i in 0..ranks.n_s1 {
            let gain = reflect_base * q[(k, i)] * sub.d_ut[i] * sub.d_bg[i] * sub.d_r[i];
            total += (1.0 + gain * g_sq[i] * t_sq[i]).log2();
        }
        for j in 0..ranks.n_s2 {
            let gain = direct_base * q[(k, ranks.n_s1 + j)] * sub.d_uh[j] * sub.d_bh[j];
            total += (1.0 + gain * h_sq[j]).log2();
        }
    }
    prefactor * total
}

/// Sampled majorization approximation of the ergodic rate: Monte-Carlo
/// mean over draws of |α_g|², |α_t|², |α_h|² (exponential with the per-path
/// variances as means) of the ordered-eigenvalue rate expression.
#[allow(clippy::too_many_arguments)]
pub fn approx_rate_sampled<R: RngCore>(
    rng: &mut R,
    profile: &EigenProfile,
    ranks: &StreamRanks,
    q: &nalgebra::DMatrix<f64>,
    variances: &LinkVariances,
    snr: f64,
    config: &SystemConfig,
    n_draws: usize,
) -> RateSample {
    assert!(n_draws >= 1, "at least one draw");
    let base = rng.next_u64();
    let mut rates = Vec::with_capacity(n_draws);
    for draw in 0..n_draws {
        let mut sub = seeds::stream(base, &[seeds::DOMAIN_MC_DRAW, draw as u64]);
        let g_sq = sample_sq_gains(&mut sub, &variances.g, ranks.n_s1);
        let t_sq = sample_sq_gains(&mut sub, &variances.t, ranks.n_s1);
        let h_sq = sample_sq_gains(&mut sub, &variances.h, ranks.n_s2);
        rates.push(approx_rate_draw(profile, ranks, q, &g_sq, &t_sq, &h_sq, snr, config));
    }
    let (value, std_err) = mean_and_std_err(&rates);
    RateSample { value, n_draws, std_err }
}

/// Closed-form Jensen upper bound on the approximation: squared gains are
/// replaced by their means, σ_g,i²σ_t,i² on reflecting streams (the product
/// of independent exponentials) and σ_h,i² on direct streams.
pub fn jensen_rate(
    profile: &EigenProfile,
    ranks: &StreamRanks,
    q: &nalgebra::DMatrix<f64>,
    variances: &LinkVariances,
    snr: f64,
    config: &SystemConfig,
) -> f64 {
    approx_rate_draw(
        profile,
        ranks,
        q,
        &variances.g[..ranks.n_s1],
        &variances.t[..ranks.n_s1],
        &variances.h[..ranks.n_s2],
        snr,
        config,
    )
}

/// Jensen bound under the isotropic covariance Q_k = (1/(K N_b)) I: the BS
/// antenna count cancels, leaving per-stream factors
/// N_u N_r² σ_g²σ_t²/(K L_g L_t) and N_u σ_h²/(K L_h).
pub fn jensen_rate_uniform(
    profile: &EigenProfile,
    ranks: &StreamRanks,
    variances: &LinkVariances,
    snr: f64,
    config: &SystemConfig,
) -> f64 {
    let k_sub = profile.per_subcarrier.len();
    let n_r = config.n_r() as f64;
    let reflect_base = snr * config.n_u as f64 * n_r * n_r
        / (k_sub as f64 * config.l_g as f64 * config.l_t as f64);
    let direct_base = snr * config.n_u as f64 / (k_sub as f64 * config.l_h as f64);
    let prefactor = 1.0 / (config.k_sub + config.n_cp) as f64;
    let mut total = 0.0;
    for sub in profile.per_subcarrier.iter() {
        for j in 0..ranks.n_s2 {
            total +=
                (1.0 + direct_base * variances.h[j] * sub.d_uh[j] * sub.d_bh[j]).log2();
        }
        for i in 0..ranks.n_s1 {
            total += (1.0
                + reflect_base
                    * variances.g[i]
                    * variances.t[i]
                    * sub.d_ut[i]
                    * sub.d_bg[i]
                    * sub.d_r[i])
                .log2();
        }
    }
    prefactor * total
}

/// Normalized approximation error |approx − reference| / reference.
pub fn normalized_error(approx: f64, reference: f64) -> Result<f64, Error> {
    if reference <= 0.0 {
        return Err(Error::NonPositiveReference(reference));
    }
    Ok((approx - reference).abs() / reference)
}
