//! Wideband Saleh-Valenzuela channel synthesis.
//!
//! Three sparse multipath links are modeled per subcarrier: BS→user (`h`),
//! BS→RIS (`g`), and RIS→user (`t`). Each is a sum of a few rank-1 steering
//! outer products weighted by complex path gains and delay phase ramps.
//! The BS and user carry half-wavelength ULAs, the RIS a half-wavelength
//! UPA. Steering vectors are evaluated at each subcarrier frequency, so the
//! spatial-wideband effect is captured: the same angle steers differently
//! across the band.
//!
//! Statistical CSI — angles, per-path variances, delays — is sampled once
//! per realization; complex gains are redrawn per Monte-Carlo draw.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::{C64, CMat, CVec, Error};

/// System dimensions and statistical parameters that drive everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antenna count (ULA).
    pub n_b: usize,
    /// User antenna count (ULA).
    pub n_u: usize,
    /// RIS element count along y.
    pub n_r_y: usize,
    /// RIS element count along z.
    pub n_r_z: usize,
    /// OFDM subcarrier count K.
    pub k_sub: usize,
    /// Cyclic-prefix length in taps; bounds the maximum path delay.
    pub n_cp: usize,
    /// Carrier frequency in Hz.
    pub f_c: f64,
    /// Bandwidth in Hz.
    pub f_s: f64,
    /// Path count of the BS-RIS link.
    pub l_g: usize,
    /// Path count of the RIS-user link.
    pub l_t: usize,
    /// Path count of the direct BS-user link.
    pub l_h: usize,
    /// Linear power-to-noise ratio P_T/σ².
    pub snr: f64,
    /// Exponential rate parameter for direct-link path variances.
    pub gain_rate_h: f64,
    /// Exponential rate parameter for BS-RIS path variances.
    pub gain_rate_g: f64,
    /// Exponential rate parameter for RIS-user path variances.
    pub gain_rate_t: f64,
}

impl SystemConfig {
    /// Total RIS element count N_r.
    pub fn n_r(&self) -> usize {
        self.n_r_y * self.n_r_z
    }

    /// Maximum path delay in seconds: the CP guard interval N_cp / f_s.
    pub fn max_delay(&self) -> f64 {
        self.n_cp as f64 / self.f_s
    }

    pub fn validate(&self) -> Result<(), Error> {
        let positive_dims = [
            ("n_b", self.n_b),
            ("n_u", self.n_u),
            ("n_r_y", self.n_r_y),
            ("n_r_z", self.n_r_z),
            ("k_sub", self.k_sub),
            ("l_g", self.l_g),
            ("l_t", self.l_t),
            ("l_h", self.l_h),
        ];
        for (name, value) in positive_dims {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.f_c > 0.0) {
            return Err(Error::Config(format!("f_c must be positive, got {}", self.f_c)));
        }
        if !(self.f_s > 0.0) {
            return Err(Error::Config(format!("f_s must be positive, got {}", self.f_s)));
        }
        if self.f_s >= self.f_c {
            return Err(Error::Config(format!(
                "bandwidth f_s = {} must be below the carrier f_c = {}",
                self.f_s, self.f_c
            )));
        }
        if !(self.snr >= 0.0) {
            return Err(Error::Config(format!("snr must be non-negative, got {}", self.snr)));
        }
        for (name, rate) in [
            ("gain_rate_h", self.gain_rate_h),
            ("gain_rate_g", self.gain_rate_g),
            ("gain_rate_t", self.gain_rate_t),
        ] {
            if !(rate > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {rate}")));
            }
        }
        Ok(())
    }

    /// Desk-scale profile: small enough for interactive runs and the test
    /// suite while keeping every structural feature of the full setup.
    pub fn desk_scale() -> Self {
        Self {
            n_b: 32,
            n_u: 4,
            n_r_y: 6,
            n_r_z: 6,
            k_sub: 24,
            n_cp: 10,
            f_c: 28e9,
            f_s: 1e9,
            l_g: 6,
            l_t: 6,
            l_h: 6,
            snr: 1.0,
            gain_rate_h: 1.0,
            gain_rate_g: 0.1,
            gain_rate_t: 0.1,
        }
    }

    /// Full-scale profile (100 BS antennas, 13×13 RIS, 16 user antennas);
    /// intended for long-running sweeps, not for the test suite.
    pub fn paper_scale() -> Self {
        Self {
            n_b: 100,
            n_u: 16,
            n_r_y: 13,
            n_r_z: 13,
            ..Self::desk_scale()
        }
    }
}

/// Statistical CSI of the direct BS-user link.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectLinkStats {
    /// Departure angles at the BS, one per path (radians).
    pub aod_bs: Vec<f64>,
    /// Arrival angles at the user (radians).
    pub aoa_user: Vec<f64>,
    /// Per-path gain variances, descending.
    pub variances: Vec<f64>,
    /// Per-path delays in seconds.
    pub delays: Vec<f64>,
}

/// Statistical CSI of the BS-RIS link.
#[derive(Debug, Clone, PartialEq)]
pub struct BsRisLinkStats {
    /// Departure angles at the BS (radians).
    pub aod_bs: Vec<f64>,
    /// Arrival azimuths at the RIS (radians).
    pub aoa_ris_azimuth: Vec<f64>,
    /// Arrival elevations at the RIS (radians).
    pub aoa_ris_elevation: Vec<f64>,
    pub variances: Vec<f64>,
    pub delays: Vec<f64>,
}

/// Statistical CSI of the RIS-user link.
#[derive(Debug, Clone, PartialEq)]
pub struct RisUserLinkStats {
    /// Departure azimuths at the RIS (radians).
    pub aod_ris_azimuth: Vec<f64>,
    /// Departure elevations at the RIS (radians).
    pub aod_ris_elevation: Vec<f64>,
    /// Arrival angles at the user (radians).
    pub aoa_user: Vec<f64>,
    pub variances: Vec<f64>,
    pub delays: Vec<f64>,
}

/// Full statistical CSI: angles, variances and delays for all three links.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStatistics {
    pub direct: DirectLinkStats,
    pub bs_ris: BsRisLinkStats,
    pub ris_user: RisUserLinkStats,
}

fn check_sorted_desc(name: &str, values: &[f64]) -> Result<(), Error> {
    if values.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Config(format!("{name} variances must be sorted descending")));
    }
    Ok(())
}

impl ChannelStatistics {
    /// Checks list lengths against the configured path counts, variance
    /// ordering, and delay bounds.
    pub fn validate(&self, config: &SystemConfig) -> Result<(), Error> {
        let lens = [
            ("h aod_bs", self.direct.aod_bs.len(), config.l_h),
            ("h aoa_user", self.direct.aoa_user.len(), config.l_h),
            ("h variances", self.direct.variances.len(), config.l_h),
            ("h delays", self.direct.delays.len(), config.l_h),
            ("g aod_bs", self.bs_ris.aod_bs.len(), config.l_g),
            ("g aoa_ris_azimuth", self.bs_ris.aoa_ris_azimuth.len(), config.l_g),
            ("g aoa_ris_elevation", self.bs_ris.aoa_ris_elevation.len(), config.l_g),
            ("g variances", self.bs_ris.variances.len(), config.l_g),
            ("g delays", self.bs_ris.delays.len(), config.l_g),
            ("t aod_ris_azimuth", self.ris_user.aod_ris_azimuth.len(), config.l_t),
            ("t aod_ris_elevation", self.ris_user.aod_ris_elevation.len(), config.l_t),
            ("t aoa_user", self.ris_user.aoa_user.len(), config.l_t),
            ("t variances", self.ris_user.variances.len(), config.l_t),
            ("t delays", self.ris_user.delays.len(), config.l_t),
        ];
        for (name, got, expected) in lens {
            if got != expected {
                return Err(Error::Dimension(format!(
                    "{name} has {got} entries, path count is {expected}"
                )));
            }
        }
        check_sorted_desc("h", &self.direct.variances)?;
        check_sorted_desc("g", &self.bs_ris.variances)?;
        check_sorted_desc("t", &self.ris_user.variances)?;
        let max_delay = config.max_delay();
        for (name, delays) in [
            ("h", &self.direct.delays),
            ("g", &self.bs_ris.delays),
            ("t", &self.ris_user.delays),
        ] {
            for &tau in delays.iter() {
                let in_range = tau >= 0.0 && (tau < max_delay || (max_delay == 0.0 && tau == 0.0));
                if !in_range {
                    return Err(Error::Config(format!(
                        "{name} delay {tau} outside [0, {max_delay})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-path variance lists of the three links, descending, as used by the
/// closed-form rate expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkVariances {
    pub g: Vec<f64>,
    pub t: Vec<f64>,
    pub h: Vec<f64>,
}

impl LinkVariances {
    pub fn from_stats(stats: &ChannelStatistics) -> Self {
        Self {
            g: stats.bs_ris.variances.clone(),
            t: stats.ris_user.variances.clone(),
            h: stats.direct.variances.clone(),
        }
    }
}

/// Complex path gains of one realization, one entry per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGains {
    pub alpha_h: Vec<C64>,
    pub alpha_g: Vec<C64>,
    pub alpha_t: Vec<C64>,
}

/// Column-stacked normalized array-response matrices at one subcarrier.
///
/// Naming follows the endpoint convention: `a_uh` collects user-side
/// responses of the direct link, `a_bh` the BS-side ones, `a_rg`/`a_bg`
/// the RIS/BS sides of the BS-RIS link, and `a_ut`/`a_rt` the user/RIS
/// sides of the RIS-user link.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrices {
    /// n_u × l_h
    pub a_uh: CMat,
    /// n_b × l_h
    pub a_bh: CMat,
    /// N_r × l_g
    pub a_rg: CMat,
    /// n_b × l_g
    pub a_bg: CMat,
    /// n_u × l_t
    pub a_ut: CMat,
    /// N_r × l_t
    pub a_rt: CMat,
}

/// Channel matrices of one subcarrier: direct `h` (n_u×n_b), BS-RIS `g`
/// (N_r×n_b), and RIS-user `t` (n_u×N_r).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTriple {
    pub h: CMat,
    pub g: CMat,
    pub t: CMat,
}

/// Subcarrier frequencies f_k = f_c + (f_s/K)(k − 1 − (K−1)/2), k = 1..K.
///
/// Strictly increasing and symmetric about the carrier.
pub fn subcarrier_frequencies(config: &SystemConfig) -> Vec<f64> {
    let k = config.k_sub as f64;
    (0..config.k_sub)
        .map(|i| config.f_c + config.f_s / k * (i as f64 - (k - 1.0) / 2.0))
        .collect()
}

/// Normalized ULA response at angle `psi` and frequency `f_k`, with
/// half-wavelength spacing d = c/(2 f_c). Element m carries phase
/// π (f_k/f_c) m sin ψ; the norm is exactly 1/√n per element.
pub fn ula_steering(psi: f64, f_k: f64, f_c: f64, n: usize) -> CVec {
    let scale = 1.0 / (n as f64).sqrt();
    let step = PI * f_k / f_c * psi.sin();
    CVec::from_fn(n, |m, _| C64::from_polar(scale, step * m as f64))
}

/// Normalized UPA response at `azimuth` φ and `elevation` ϕ, frequency
/// `f_k`, with half-wavelength cell spacing. Element (m_y, m_z) carries
/// phase π (f_k/f_c) (m_y sin φ sin ϕ + m_z cos ϕ).
///
/// Flattening order: the z index varies fastest, so element (m_y, m_z)
/// lives at position m_y·m_z_count + m_z. All UPA consumers in this crate
/// share this ordering.
pub fn upa_steering(
    azimuth: f64,
    elevation: f64,
    f_k: f64,
    f_c: f64,
    m_y: usize,
    m_z: usize,
) -> CVec {
    let m = m_y * m_z;
    let scale = 1.0 / (m as f64).sqrt();
    let w = PI * f_k / f_c;
    let step_y = w * azimuth.sin() * elevation.sin();
    let step_z = w * elevation.cos();
    CVec::from_fn(m, |idx, _| {
        let iy = (idx / m_z) as f64;
        let iz = (idx % m_z) as f64;
        C64::from_polar(scale, step_y * iy + step_z * iz)
    })
}

/// Samples one set of channel statistics.
///
/// ULA-endpoint angles are uniform on [−π, π), RIS azimuths on
/// [−π/2, π/2], RIS elevations on [0, π]. Variances are exponential with
/// the configured rates and sorted descending per link; delays are uniform
/// on [0, N_cp/f_s). Draw order is fixed (h, g, t; angles, variances,
/// delays) so a given stream always yields the same statistics.
pub fn sample_statistics<R: Rng>(rng: &mut R, config: &SystemConfig) -> ChannelStatistics {
    let mut ula_angles = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-PI..PI)).collect()
    };
    let h_aod = ula_angles(config.l_h);
    let h_aoa = ula_angles(config.l_h);
    let g_aod = ula_angles(config.l_g);
    let t_aoa = ula_angles(config.l_t);

    let mut ris_azimuth = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-PI / 2.0..=PI / 2.0)).collect()
    };
    let g_az = ris_azimuth(config.l_g);
    let t_az = ris_azimuth(config.l_t);
    let mut ris_elevation = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(0.0..=PI)).collect()
    };
    let g_el = ris_elevation(config.l_g);
    let t_el = ris_elevation(config.l_t);

    let mut variances = |n: usize, rate: f64| -> Vec<f64> {
        let exp = Exp::new(rate).expect("positive rate");
        let mut v: Vec<f64> = (0..n).map(|_| exp.sample(rng)).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    };
    let h_var = variances(config.l_h, config.gain_rate_h);
    let g_var = variances(config.l_g, config.gain_rate_g);
    let t_var = variances(config.l_t, config.gain_rate_t);

    let max_delay = config.max_delay();
    let mut delays = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| if max_delay > 0.0 { rng.gen_range(0.0..max_delay) } else { 0.0 })
            .collect()
    };
    let h_tau = delays(config.l_h);
    let g_tau = delays(config.l_g);
    let t_tau = delays(config.l_t);

    ChannelStatistics {
        direct: DirectLinkStats {
            aod_bs: h_aod,
            aoa_user: h_aoa,
            variances: h_var,
            delays: h_tau,
        },
        bs_ris: BsRisLinkStats {
            aod_bs: g_aod,
            aoa_ris_azimuth: g_az,
            aoa_ris_elevation: g_el,
            variances: g_var,
            delays: g_tau,
        },
        ris_user: RisUserLinkStats {
            aod_ris_azimuth: t_az,
            aod_ris_elevation: t_el,
            aoa_user: t_aoa,
            variances: t_var,
            delays: t_tau,
        },
    }
}

fn gaussian_gain<R: Rng>(rng: &mut R, variance: f64) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let sigma = (variance / 2.0).sqrt();
    C64::new(sigma * re, sigma * im)
}

/// Draws one realization of the complex path gains, each circularly
/// symmetric Gaussian with the per-path variance from `stats`.
pub fn sample_gains<R: Rng>(rng: &mut R, stats: &ChannelStatistics) -> PathGains {
    PathGains {
        alpha_h: stats.direct.variances.iter().map(|&v| gaussian_gain(rng, v)).collect(),
        alpha_g: stats.bs_ris.variances.iter().map(|&v| gaussian_gain(rng, v)).collect(),
        alpha_t: stats.ris_user.variances.iter().map(|&v| gaussian_gain(rng, v)).collect(),
    }
}

fn columns_from(vectors: Vec<CVec>) -> CMat {
    let rows = vectors[0].len();
    CMat::from_fn(rows, vectors.len(), |r, c| vectors[c][r])
}

/// Builds the six steering matrices at every subcarrier frequency.
///
/// Columns are unit-norm by construction. Assumes `stats` is consistent
/// with `config`; use [`ChannelStatistics::validate`] on untrusted input.
pub fn steering_matrices(stats: &ChannelStatistics, config: &SystemConfig) -> Vec<SteeringMatrices> {
    let freqs = subcarrier_frequencies(config);
    let f_c = config.f_c;
    freqs
        .iter()
        .map(|&f_k| SteeringMatrices {
            a_uh: columns_from(
                stats.direct.aoa_user.iter().map(|&a| ula_steering(a, f_k, f_c, config.n_u)).collect(),
            ),
            a_bh: columns_from(
                stats.direct.aod_bs.iter().map(|&a| ula_steering(a, f_k, f_c, config.n_b)).collect(),
            ),
            a_rg: columns_from(
                stats
                    .bs_ris
                    .aoa_ris_azimuth
                    .iter()
                    .zip(&stats.bs_ris.aoa_ris_elevation)
                    .map(|(&az, &el)| upa_steering(az, el, f_k, f_c, config.n_r_y, config.n_r_z))
                    .collect(),
            ),
            a_bg: columns_from(
                stats.bs_ris.aod_bs.iter().map(|&a| ula_steering(a, f_k, f_c, config.n_b)).collect(),
            ),
            a_ut: columns_from(
                stats.ris_user.aoa_user.iter().map(|&a| ula_steering(a, f_k, f_c, config.n_u)).collect(),
            ),
            a_rt: columns_from(
                stats
                    .ris_user
                    .aod_ris_azimuth
                    .iter()
                    .zip(&stats.ris_user.aod_ris_elevation)
                    .map(|(&az, &el)| upa_steering(az, el, f_k, f_c, config.n_r_y, config.n_r_z))
                    .collect(),
            ),
        })
        .collect()
}

fn gain_diagonal(gains: &[C64], delays: &[f64], f_k: f64, scale: f64) -> CMat {
    CMat::from_diagonal(&CVec::from_fn(gains.len(), |i, _| {
        gains[i] * C64::from_polar(scale, -2.0 * PI * delays[i] * f_k)
    }))
}

/// Assembles the factored channel matrices from precomputed steering
/// matrices; the hot path for Monte-Carlo draws where only gains change.
pub fn assemble_from_steering(
    steering: &[SteeringMatrices],
    stats: &ChannelStatistics,
    gains: &PathGains,
    config: &SystemConfig,
) -> Vec<ChannelTriple> {
    let freqs = subcarrier_frequencies(config);
    let scale_h = (config.n_b as f64 * config.n_u as f64 / config.l_h as f64).sqrt();
    let scale_g = (config.n_r() as f64 * config.n_b as f64 / config.l_g as f64).sqrt();
    let scale_t = (config.n_r() as f64 * config.n_u as f64 / config.l_t as f64).sqrt();
    steering
        .iter()
        .zip(freqs.iter())
        .map(|(s, &f_k)| ChannelTriple {
            h: &s.a_uh * gain_diagonal(&gains.alpha_h, &stats.direct.delays, f_k, scale_h) * s.a_bh.adjoint(),
            g: &s.a_rg * gain_diagonal(&gains.alpha_g, &stats.bs_ris.delays, f_k, scale_g) * s.a_bg.adjoint(),
            t: &s.a_ut * gain_diagonal(&gains.alpha_t, &stats.ris_user.delays, f_k, scale_t) * s.a_rt.adjoint(),
        })
        .collect()
}

/// Builds the per-subcarrier channel triple H_k, G_k, T_k from statistics
/// and one gain realization, e.g. H_k = A_uh,k · H_L,k · A_bh,kᴴ with
/// H_L,k = √(N_b N_u / L_h) · diag(α_h,i e^{−j2πτ_h,i f_k}).
pub fn assemble_channels(
    stats: &ChannelStatistics,
    gains: &PathGains,
    config: &SystemConfig,
) -> Result<Vec<ChannelTriple>, Error> {
    stats.validate(config)?;
    let gain_lens = [
        ("alpha_h", gains.alpha_h.len(), config.l_h),
        ("alpha_g", gains.alpha_g.len(), config.l_g),
        ("alpha_t", gains.alpha_t.len(), config.l_t),
    ];
    for (name, got, expected) in gain_lens {
        if got != expected {
            return Err(Error::Dimension(format!(
                "{name} has {got} entries, path count is {expected}"
            )));
        }
    }
    let steering = steering_matrices(stats, config);
    Ok(assemble_from_steering(&steering, stats, gains, config))
}
