//! Seeded experiment harness.
//!
//! Each experiment fans out over (SNR point × angle set) work items. A work
//! item derives every random stream it needs from the master seed and its
//! own indices, so the result set is independent of scheduling: running on
//! one thread or many, or re-running a single item, reproduces identical
//! bytes. Angle sets and gain draws are shared across SNR points and
//! schemes, which both pins determinism and pairs the scheme comparisons.
//!
//! Emitted rows use a fixed column order with floats at 12 significant
//! digits; CSV and JSON carry identical field names and values.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{alternating_optimize, AoOptions};
use crate::channel::{sample_statistics, steering_matrices, LinkVariances, SystemConfig};
use crate::rate::{
    approx_rate_sampled, jensen_rate, jensen_rate_uniform, mc_ergodic_rate, RateSample,
};
use crate::rcg::{rcg_optimize, PhaseVector, RcgOptions, RcgWeights};
use crate::seeds;
use crate::spectra::{eigen_profile, stream_ranks, transmit_covariance};
use crate::waterfill::{compute_zeta, waterfill, PowerAllocation};
use crate::{C64, CMat, Error};

/// Baseline with aligned covariance directions and uniform per-stream
/// power q = 1/(K·N_s), random phases.
pub const SCHEME_NOT_OPTIMIZED: &str = "not_optimized";
/// Baseline with isotropic covariance Q = (1/(K·N_b))·I, random phases.
pub const SCHEME_ISOTROPIC: &str = "uniform_q_random_theta";
/// Water-filled power at random phases.
pub const SCHEME_Q_ONLY: &str = "q_only";
/// Optimized phases under the isotropic covariance.
pub const SCHEME_THETA_ONLY: &str = "theta_only";
/// Full alternating optimization.
pub const SCHEME_BOTH: &str = "both_optimized";
/// Inner phase-optimizer trace rows.
pub const SCHEME_RCG: &str = "rcg";
/// Outer-loop trace rows.
pub const SCHEME_AO: &str = "ao";

/// What to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Monte-Carlo rate vs. its two approximations at fixed baselines.
    Tightness,
    /// Per-iteration trace of the phase optimizer at uniform power.
    RcgConvergence,
    /// Per-outer-iteration trace of the alternating optimization.
    AoConvergence,
    /// All schemes evaluated across the SNR list.
    SnrSweep,
    /// Same scheme set, intended for a single SNR point.
    Ablation,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Tightness => "tightness",
            ExperimentKind::RcgConvergence => "rcg_convergence",
            ExperimentKind::AoConvergence => "ao_convergence",
            ExperimentKind::SnrSweep => "snr_sweep",
            ExperimentKind::Ablation => "ablation",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tightness" => Ok(ExperimentKind::Tightness),
            "rcg_convergence" => Ok(ExperimentKind::RcgConvergence),
            "ao_convergence" => Ok(ExperimentKind::AoConvergence),
            "snr_sweep" => Ok(ExperimentKind::SnrSweep),
            "ablation" => Ok(ExperimentKind::Ablation),
            other => Err(format!(
                "unknown experiment '{other}' (expected tightness, rcg_convergence, \
                 ao_convergence, snr_sweep, or ablation)"
            )),
        }
    }
}

/// Output format of the result file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// Flat experiment description; mirrors the config-file keys one-to-one.
/// Unknown keys in a config file are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    pub n_b: usize,
    pub n_u: usize,
    pub n_r_y: usize,
    pub n_r_z: usize,
    pub k_sub: usize,
    pub n_cp: usize,
    pub f_c: f64,
    pub f_s: f64,
    pub l_g: usize,
    pub l_t: usize,
    pub l_h: usize,
    pub gain_rate_h: f64,
    pub gain_rate_g: f64,
    pub gain_rate_t: f64,
    pub snr_db_list: Vec<f64>,
    pub n_angle_sets: usize,
    pub n_gain_draws: usize,
    pub master_seed: u64,
    pub output_path: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::desk_scale(ExperimentKind::Tightness)
    }
}

impl ExperimentSpec {
    /// Desk-scale defaults: 32 BS antennas, 6×6 RIS, 4 user antennas, 20
    /// angle sets × 200 gain draws.
    pub fn desk_scale(experiment: ExperimentKind) -> Self {
        let config = SystemConfig::desk_scale();
        Self {
            experiment,
            n_b: config.n_b,
            n_u: config.n_u,
            n_r_y: config.n_r_y,
            n_r_z: config.n_r_z,
            k_sub: config.k_sub,
            n_cp: config.n_cp,
            f_c: config.f_c,
            f_s: config.f_s,
            l_g: config.l_g,
            l_t: config.l_t,
            l_h: config.l_h,
            gain_rate_h: config.gain_rate_h,
            gain_rate_g: config.gain_rate_g,
            gain_rate_t: config.gain_rate_t,
            snr_db_list: vec![0.0, 10.0, 20.0, 30.0],
            n_angle_sets: 20,
            n_gain_draws: 200,
            master_seed: 1,
            output_path: PathBuf::from("results.csv"),
        }
    }

    /// Full-scale preset (100 BS antennas, 13×13 RIS, 16 user antennas,
    /// 100 angle sets × 1000 gain draws); expect long runtimes.
    pub fn paper_scale(experiment: ExperimentKind) -> Self {
        let config = SystemConfig::paper_scale();
        Self {
            n_b: config.n_b,
            n_u: config.n_u,
            n_r_y: config.n_r_y,
            n_r_z: config.n_r_z,
            n_angle_sets: 100,
            n_gain_draws: 1000,
            ..Self::desk_scale(experiment)
        }
    }

    /// Loads a spec from a JSON config file; missing keys take desk-scale
    /// defaults, unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let spec: ExperimentSpec = serde_json::from_str(&text)
            .map_err(|e| Error::ConfigFile { path: path.to_path_buf(), message: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.snr_db_list.is_empty() {
            return Err(Error::Config("snr_db_list must not be empty".into()));
        }
        if self.n_angle_sets == 0 {
            return Err(Error::Config("n_angle_sets must be at least 1".into()));
        }
        if self.n_gain_draws == 0 {
            return Err(Error::Config("n_gain_draws must be at least 1".into()));
        }
        self.system_config(1.0).validate()
    }

    /// System configuration at a given linear SNR. dB-to-linear conversion
    /// happens only here, at the harness boundary.
    pub fn system_config(&self, snr: f64) -> SystemConfig {
        SystemConfig {
            n_b: self.n_b,
            n_u: self.n_u,
            n_r_y: self.n_r_y,
            n_r_z: self.n_r_z,
            k_sub: self.k_sub,
            n_cp: self.n_cp,
            f_c: self.f_c,
            f_s: self.f_s,
            l_g: self.l_g,
            l_t: self.l_t,
            l_h: self.l_h,
            snr,
            gain_rate_h: self.gain_rate_h,
            gain_rate_g: self.gain_rate_g,
            gain_rate_t: self.gain_rate_t,
        }
    }
}

/// Converts a dB value to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10.0_f64.powf(db / 10.0)
}

/// One output row. `iteration` is only set on convergence-trace rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub scheme: String,
    pub snr_db: f64,
    pub angle_set: usize,
    pub iteration: Option<usize>,
    pub rate_mc: f64,
    pub rate_mc_stderr: f64,
    pub rate_approx: f64,
    pub rate_jensen: f64,
    pub objective: f64,
}

/// Fixed CSV header.
pub const CSV_HEADER: &str =
    "experiment,scheme,snr_db,angle_set,iteration,rate_mc,rate_mc_stderr,rate_approx,rate_jensen,objective";

fn fmt_sig(v: f64) -> String {
    format!("{v:.11e}")
}

/// Renders rows in the given format; deterministic byte-for-byte.
pub fn render(rows: &[ResultRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in rows {
                let iteration = r.iteration.map(|i| i.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.experiment,
                    r.scheme,
                    fmt_sig(r.snr_db),
                    r.angle_set,
                    iteration,
                    fmt_sig(r.rate_mc),
                    fmt_sig(r.rate_mc_stderr),
                    fmt_sig(r.rate_approx),
                    fmt_sig(r.rate_jensen),
                    fmt_sig(r.objective),
                ));
            }
            out
        }
        OutputFormat::Json => {
            let mut out = String::from("[");
            for (i, r) in rows.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let iteration =
                    r.iteration.map(|i| i.to_string()).unwrap_or_else(|| "null".into());
                out.push_str(&format!(
                    "\n  {{\"experiment\":\"{}\",\"scheme\":\"{}\",\"snr_db\":{},\"angle_set\":{},\"iteration\":{},\"rate_mc\":{},\"rate_mc_stderr\":{},\"rate_approx\":{},\"rate_jensen\":{},\"objective\":{}}}",
                    r.experiment,
                    r.scheme,
                    fmt_sig(r.snr_db),
                    r.angle_set,
                    iteration,
                    fmt_sig(r.rate_mc),
                    fmt_sig(r.rate_mc_stderr),
                    fmt_sig(r.rate_approx),
                    fmt_sig(r.rate_jensen),
                    fmt_sig(r.objective),
                ));
            }
            out.push_str("\n]\n");
            out
        }
    }
}

/// Writes rows to `path`.
pub fn emit_results(rows: &[ResultRow], path: &Path, format: OutputFormat) -> Result<(), Error> {
    let text = render(rows, format);
    let mut file = std::fs::File::create(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    file.write_all(text.as_bytes())
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.experiment.as_str(), a.snr_db, a.angle_set, a.scheme.as_str(), a.iteration)
            .partial_cmp(&(
                b.experiment.as_str(),
                b.snr_db,
                b.angle_set,
                b.scheme.as_str(),
                b.iteration,
            ))
            .unwrap()
    });
}

/// Shared per-work-item state: statistics, steering, and the random phase
/// baseline, all derived from the master seed and the angle-set index so
/// they coincide across SNR points and schemes.
struct AngleSetContext {
    stats: crate::channel::ChannelStatistics,
    steering: Vec<crate::channel::SteeringMatrices>,
    variances: LinkVariances,
    theta_random: PhaseVector,
}

impl AngleSetContext {
    fn build(spec: &ExperimentSpec, angle_set: usize) -> Self {
        let config = spec.system_config(1.0);
        let mut angle_rng =
            seeds::stream(spec.master_seed, &[seeds::DOMAIN_ANGLES, angle_set as u64]);
        let stats = sample_statistics(&mut angle_rng, &config);
        let steering = steering_matrices(&stats, &config);
        let variances = LinkVariances::from_stats(&stats);
        let mut phase_rng =
            seeds::stream(spec.master_seed, &[seeds::DOMAIN_PHASES, angle_set as u64]);
        let theta_random = PhaseVector::random(&mut phase_rng, config.n_r());
        Self { stats, steering, variances, theta_random }
    }
}

fn isotropic_covariance(config: &SystemConfig) -> Vec<CMat> {
    let scale = C64::new(1.0 / (config.k_sub as f64 * config.n_b as f64), 0.0);
    (0..config.k_sub)
        .map(|_| CMat::identity(config.n_b, config.n_b) * scale)
        .collect()
}

fn mc_for(
    spec: &ExperimentSpec,
    ctx: &AngleSetContext,
    angle_set: usize,
    q_cov: &[CMat],
    theta: &PhaseVector,
    config: &SystemConfig,
) -> Result<RateSample, Error> {
    let mut rng = seeds::stream(spec.master_seed, &[seeds::DOMAIN_GAINS, angle_set as u64]);
    mc_ergodic_rate(
        &mut rng,
        &ctx.stats,
        &ctx.steering,
        q_cov,
        theta,
        config.snr,
        spec.n_gain_draws,
        config,
    )
}

fn approx_for(
    spec: &ExperimentSpec,
    ctx: &AngleSetContext,
    angle_set: usize,
    profile: &crate::spectra::EigenProfile,
    ranks: &crate::spectra::StreamRanks,
    q: &nalgebra::DMatrix<f64>,
    config: &SystemConfig,
) -> RateSample {
    let mut rng =
        seeds::stream(spec.master_seed, &[seeds::DOMAIN_APPROX_GAINS, angle_set as u64]);
    approx_rate_sampled(
        &mut rng,
        profile,
        ranks,
        q,
        &ctx.variances,
        config.snr,
        config,
        spec.n_gain_draws,
    )
}

/// Tightness of the approximations under the standard baseline: aligned
/// covariance with uniform per-stream power and random phases. One row per
/// (SNR, angle set) with the Monte-Carlo rate, the sampled approximation,
/// and the Jensen bound; the bound also fills the objective column.
pub fn run_tightness(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, Error> {
    run_over_items(spec, |snr_db, angle_set| {
        let config = spec.system_config(db_to_linear(snr_db));
        let ctx = AngleSetContext::build(spec, angle_set);
        let theta = &ctx.theta_random;
        let ranks = stream_ranks(&ctx.steering, theta, &config)?;
        let profile = eigen_profile(&ctx.steering, theta, &config)?;
        let q = PowerAllocation::uniform(config.k_sub, ranks.total()).q;
        let q_cov = transmit_covariance(&ctx.steering, &ranks, &q)?;

        let mc = mc_for(spec, &ctx, angle_set, &q_cov, theta, &config)?;
        let approx = approx_for(spec, &ctx, angle_set, &profile, &ranks, &q, &config);
        let jensen = jensen_rate(&profile, &ranks, &q, &ctx.variances, config.snr, &config);

        Ok(vec![ResultRow {
            experiment: spec.experiment.as_str().into(),
            scheme: SCHEME_NOT_OPTIMIZED.into(),
            snr_db,
            angle_set,
            iteration: None,
            rate_mc: mc.value,
            rate_mc_stderr: mc.std_err,
            rate_approx: approx.value,
            rate_jensen: jensen,
            objective: jensen,
        }])
    })
}

/// Phase-optimizer convergence at uniform power: one row per iteration
/// with the running objective f and the Jensen rate it implies.
pub fn run_rcg_convergence(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, Error> {
    run_over_items(spec, |snr_db, angle_set| {
        let config = spec.system_config(db_to_linear(snr_db));
        let ctx = AngleSetContext::build(spec, angle_set);
        let mut init_rng =
            seeds::stream(spec.master_seed, &[seeds::DOMAIN_RIS_INIT, angle_set as u64]);
        let theta0 = PhaseVector::random(&mut init_rng, config.n_r());
        let ranks = stream_ranks(&ctx.steering, &theta0, &config)?;
        let profile = eigen_profile(&ctx.steering, &theta0, &config)?;
        let q = PowerAllocation::uniform(config.k_sub, ranks.total()).q;
        let weights =
            RcgWeights::from_allocation(&profile, &ranks, &ctx.variances, &q, config.snr, &config);
        let report = rcg_optimize(&theta0, &weights, &ctx.steering, &RcgOptions::default());

        // The direct-link part of the Jensen rate is unaffected by θ; add
        // it to the (negated, prefactored) reflecting objective to report
        // the full bound along the trace.
        let prefactor = 1.0 / (config.k_sub + config.n_cp) as f64;
        let jensen_full = jensen_rate(&profile, &ranks, &q, &ctx.variances, config.snr, &config);
        let f0 = report.objective_trace[0];
        let direct_part = jensen_full + f0 * prefactor;

        Ok(report
            .objective_trace
            .iter()
            .enumerate()
            .map(|(i, &f)| ResultRow {
                experiment: spec.experiment.as_str().into(),
                scheme: SCHEME_RCG.into(),
                snr_db,
                angle_set,
                iteration: Some(i),
                rate_mc: 0.0,
                rate_mc_stderr: 0.0,
                rate_approx: 0.0,
                rate_jensen: direct_part - f * prefactor,
                objective: f,
            })
            .collect())
    })
}

/// Outer-loop convergence: one row per outer iteration with the objective
/// trace, plus a final row evaluating the optimized pair by Monte-Carlo.
pub fn run_ao_convergence(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, Error> {
    run_over_items(spec, |snr_db, angle_set| {
        let config = spec.system_config(db_to_linear(snr_db));
        let ctx = AngleSetContext::build(spec, angle_set);
        let mut init_rng =
            seeds::stream(spec.master_seed, &[seeds::DOMAIN_AO_INIT, angle_set as u64]);
        let report = alternating_optimize(
            &mut init_rng,
            &ctx.stats,
            &ctx.steering,
            config.snr,
            &config,
            &AoOptions::default(),
        )?;

        let experiment = spec.experiment.as_str().to_string();
        let mut rows: Vec<ResultRow> = Vec::new();
        rows.push(ResultRow {
            experiment: experiment.clone(),
            scheme: SCHEME_AO.into(),
            snr_db,
            angle_set,
            iteration: Some(0),
            rate_mc: 0.0,
            rate_mc_stderr: 0.0,
            rate_approx: 0.0,
            rate_jensen: report.initial_objective,
            objective: report.initial_objective,
        });
        for (i, &r) in report.objective_trace.iter().enumerate() {
            rows.push(ResultRow {
                experiment: experiment.clone(),
                scheme: SCHEME_AO.into(),
                snr_db,
                angle_set,
                iteration: Some(i + 1),
                rate_mc: 0.0,
                rate_mc_stderr: 0.0,
                rate_approx: 0.0,
                rate_jensen: r,
                objective: r,
            });
        }

        let ranks = stream_ranks(&ctx.steering, &report.theta_opt, &config)?;
        let profile = eigen_profile(&ctx.steering, &report.theta_opt, &config)?;
        let q_cov = transmit_covariance(&ctx.steering, &ranks, &report.q_opt.q)?;
        let mc = mc_for(spec, &ctx, angle_set, &q_cov, &report.theta_opt, &config)?;
        let approx =
            approx_for(spec, &ctx, angle_set, &profile, &ranks, &report.q_opt.q, &config);
        let jensen =
            jensen_rate(&profile, &ranks, &report.q_opt.q, &ctx.variances, config.snr, &config);
        rows.push(ResultRow {
            experiment,
            scheme: SCHEME_AO.into(),
            snr_db,
            angle_set,
            iteration: None,
            rate_mc: mc.value,
            rate_mc_stderr: mc.std_err,
            rate_approx: approx.value,
            rate_jensen: jensen,
            objective: *report.objective_trace.last().unwrap_or(&report.initial_objective),
        });
        Ok(rows)
    })
}

/// Scheme sweep: for every (SNR, angle set), evaluates the two baselines,
/// the two single-block optimizations, and the full alternating
/// optimization, all against the same gain draws.
pub fn run_ao_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, Error> {
    run_over_items(spec, |snr_db, angle_set| {
        let config = spec.system_config(db_to_linear(snr_db));
        let ctx = AngleSetContext::build(spec, angle_set);
        let experiment = spec.experiment.as_str().to_string();
        let mut rows = Vec::with_capacity(5);

        let mut push =
            |scheme: &str, mc: RateSample, approx: f64, jensen: f64, objective: f64| {
                rows.push(ResultRow {
                    experiment: experiment.clone(),
                    scheme: scheme.into(),
                    snr_db,
                    angle_set,
                    iteration: None,
                    rate_mc: mc.value,
                    rate_mc_stderr: mc.std_err,
                    rate_approx: approx,
                    rate_jensen: jensen,
                    objective,
                });
            };

        // Shared profile at the random phase baseline.
        let theta_rand = ctx.theta_random.clone();
        let ranks = stream_ranks(&ctx.steering, &theta_rand, &config)?;
        let profile_rand = eigen_profile(&ctx.steering, &theta_rand, &config)?;
        let q_uniform = PowerAllocation::uniform(config.k_sub, ranks.total()).q;
        let iso_cov = isotropic_covariance(&config);
        let iso_q = nalgebra::DMatrix::from_element(
            config.k_sub,
            ranks.total(),
            1.0 / (config.k_sub as f64 * config.n_b as f64),
        );

        // not_optimized: aligned directions, uniform per-stream power.
        {
            let q_cov = transmit_covariance(&ctx.steering, &ranks, &q_uniform)?;
            let mc = mc_for(spec, &ctx, angle_set, &q_cov, &theta_rand, &config)?;
            let approx =
                approx_for(spec, &ctx, angle_set, &profile_rand, &ranks, &q_uniform, &config);
            let jensen = jensen_rate(
                &profile_rand,
                &ranks,
                &q_uniform,
                &ctx.variances,
                config.snr,
                &config,
            );
            push(SCHEME_NOT_OPTIMIZED, mc, approx.value, jensen, jensen);
        }

        // uniform_q_random_theta: isotropic covariance, random phases.
        {
            let mc = mc_for(spec, &ctx, angle_set, &iso_cov, &theta_rand, &config)?;
            let approx =
                approx_for(spec, &ctx, angle_set, &profile_rand, &ranks, &iso_q, &config);
            let jensen =
                jensen_rate_uniform(&profile_rand, &ranks, &ctx.variances, config.snr, &config);
            push(SCHEME_ISOTROPIC, mc, approx.value, jensen, jensen);
        }

        // q_only: water-filling at the random phases.
        {
            let zeta = compute_zeta(&profile_rand, &ranks, &ctx.variances, config.snr, &config);
            let alloc = waterfill(&zeta, 1.0)?;
            let q_cov = transmit_covariance(&ctx.steering, &ranks, &alloc.q)?;
            let mc = mc_for(spec, &ctx, angle_set, &q_cov, &theta_rand, &config)?;
            let approx =
                approx_for(spec, &ctx, angle_set, &profile_rand, &ranks, &alloc.q, &config);
            let jensen =
                jensen_rate(&profile_rand, &ranks, &alloc.q, &ctx.variances, config.snr, &config);
            push(SCHEME_Q_ONLY, mc, approx.value, jensen, jensen);
        }

        // theta_only: isotropic covariance, phases optimized for it.
        {
            let weights = RcgWeights::isotropic_power(
                &profile_rand,
                &ranks,
                &ctx.variances,
                config.snr,
                &config,
            );
            let mut init_rng =
                seeds::stream(spec.master_seed, &[seeds::DOMAIN_RIS_INIT, angle_set as u64]);
            let theta0 = PhaseVector::random(&mut init_rng, config.n_r());
            let report = rcg_optimize(&theta0, &weights, &ctx.steering, &RcgOptions::default());
            let profile_opt = eigen_profile(&ctx.steering, &report.theta_opt, &config)?;
            let mc = mc_for(spec, &ctx, angle_set, &iso_cov, &report.theta_opt, &config)?;
            let approx =
                approx_for(spec, &ctx, angle_set, &profile_opt, &ranks, &iso_q, &config);
            let jensen =
                jensen_rate_uniform(&profile_opt, &ranks, &ctx.variances, config.snr, &config);
            push(SCHEME_THETA_ONLY, mc, approx.value, jensen, jensen);
        }

        // both_optimized: the full alternating optimization.
        {
            let mut init_rng =
                seeds::stream(spec.master_seed, &[seeds::DOMAIN_AO_INIT, angle_set as u64]);
            let report = alternating_optimize(
                &mut init_rng,
                &ctx.stats,
                &ctx.steering,
                config.snr,
                &config,
                &AoOptions::default(),
            )?;
            let ranks_opt = stream_ranks(&ctx.steering, &report.theta_opt, &config)?;
            let profile_opt = eigen_profile(&ctx.steering, &report.theta_opt, &config)?;
            let q_cov = transmit_covariance(&ctx.steering, &ranks_opt, &report.q_opt.q)?;
            let mc = mc_for(spec, &ctx, angle_set, &q_cov, &report.theta_opt, &config)?;
            let approx = approx_for(
                spec,
                &ctx,
                angle_set,
                &profile_opt,
                &ranks_opt,
                &report.q_opt.q,
                &config,
            );
            let jensen = jensen_rate(
                &profile_opt,
                &ranks_opt,
                &report.q_opt.q,
                &ctx.variances,
                config.snr,
                &config,
            );
            push(SCHEME_BOTH, mc, approx.value, jensen, jensen);
        }

        Ok(rows)
    })
}

fn run_over_items<F>(spec: &ExperimentSpec, item: F) -> Result<Vec<ResultRow>, Error>
where
    F: Fn(f64, usize) -> Result<Vec<ResultRow>, Error> + Sync,
{
    let items: Vec<(f64, usize)> = spec
        .snr_db_list
        .iter()
        .flat_map(|&snr_db| (0..spec.n_angle_sets).map(move |a| (snr_db, a)))
        .collect();
    let nested: Result<Vec<Vec<ResultRow>>, Error> = items
        .par_iter()
        .map(|&(snr_db, angle_set)| item(snr_db, angle_set))
        .collect();
    let mut rows: Vec<ResultRow> = nested?.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Validates and dispatches the experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, Error> {
    spec.validate()?;
    match spec.experiment {
        ExperimentKind::Tightness => run_tightness(spec),
        ExperimentKind::RcgConvergence => run_rcg_convergence(spec),
        ExperimentKind::AoConvergence => run_ao_convergence(spec),
        ExperimentKind::SnrSweep | ExperimentKind::Ablation => run_ao_sweep(spec),
    }
}

/// Ensemble-mean normalized errors of the sampled approximation and the
/// Jensen bound against the Monte-Carlo reference, over the given rows.
/// Rows with a non-positive reference contribute zero error by convention.
pub fn mean_normalized_errors(rows: &[ResultRow]) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0);
    }
    let mut approx = 0.0;
    let mut jensen = 0.0;
    for r in rows {
        if r.rate_mc > 0.0 {
            approx += (r.rate_approx - r.rate_mc).abs() / r.rate_mc;
            jensen += (r.rate_jensen - r.rate_mc).abs() / r.rate_mc;
        }
    }
    (approx / rows.len() as f64, jensen / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(kind: ExperimentKind) -> ExperimentSpec {
        ExperimentSpec {
            n_b: 8,
            n_u: 2,
            n_r_y: 2,
            n_r_z: 2,
            k_sub: 3,
            n_cp: 2,
            l_g: 2,
            l_t: 2,
            l_h: 2,
            snr_db_list: vec![10.0],
            n_angle_sets: 2,
            n_gain_draws: 10,
            master_seed: 7,
            ..ExperimentSpec::desk_scale(kind)
        }
    }

    #[test]
    fn empty_rows_render_header_only() {
        let csv = render(&[], OutputFormat::Csv);
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
        let json = render(&[], OutputFormat::Json);
        assert_eq!(
            serde_json::from_str::<serde_json::Value>(&json).unwrap(),
            serde_json::json!([])
        );
    }

    #[test]
    fn json_round_trips_values() {
        let row = ResultRow {
            experiment: "tightness".into(),
            scheme: SCHEME_NOT_OPTIMIZED.into(),
            snr_db: 20.0,
            angle_set: 3,
            iteration: None,
            rate_mc: 1.234567890123456,
            rate_mc_stderr: 0.01,
            rate_approx: 1.3,
            rate_jensen: 1.4,
            objective: 1.4,
        };
        let json = render(&[row.clone()], OutputFormat::Json);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let obj = &parsed[0];
        assert_eq!(obj["experiment"], "tightness");
        assert_eq!(obj["angle_set"], 3);
        assert!(obj["iteration"].is_null());
        // Values survive the 12-significant-digit formatting round trip.
        let emitted: f64 = obj["rate_mc"].as_f64().unwrap();
        assert!((emitted - row.rate_mc).abs() < 1e-11);
    }

    #[test]
    fn csv_and_json_carry_identical_values() {
        let spec = tiny_spec(ExperimentKind::Tightness);
        let rows = run_experiment(&spec).unwrap();
        let csv = render(&rows, OutputFormat::Csv);
        let json = render(&rows, OutputFormat::Json);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let csv_lines: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(csv_lines.len(), parsed.as_array().unwrap().len());
        for (line, obj) in csv_lines.iter().zip(parsed.as_array().unwrap()) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], obj["experiment"].as_str().unwrap());
            let mc_csv: f64 = fields[5].parse().unwrap();
            assert_eq!(mc_csv, obj["rate_mc"].as_f64().unwrap());
        }
    }

    #[test]
    fn run_is_deterministic() {
        let spec = tiny_spec(ExperimentKind::SnrSweep);
        let a = render(&run_experiment(&spec).unwrap(), OutputFormat::Csv);
        let b = render(&run_experiment(&spec).unwrap(), OutputFormat::Csv);
        assert_eq!(a, b);
    }

    #[test]
    fn tightness_jensen_dominates_approx_rowwise() {
        let spec = tiny_spec(ExperimentKind::Tightness);
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.rate_jensen >= r.rate_approx - 3.0 * r.rate_mc_stderr - 1e-9);
            assert!(r.rate_mc.is_finite() && r.rate_mc >= 0.0);
        }
    }

    #[test]
    fn sweep_emits_five_schemes() {
        let spec = tiny_spec(ExperimentKind::Ablation);
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 5 * spec.n_angle_sets);
        for s in [
            SCHEME_BOTH,
            SCHEME_NOT_OPTIMIZED,
            SCHEME_Q_ONLY,
            SCHEME_THETA_ONLY,
            SCHEME_ISOTROPIC,
        ] {
            assert!(rows.iter().any(|r| r.scheme == s), "missing scheme {s}");
        }
        for r in &rows {
            assert!(r.rate_mc.is_finite() && r.rate_mc >= 0.0);
            assert!(r.rate_jensen.is_finite());
        }
    }

    #[test]
    fn convergence_traces_are_monotone() {
        let spec = tiny_spec(ExperimentKind::AoConvergence);
        let rows = run_experiment(&spec).unwrap();
        for set in 0..spec.n_angle_sets {
            let trace: Vec<f64> = rows
                .iter()
                .filter(|r| r.angle_set == set && r.iteration.is_some())
                .map(|r| r.objective)
                .collect();
            assert!(!trace.is_empty());
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }

    #[test]
    fn rcg_trace_jensen_and_objective_consistent() {
        let spec = tiny_spec(ExperimentKind::RcgConvergence);
        let rows = run_experiment(&spec).unwrap();
        // f decreasing, reported Jensen rate increasing, in lockstep.
        for set in 0..spec.n_angle_sets {
            let per_set: Vec<&ResultRow> = rows.iter().filter(|r| r.angle_set == set).collect();
            for w in per_set.windows(2) {
                assert!(w[1].objective <= w[0].objective + 1e-9);
                assert!(w[1].rate_jensen >= w[0].rate_jensen - 1e-9);
            }
        }
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let err = serde_json::from_str::<ExperimentSpec>(
            r#"{"experiment":"tightness","bogus_key":1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus_key"));
    }

    #[test]
    fn db_conversion() {
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((db_to_linear(0.0) - 1.0).abs() < 1e-12);
        assert!((db_to_linear(30.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn spec_validation_catches_empty_lists() {
        let mut spec = tiny_spec(ExperimentKind::Tightness);
        spec.snr_db_list.clear();
        assert!(spec.validate().is_err());
        let mut spec = tiny_spec(ExperimentKind::Tightness);
        spec.n_angle_sets = 0;
        assert!(spec.validate().is_err());
    }
}
