//! Ergodic-rate simulator for RIS-assisted mmWave MIMO-OFDM links.
//!
//! Models a point-to-point wideband downlink in which a base station reaches
//! a user both through a direct path and through a reconfigurable intelligent
//! surface (RIS). Channels follow the sparse Saleh-Valenzuela model with
//! per-subcarrier steering matrices, and only statistical CSI — angles, path
//! variances, delays — is assumed available for the optimization.
//!
//! The crate is organized around the pipeline:
//!
//! - [`channel`]: deterministic array geometry (subcarrier frequencies,
//!   ULA/UPA steering vectors) and seeded stochastic synthesis of channel
//!   statistics, path gains, and full channel matrices.
//! - [`spectra`]: eigen-structure of the statistical CSI, stream ranks, the
//!   RIS cross matrix, and the transmit-covariance builder.
//! - [`rate`]: rate functionals — Monte-Carlo ergodic rate, the sampled
//!   majorization approximation, and the closed-form Jensen bounds.
//! - [`waterfill`]: joint space-frequency water-filling for the power
//!   allocation sub-problem.
//! - [`rcg`]: Riemannian conjugate-gradient optimization of the RIS phases
//!   on the product-of-unit-circles manifold.
//! - [`ao`]: the alternating-optimization outer loop combining the two.
//! - [`harness`]: reproducible, seeded experiment runner with CSV/JSON
//!   output; the `riswave` binary is a thin CLI over it.

pub mod ao;
pub mod channel;
pub mod harness;
pub mod linalg;
pub mod rate;
pub mod rcg;
pub mod seeds;
pub mod spectra;
pub mod waterfill;

/// Complex scalar used throughout; all arithmetic is in 64-bit floats.
pub type C64 = nalgebra::Complex<f64>;
/// Dynamically sized complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dynamically sized complex column vector.
pub type CVec = nalgebra::DVector<C64>;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("stream ranks differ across subcarriers: {0}")]
    RankInconsistent(String),

    #[error("effective-channel quadratic form is not PSD (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("power vector has {got} entries but the profile carries {expected} streams")]
    PowerLength { got: usize, expected: usize },

    #[error("normalized error needs a positive reference rate, got {0}")]
    NonPositiveReference(f64),

    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config file {}: {message}", path.display())]
    ConfigFile {
        path: std::path::PathBuf,
        message: String,
    },
}

pub use channel::{
    assemble_channels, sample_gains, sample_statistics, steering_matrices,
    subcarrier_frequencies, ula_steering, upa_steering, ChannelStatistics, ChannelTriple,
    LinkVariances, PathGains, SteeringMatrices, SystemConfig,
};
pub use rate::{
    approx_rate_sampled, instantaneous_rate, jensen_rate, jensen_rate_uniform, mc_ergodic_rate,
    normalized_error, RateSample,
};
pub use rcg::{rcg_optimize, PhaseVector, RcgOptions, RcgReport, RcgWeights};
pub use spectra::{
    build_covariance, cross_matrix, eigen_profile, orthogonality_defect, stream_ranks,
    EigenProfile, StreamRanks, SubcarrierEigens,
};
pub use waterfill::{compute_zeta, waterfill, PowerAllocation, StreamGains};

pub use ao::{alternating_optimize, AoOptions, AoReport};
pub use harness::{
    emit_results, run_experiment, ExperimentKind, ExperimentSpec, OutputFormat, ResultRow,
};
