use riswave::channel::{sample_statistics, steering_matrices, LinkVariances, SystemConfig};
use riswave::harness::db_to_linear;
use riswave::rcg::{rcg_optimize, PhaseVector, RcgOptions, RcgWeights};
use riswave::seeds;
use riswave::spectra::{eigen_profile, stream_ranks};
use riswave::waterfill::PowerAllocation;

fn main() {
    let t0 = std::time::Instant::now();
    let mut worst = 0usize;
    for seed in 0..40u64 {
        let snr_db = [0.0, 10.0, 20.0, 30.0][(seed % 4) as usize];
        let config = SystemConfig { snr: db_to_linear(snr_db), ..SystemConfig::desk_scale() };
        let stats = sample_statistics(&mut seeds::stream(seed, &[seeds::DOMAIN_ANGLES]), &config);
        let steering = steering_matrices(&stats, &config);
        let variances = LinkVariances::from_stats(&stats);
        let theta0 = PhaseVector::random(&mut seeds::stream(seed, &[seeds::DOMAIN_RIS_INIT]), config.n_r());
        let ranks = stream_ranks(&steering, &theta0, &config).unwrap();
        let profile = eigen_profile(&steering, &theta0, &config).unwrap();
        let q = PowerAllocation::uniform(config.k_sub, ranks.total()).q;
        let weights = RcgWeights::from_allocation(&profile, &ranks, &variances, &q, config.snr, &config);
        let opts = RcgOptions { tol_grad: 1e-4, max_iter: 200 };
        let report = rcg_optimize(&theta0, &weights, &steering, &opts);
        worst = worst.max(report.iterations);
        if report.iterations > 40 || !report.converged {
            println!("seed {seed} snr {snr_db}: iters {} converged {}", report.iterations, report.converged);
        }
    }
    println!("worst {worst}, elapsed {:?}", t0.elapsed());
}
