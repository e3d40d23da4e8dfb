//! Joint space-frequency water-filling.
//!
//! The power-allocation sub-problem maximizes Σ_{k,i} log2(1 + ζ_{k,i} q_{k,i})
//! over the simplex Σ q = budget, q ≥ 0, whose KKT solution is
//! q_{k,i} = max(0, level − 1/ζ_{k,i}) with the water level chosen to spend
//! the whole budget. The level is computed in closed form per active set:
//! streams are sorted by ζ descending, and for the prefix of size m the
//! candidate level is (budget + Σ_{j≤m} 1/ζ_j)/m; the optimal prefix is the
//! largest one whose weakest stream still receives positive power. A
//! bisection fallback guards the (tie-induced) corner cases.

use nalgebra::DMatrix;

use crate::channel::{LinkVariances, SystemConfig};
use crate::spectra::{EigenProfile, StreamRanks};
use crate::Error;

/// Stream gains below this are treated as zero to keep 1/ζ finite.
const ZETA_FLOOR: f64 = 1e-300;

/// Effective per-stream gains ζ_{k,i} ≥ 0 (K × n_s).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamGains {
    pub zeta: DMatrix<f64>,
}

/// Power allocation q_{k,i} over subcarriers and streams.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// K × n_s, non-negative, summing to the budget when `allocated`.
    pub q: DMatrix<f64>,
    /// Water level (the reciprocal Lagrange multiplier); infinite when
    /// nothing could be allocated.
    pub water_level: f64,
    /// False when every stream gain was zero and no power was assigned.
    pub allocated: bool,
}

impl PowerAllocation {
    /// Uniform allocation q_{k,i} = 1/(K·n_s); the standard initialization
    /// and the "not optimized" baseline. No water level applies.
    pub fn uniform(k_sub: usize, n_s: usize) -> Self {
        Self {
            q: DMatrix::from_element(k_sub, n_s, 1.0 / (k_sub as f64 * n_s as f64)),
            water_level: f64::INFINITY,
            allocated: true,
        }
    }
}

/// Effective gains of the Jensen-bound objective:
/// reflecting streams (i ≤ n_s1) carry
/// ζ = snr·N_b N_u N_r² σ_g,i² σ_t,i²/(L_g L_t) · d_ut·d_bg·d_r,
/// direct streams (i > n_s1, path index i−n_s1) carry
/// ζ = snr·N_b N_u σ_h²/L_h · d_uh·d_bh.
pub fn compute_zeta(
    profile: &EigenProfile,
    ranks: &StreamRanks,
    variances: &LinkVariances,
    snr: f64,
    config: &SystemConfig,
) -> StreamGains {
    let k_sub = profile.per_subcarrier.len();
    let n_r = config.n_r() as f64;
    let reflect_base = snr * config.n_b as f64 * config.n_u as f64 * n_r * n_r
        / (config.l_g as f64 * config.l_t as f64);
    let direct_base = snr * config.n_b as f64 * config.n_u as f64 / config.l_h as f64;
    let zeta = DMatrix::from_fn(k_sub, ranks.total(), |k, i| {
        let sub = &profile.per_subcarrier[k];
        if i < ranks.n_s1 {
            reflect_base * variances.g[i] * variances.t[i] * sub.d_ut[i] * sub.d_bg[i] * sub.d_r[i]
        } else {
            let j = i - ranks.n_s1;
            direct_base * variances.h[j] * sub.d_uh[j] * sub.d_bh[j]
        }
    });
    StreamGains { zeta }
}

/// Water-fills `budget` over the streams: q = max(0, level − 1/ζ) with the
/// level spending the budget exactly. Streams with zero gain get zero
/// power; if every gain is zero the result is flagged unallocated.
pub fn waterfill(gains: &StreamGains, budget: f64) -> Result<PowerAllocation, Error> {
    if !(budget > 0.0) {
        return Err(Error::Config(format!("water-filling budget must be positive, got {budget}")));
    }
    let zeta = &gains.zeta;
    if zeta.iter().any(|&z| z < 0.0) {
        return Err(Error::Config("stream gains must be non-negative".into()));
    }

    // Active candidates in (k, i) order, then sorted by ζ descending;
    // the sort is stable so ties keep their (k, i) order.
    let mut order: Vec<(usize, f64)> = zeta
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, z)| z > ZETA_FLOOR)
        .collect();
    if order.is_empty() {
        return Ok(PowerAllocation {
            q: DMatrix::zeros(zeta.nrows(), zeta.ncols()),
            water_level: f64::INFINITY,
            allocated: false,
        });
    }
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());

    // Largest prefix whose weakest stream still gets positive power.
    let mut inverse_sum = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (m, &(_, z)) in order.iter().enumerate() {
        let candidate_sum = inverse_sum + 1.0 / z;
        let candidate_level = (budget + candidate_sum) / (m + 1) as f64;
        if candidate_level - 1.0 / z > 0.0 {
            inverse_sum = candidate_sum;
            level = candidate_level;
            active = m + 1;
        } else {
            break;
        }
    }
    debug_assert!(active > 0, "strongest stream always receives power");

    let mut q = DMatrix::zeros(zeta.nrows(), zeta.ncols());
    let flat_cols = zeta.nrows();
    for &(flat, z) in order.iter().take(active) {
        let (r, c) = (flat % flat_cols, flat / flat_cols);
        q[(r, c)] = level - 1.0 / z;
    }

    // Closed form spends the budget exactly up to rounding; a bisection
    // pass picks up the slack if ties ever push it beyond tolerance.
    let spent: f64 = q.iter().sum();
    if (spent - budget).abs() > 1e-10 * budget {
        let (q_b, level_b) = bisect_level(&order, zeta.nrows(), zeta.ncols(), budget);
        return Ok(PowerAllocation { q: q_b, water_level: level_b, allocated: true });
    }
    Ok(PowerAllocation { q, water_level: level, allocated: true })
}

fn bisect_level(
    order: &[(usize, f64)],
    rows: usize,
    cols: usize,
    budget: f64,
) -> (DMatrix<f64>, f64) {
    let spend = |level: f64| -> f64 {
        order.iter().map(|&(_, z)| (level - 1.0 / z).max(0.0)).sum()
    };
    let mut lo = 0.0;
    let mut hi = order.iter().map(|&(_, z)| 1.0 / z).fold(0.0_f64, f64::max) + budget;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spend(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let level = 0.5 * (lo + hi);
    let mut q = DMatrix::zeros(rows, cols);
    for &(flat, z) in order {
        let (r, c) = (flat % rows, flat / rows);
        q[(r, c)] = (level - 1.0 / z).max(0.0);
    }
    (q, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gains_from(rows: usize, cols: usize, values: &[f64]) -> StreamGains {
        StreamGains { zeta: DMatrix::from_row_slice(rows, cols, values) }
    }

    #[test]
    fn two_stream_hand_example() {
        let alloc = waterfill(&gains_from(1, 2, &[4.0, 1.0]), 1.0).unwrap();
        assert!((alloc.q[(0, 0)] - 0.875).abs() < 1e-12);
        assert!((alloc.q[(0, 1)] - 0.125).abs() < 1e-12);
        assert!((alloc.water_level - 1.125).abs() < 1e-12);
    }

    #[test]
    fn weak_stream_shut_off() {
        let alloc = waterfill(&gains_from(1, 2, &[10.0, 0.1]), 1.0).unwrap();
        assert!((alloc.q[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(alloc.q[(0, 1)], 0.0);
    }

    #[test]
    fn equal_gains_split_evenly() {
        let alloc = waterfill(&gains_from(2, 3, &[2.0; 6]), 1.0).unwrap();
        for &q in alloc.q.iter() {
            assert!((q - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_gains_flagged() {
        let alloc = waterfill(&gains_from(2, 2, &[0.0; 4]), 1.0).unwrap();
        assert!(!alloc.allocated);
        assert_eq!(alloc.q.iter().copied().sum::<f64>(), 0.0);
    }

    #[test]
    fn zero_rows_get_nothing() {
        let alloc = waterfill(&gains_from(1, 3, &[5.0, 0.0, 2.0]), 1.0).unwrap();
        assert_eq!(alloc.q[(0, 1)], 0.0);
        let spent: f64 = alloc.q.iter().sum();
        assert!((spent - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_budget_rejected() {
        assert!(waterfill(&gains_from(1, 1, &[1.0]), 0.0).is_err());
    }

    #[test]
    fn uniform_allocation_sums_to_one() {
        let alloc = PowerAllocation::uniform(4, 3);
        let total: f64 = alloc.q.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn kkt_conditions_hold(
            raw in proptest::collection::vec(0.0..100.0_f64, 1..24),
            budget in 0.1..10.0_f64,
        ) {
            let n = raw.len();
            let gains = StreamGains { zeta: DMatrix::from_vec(1, n, raw.clone()) };
            let alloc = waterfill(&gains, budget).unwrap();
            let spent: f64 = alloc.q.iter().sum();
            if alloc.allocated {
                prop_assert!((spent - budget).abs() < 1e-9 * budget.max(1.0));
                for i in 0..n {
                    let z = gains.zeta[(0, i)];
                    let q = alloc.q[(0, i)];
                    prop_assert!(q >= 0.0);
                    if z <= ZETA_FLOOR {
                        prop_assert_eq!(q, 0.0);
                    } else if q > 0.0 {
                        // Complementary slackness: active streams touch the level.
                        prop_assert!((alloc.water_level - 1.0 / z - q).abs() < 1e-9);
                    } else {
                        prop_assert!(alloc.water_level <= 1.0 / z + 1e-9);
                    }
                }
            } else {
                prop_assert_eq!(spent, 0.0);
            }
        }

        #[test]
        fn raising_a_gain_never_hurts(
            raw in proptest::collection::vec(0.01..50.0_f64, 2..12),
            bump in 1.1..4.0_f64,
        ) {
            let n = raw.len();
            let objective = |zeta: &[f64]| {
                let gains = StreamGains { zeta: DMatrix::from_vec(1, n, zeta.to_vec()) };
                let alloc = waterfill(&gains, 1.0).unwrap();
                zeta.iter()
                    .zip(alloc.q.iter())
                    .map(|(&z, &q)| (1.0 + z * q).log2())
                    .sum::<f64>()
            };
            let base = objective(&raw);
            let mut raised = raw.clone();
            raised[0] *= bump;
            prop_assert!(objective(&raised) >= base - 1e-9);
        }
    }
}
