//! Riemannian conjugate-gradient optimization of the RIS phases.
//!
//! The feasible set of reflection coefficients is the product of unit
//! circles M = {θ ∈ C^{N_r} : |θ_i| = 1}. The objective is the negative
//! reflecting-link rate
//!
//! f(θ) = −Σ_k Σ_{i≤n_s1} log2(1 + η_{k,i} d_{r,k,i}(θ)),
//!
//! where d_{r,k,i} are the descending eigenvalues of X_{r,k}ᴴX_{r,k} with
//! X_{r,k} = A_rt,kᴴ diag(θ) A_rg,k, and η collects everything that does
//! not depend on θ (SNR, array sizes, variances, power allocation, the
//! BS/user-side eigenvalues).
//!
//! The Euclidean gradient follows the eigenvalue perturbation identity
//! ∂d/∂θ̄_ℓᴴ = uᴴ [∂(XᴴX)/∂θ̄_ℓᴴ] u. With b = A_rg u and M = A_rt A_rtᴴ
//! the per-element sum collapses to
//!
//! ∂d/∂θ̄_ℓᴴ = conj(b_ℓ)·[M(θ⊙b)]_ℓ − conj(b_ℓ)·M_ℓℓ·θ_ℓ·b_ℓ,
//!
//! which costs O(N_r·l) per stream instead of the O(N_r²) elementwise
//! form. The excluded diagonal term contributes only along θ_ℓ itself
//! (it is real·θ_ℓ), so the projected gradient is unaffected; see
//! [`euclidean_gradient_full`] for the diagnostic variant that keeps it.
//!
//! The gradient is a conjugate-coordinate (Wirtinger) derivative: the true
//! directional derivative along a tangent v is 2·Re⟨∇f, v⟩. The factor 2
//! only rescales descent directions and is absorbed by the line search.

use rand::Rng;

use crate::channel::{LinkVariances, SteeringMatrices, SystemConfig};
use crate::linalg;
use crate::spectra::{reflect_gram_eigs, EigenProfile, StreamRanks};
use crate::{C64, CMat, CVec, Error};

/// Unit-modulus RIS reflection coefficients θ.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    theta: CVec,
}

impl PhaseVector {
    /// Builds θ_i = e^{j·phases\[i\]}.
    pub fn from_phases(phases: &[f64]) -> Self {
        Self { theta: CVec::from_fn(phases.len(), |i, _| C64::from_polar(1.0, phases[i])) }
    }

    /// Elementwise normalization unt(v): v_i / |v_i|. Zero entries map to 1.
    pub fn unit_modulus(v: &CVec) -> Self {
        Self {
            theta: v.map(|x| {
                let r = x.norm();
                if r > 0.0 {
                    x / r
                } else {
                    C64::new(1.0, 0.0)
                }
            }),
        }
    }

    /// i.i.d. phases uniform on [0, 2π).
    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        let phases: Vec<f64> =
            (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        Self::from_phases(&phases)
    }

    /// Validates |θ_i| = 1 to 1e−12 without renormalizing.
    pub fn from_unit_vector(v: CVec) -> Result<Self, Error> {
        for (i, x) in v.iter().enumerate() {
            if (x.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "phase vector entry {i} has modulus {}, expected 1",
                    x.norm()
                )));
            }
        }
        Ok(Self { theta: v })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn as_vector(&self) -> &CVec {
        &self.theta
    }

    /// Retraction back onto the manifold: unt(θ + step).
    pub fn retract(&self, step: &CVec) -> Self {
        Self::unit_modulus(&(&self.theta + step))
    }

    /// Global phase rotation e^{jφ}θ (the objective is invariant to it).
    pub fn rotated(&self, phase: f64) -> Self {
        let w = C64::from_polar(1.0, phase);
        Self { theta: self.theta.map(|x| x * w) }
    }
}

impl std::ops::Index<usize> for PhaseVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.theta[i]
    }
}

/// Per-stream weights η_{k,i} of the phase-optimization objective
/// (K × n_s1, non-negative).
#[derive(Debug, Clone)]
pub struct RcgWeights {
    pub eta: nalgebra::DMatrix<f64>,
}

impl RcgWeights {
    /// Weights for a given power matrix (K × n_s):
    /// η_{k,i} = snr · N_b N_u N_r² σ_g,i² σ_t,i² / (L_g L_t) · q_{k,i} · d_ut,k,i · d_bg,k,i.
    pub fn from_allocation(
        profile: &EigenProfile,
        ranks: &StreamRanks,
        variances: &LinkVariances,
        q: &nalgebra::DMatrix<f64>,
        snr: f64,
        config: &SystemConfig,
    ) -> Self {
        let k_sub = profile.per_subcarrier.len();
        let n_r = config.n_r() as f64;
        let base = snr * config.n_b as f64 * config.n_u as f64 * n_r * n_r
            / (config.l_g as f64 * config.l_t as f64);
        let eta = nalgebra::DMatrix::from_fn(k_sub, ranks.n_s1, |k, i| {
            let sub = &profile.per_subcarrier[k];
            base * variances.g[i] * variances.t[i] * q[(k, i)] * sub.d_ut[i] * sub.d_bg[i]
        });
        Self { eta }
    }

    /// Weights for the isotropic covariance Q_k = (1/(K N_b)) I: the BS
    /// antenna count cancels and the per-stream power becomes 1/K:
    /// η_{k,i} = snr · N_u N_r² σ_g,i² σ_t,i² / (K L_g L_t) · d_ut,k,i · d_bg,k,i.
    pub fn isotropic_power(
        profile: &EigenProfile,
        ranks: &StreamRanks,
        variances: &LinkVariances,
        snr: f64,
        config: &SystemConfig,
    ) -> Self {
        let k_sub = profile.per_subcarrier.len();
        let n_r = config.n_r() as f64;
        let base = snr * config.n_u as f64 * n_r * n_r
            / (k_sub as f64 * config.l_g as f64 * config.l_t as f64);
        let eta = nalgebra::DMatrix::from_fn(k_sub, ranks.n_s1, |k, i| {
            let sub = &profile.per_subcarrier[k];
            base * variances.g[i] * variances.t[i] * sub.d_ut[i] * sub.d_bg[i]
        });
        Self { eta }
    }
}

/// Optimization report: final point, per-iteration objective and gradient
/// norms, and how the run ended.
#[derive(Debug, Clone)]
pub struct RcgReport {
    pub theta_opt: PhaseVector,
    /// f value per iterate, starting with the initial point; non-increasing.
    pub objective_trace: Vec<f64>,
    /// Riemannian gradient norm per iterate.
    pub grad_norm_trace: Vec<f64>,
    /// Number of accepted steps.
    pub iterations: usize,
    /// True when the gradient-norm tolerance was met.
    pub converged: bool,
    pub termination: RcgTermination,
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcgTermination {
    GradientTolerance,
    MaxIterations,
    /// Armijo backtracking exhausted even along steepest descent; the best
    /// iterate so far is returned.
    LineSearchFailure,
}

/// Stopping rule and Armijo parameters.
#[derive(Debug, Clone, Copy)]
pub struct RcgOptions {
    pub tol_grad: f64,
    pub max_iter: usize,
}

impl Default for RcgOptions {
    fn default() -> Self {
        Self { tol_grad: 1e-4, max_iter: 200 }
    }
}

const ARMIJO_C1: f64 = 1e-4;
const ARMIJO_CONTRACTION: f64 = 0.5;
const ARMIJO_MAX_BACKTRACKS: usize = 50;
const ARMIJO_MAX_EXPANSIONS: usize = 12;

/// Objective f(θ) = −Σ_k Σ_{i≤n_s1} log2(1 + η_{k,i} d_{r,k,i}(θ)).
pub fn ris_objective(
    theta: &PhaseVector,
    weights: &RcgWeights,
    steering: &[SteeringMatrices],
) -> f64 {
    let n_s1 = weights.eta.ncols();
    let mut f = 0.0;
    for (k, s) in steering.iter().enumerate() {
        let x = s.a_rt.adjoint() * scale_rows(theta, &s.a_rg);
        let gram = x.adjoint() * &x;
        let mut d = linalg::hermitian_eigenvalues_desc(&gram);
        linalg::clip_nonneg(&mut d);
        for i in 0..n_s1 {
            f -= (1.0 + weights.eta[(k, i)] * d[i]).log2();
        }
    }
    f
}

fn scale_rows(theta: &PhaseVector, a: &CMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |r, c| theta[r] * a[(r, c)])
}

fn gradient_impl(
    theta: &PhaseVector,
    weights: &RcgWeights,
    steering: &[SteeringMatrices],
    include_diagonal: bool,
) -> CVec {
    let n_r = theta.len();
    let n_s1 = weights.eta.ncols();
    let ln2 = std::f64::consts::LN_2;
    let mut grad = CVec::zeros(n_r);
    for (k, s) in steering.iter().enumerate() {
        let (d, u) = reflect_gram_eigs(&s.a_rt, theta, &s.a_rg).expect("validated dimensions");
        let m = &s.a_rt * s.a_rt.adjoint();
        let m_diag = m.diagonal();
        for i in 0..n_s1 {
            let eta = weights.eta[(k, i)];
            if eta == 0.0 {
                continue;
            }
            let w = -eta / ((1.0 + eta * d[i]) * ln2);
            let b = &s.a_rg * u.column(i);
            let theta_b = CVec::from_fn(n_r, |l, _| theta[l] * b[l]);
            let v = &m * &theta_b;
            for l in 0..n_r {
                let mut term = b[l].conj() * v[l];
                if !include_diagonal {
                    term -= b[l].conj() * m_diag[l] * theta_b[l];
                }
                grad[l] += term.scale(w);
            }
        }
    }
    grad
}

/// Euclidean (conjugate-coordinate) gradient of the objective, with the
/// purely radial diagonal term excluded.
pub fn euclidean_gradient(
    theta: &PhaseVector,
    weights: &RcgWeights,
    steering: &[SteeringMatrices],
) -> CVec {
    gradient_impl(theta, weights, steering, false)
}

/// Gradient variant that keeps the diagonal term of the Gram derivative.
/// The extra contribution is real·θ_ℓ per element, so both variants project
/// to the same Riemannian gradient; exposed for diagnostics and tests.
pub fn euclidean_gradient_full(
    theta: &PhaseVector,
    weights: &RcgWeights,
    steering: &[SteeringMatrices],
) -> CVec {
    gradient_impl(theta, weights, steering, true)
}

fn project(v: &CVec, theta: &PhaseVector) -> CVec {
    CVec::from_fn(v.len(), |i, _| {
        let radial = (v[i] * theta[i].conj()).re;
        v[i] - theta[i].scale(radial)
    })
}

/// Orthogonal projection of the Euclidean gradient onto the tangent space:
/// grad = ∇f − Re{∇f ⊙ θ*} ⊙ θ.
pub fn riemannian_gradient(egrad: &CVec, theta: &PhaseVector) -> CVec {
    project(egrad, theta)
}

/// Transport of a tangent vector into the tangent space at `theta_new`
/// (the same projection applied at the new point).
pub fn vector_transport(v: &CVec, theta_new: &PhaseVector) -> CVec {
    project(v, theta_new)
}

fn re_inner(a: &CVec, b: &CVec) -> f64 {
    a.dotc(b).re
}

struct LineSearchHit {
    theta: PhaseVector,
    objective: f64,
}

fn armijo_search(
    theta: &PhaseVector,
    f0: f64,
    slope: f64,
    direction: &CVec,
    grad_norm_sq: f64,
    weights: &RcgWeights,
    steering: &[SteeringMatrices],
) -> Option<LineSearchHit> {
    let sufficient = |alpha: f64, f_new: f64| f_new <= f0 - ARMIJO_C1 * alpha * grad_norm_sq;
    let evaluate = |alpha: f64| -> (PhaseVector, f64) {
        let candidate = theta.retract(&direction.scale(alpha));
        let f_new = ris_objective(&candidate, weights, steering);
        (candidate, f_new)
    };

    let mut alpha = 1.0;
    let (mut point, mut value) = evaluate(alpha);
    let mut accepted = sufficient(alpha, value);
    if accepted {
        // Forward-track: the unit step already decreases enough, so grow
        // the step while the decrease condition keeps holding and the
        // objective keeps improving.
        for _ in 0..ARMIJO_MAX_EXPANSIONS {
            let wider = alpha * 2.0;
            let (p, v) = evaluate(wider);
            if v < value && sufficient(wider, v) {
                alpha = wider;
                point = p;
                value = v;
            } else {
                break;
            }
        }
    } else {
        for _ in 0..ARMIJO_MAX_BACKTRACKS {
            alpha *= ARMIJO_CONTRACTION;
            let (p, v) = evaluate(alpha);
            if sufficient(alpha, v) {
                point = p;
                value = v;
                accepted = true;
                break;
            }
        }
    }
    if !accepted {
        return None;
    }

    // Refine with the one-dimensional quadratic model through f(0), the
    // directional slope, and the accepted trial; keep the refinement only
    // if it is itself Armijo-acceptable and better.
    let curvature = (value - f0 - slope * alpha) / (alpha * alpha);
    if slope < 0.0 && curvature > 0.0 {
        let alpha_q = -slope / (2.0 * curvature);
        if alpha_q.is_finite() && alpha_q > 0.0 && (alpha_q - alpha).abs() > 1e-12 * alpha {
            let (p, v) = evaluate(alpha_q);
            if v < value && sufficient(alpha_q, v) {
                return Some(LineSearchHit { theta: p, objective: v });
            }
        }
    }
    Some(LineSearchHit { theta: point, objective: value })
}

/// Conjugate-gradient descent on the unit-modulus manifold with
/// Polak-Ribière direction mixing (floored at zero), tangent transport of
/// the previous direction, and Armijo backtracking with retraction.
/// Stops when the Riemannian gradient norm falls to `tol_grad`.
pub fn rcg_optimize(
    theta0: &PhaseVector,
    weights: &RcgWeights,
    steering: &[SteeringMatrices],
    options: &RcgOptions,
) -> RcgReport {
    let mut theta = theta0.clone();
    let mut f = ris_objective(&theta, weights, steering);
    let mut grad = project(&euclidean_gradient(&theta, weights, steering), &theta);
    let mut grad_norm_sq = re_inner(&grad, &grad);

    let mut objective_trace = vec![f];
    let mut grad_norm_trace = vec![grad_norm_sq.sqrt()];
    let mut direction = -grad.clone();
    let mut termination = RcgTermination::MaxIterations;
    let mut iterations = 0;

    for _ in 0..options.max_iter {
        if grad_norm_sq.sqrt() <= options.tol_grad {
            termination = RcgTermination::GradientTolerance;
            break;
        }

        // Fall back to steepest descent whenever the mixed direction has
        // lost the descent property.
        if re_inner(&grad, &direction) >= 0.0 {
            direction = -grad.clone();
        }

        // True directional derivative along the tangent direction carries
        // the Wirtinger factor 2.
        let slope = 2.0 * re_inner(&grad, &direction);
        let mut hit =
            armijo_search(&theta, f, slope, &direction, grad_norm_sq, weights, steering);
        if hit.is_none() {
            let steepest = -grad.clone();
            if (&steepest - &direction).norm() > 0.0 {
                let steepest_slope = -2.0 * grad_norm_sq;
                hit = armijo_search(
                    &theta,
                    f,
                    steepest_slope,
                    &steepest,
                    grad_norm_sq,
                    weights,
                    steering,
                );
            }
        }
        let Some(step) = hit else {
            termination = RcgTermination::LineSearchFailure;
            break;
        };

        let theta_new = step.theta;
        let f_new = step.objective;
        let grad_new = project(&euclidean_gradient(&theta_new, weights, steering), &theta_new);
        let grad_new_norm_sq = re_inner(&grad_new, &grad_new);

        // Polak-Ribière with transported previous gradient, floored at 0.
        let transported_grad = vector_transport(&grad, &theta_new);
        let beta = if grad_norm_sq > 0.0 {
            (re_inner(&grad_new, &(&grad_new - &transported_grad)) / grad_norm_sq).max(0.0)
        } else {
            0.0
        };
        direction = -&grad_new + vector_transport(&direction, &theta_new).scale(beta);

        theta = theta_new;
        f = f_new;
        grad = grad_new;
        grad_norm_sq = grad_new_norm_sq;
        iterations += 1;
        objective_trace.push(f);
        grad_norm_trace.push(grad_norm_sq.sqrt());

        if grad_norm_sq.sqrt() <= options.tol_grad {
            termination = RcgTermination::GradientTolerance;
            break;
        }
    }
    if termination == RcgTermination::MaxIterations && grad_norm_sq.sqrt() <= options.tol_grad {
        termination = RcgTermination::GradientTolerance;
    }

    RcgReport {
        theta_opt: theta,
        objective_trace,
        grad_norm_trace,
        iterations,
        converged: termination == RcgTermination::GradientTolerance,
        termination,
    }
}
