//! Closed-form primal updates of the KL trust-region problem and the
//! bisection search for its Lagrange multiplier `η`.
//!
//! With a diagonal surrogate `f(θ) = ½ Σ a_j θ_j² + b_j θ_j` and a diagonal
//! Gaussian `N(μ, diag σ²)`, the primal solutions decouple per dimension:
//!
//! ```text
//! μ_j(η) = (η μ_prev,j / σ²_prev,j − b_j) / (a_j + η / σ²_prev,j + ρλ)
//! σ²_j   = (ρ + ν) / (a_j + ρλ + ν / σ²_prev,j)
//! ```
//!
//! Only the mean depends on `η`. The dual derivative is the mean part of the
//! KL divergence minus the bound, `g'(η) = C_μ(μ(η)) − ε`, which is
//! non-increasing in `η`, so a bracketing bisection finds the root.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Gaussian over the parameters with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDistribution {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl ParameterDistribution {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        let dist = Self { mu, sigma2 };
        dist.validate()?;
        Ok(dist)
    }

    pub fn isotropic(mu: Vec<f64>, sigma2: f64) -> Result<Self> {
        let n = mu.len();
        Self::new(mu, vec![sigma2; n])
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_len(self.mu.len(), self.sigma2.len())?;
        if let Some(index) = self.mu.iter().position(|m| !m.is_finite()) {
            return Err(Error::NonFinite { what: "mu", index });
        }
        if let Some(j) = self.sigma2.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "variance must be positive and finite, got {} at index {j}",
                self.sigma2[j]
            )));
        }
        Ok(())
    }
}

/// Weights of the trust-region objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionParams {
    /// Bound on the mean part of the KL divergence.
    pub epsilon: f64,
    /// Weight of the KL to the isotropic prior.
    pub rho: f64,
    /// Weight of the covariance part of the KL.
    pub nu: f64,
    /// Precision of the isotropic prior.
    pub lambda_prec: f64,
}

impl TrustRegionParams {
    /// `ε` and `ν` must be positive. `ρ` and `λ` may be zero, which switches
    /// the prior term off.
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")))
            }
        };
        pos("epsilon", self.epsilon)?;
        pos("nu", self.nu)?;
        nonneg("rho", self.rho)?;
        nonneg("lambda_prec", self.lambda_prec)
    }

    /// `ρλ`, the curvature contributed by the prior.
    #[inline]
    pub fn prior_curvature(&self) -> f64 {
        self.rho * self.lambda_prec
    }
}

/// Warm start for the next dual solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub eta_warm: f64,
}

impl Default for DualState {
    fn default() -> Self {
        Self { eta_warm: 1.0 }
    }
}

/// Stopping and bracketing rules of the bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once `|g'(η)| < grad_tol · ε`.
    pub grad_tol: f64,
    /// Optional absolute bracket-width stop `C_u − C_l < width_tol`. When it
    /// fires the feasible upper bound is returned.
    pub width_tol: Option<f64>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub max_bisections: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grad_tol: 0.1,
            width_tol: None,
            eta_min: 1e-12,
            eta_max: 1e12,
            max_bisections: 200,
        }
    }
}

/// Result of one dual solve.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaSolution {
    pub eta: f64,
    /// `μ(η)`.
    pub mu: Vec<f64>,
    /// `C_μ` of the returned mean.
    pub c_mu: f64,
    /// Number of bisection midpoints evaluated.
    pub iterations: usize,
    /// Total dual-derivative evaluations, including bracketing.
    pub evaluations: usize,
    /// The unconstrained optimum was already inside the trust region.
    pub interior: bool,
}

#[inline]
fn mean_at(a: f64, b: f64, mu_prev: f64, sigma2_prev: f64, eta: f64, prior: f64) -> (f64, f64) {
    let precision = eta / sigma2_prev;
    let den = a + precision + prior;
    ((precision * mu_prev - b) / den, den)
}

fn check_inputs(a: &[f64], b: &[f64], prev: &ParameterDistribution) -> Result<()> {
    check_len(prev.dim(), a.len())?;
    check_len(prev.dim(), b.len())?;
    check_len(prev.dim(), prev.sigma2.len())
}

/// New mean for a given multiplier `η`.
pub fn primal_mean(
    a: &[f64],
    b: &[f64],
    prev: &ParameterDistribution,
    eta: f64,
    tr: &TrustRegionParams,
) -> Result<Vec<f64>> {
    check_inputs(a, b, prev)?;
    let prior = tr.prior_curvature();
    let mut out = Vec::with_capacity(a.len());
    for j in 0..a.len() {
        let (m, den) = mean_at(a[j], b[j], prev.mu[j], prev.sigma2[j], eta, prior);
        if !(den > 0.0) {
            return Err(Error::Domain { dim: j, value: den });
        }
        out.push(m);
    }
    Ok(out)
}

/// New variances. Independent of `η`, hence no multiplier argument.
pub fn primal_variance(a: &[f64], prev: &ParameterDistribution, tr: &TrustRegionParams) -> Vec<f64> {
    let prior = tr.prior_curvature();
    a.iter()
        .zip(&prev.sigma2)
        .map(|(&aj, &s2)| (tr.rho + tr.nu) / (aj + prior + tr.nu / s2))
        .collect()
}

/// Mean part of `KL(new || prev)`: `½ Σ (μ_j − μ_prev,j)² / σ²_prev,j`.
pub fn kl_mean_term(mu_new: &[f64], prev: &ParameterDistribution) -> f64 {
    let mut acc = 0.0;
    for ((m, mp), s2) in mu_new.iter().zip(&prev.mu).zip(&prev.sigma2) {
        let d = m - mp;
        acc += d * d / s2;
    }
    0.5 * acc
}

/// `C_μ(μ(η))` without materializing `μ(η)`. Summation order matches
/// `kl_mean_term(primal_mean(..))` so both give identical bits.
fn c_mu_at(
    a: &[f64],
    b: &[f64],
    prev: &ParameterDistribution,
    eta: f64,
    prior: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for j in 0..a.len() {
        let s2 = prev.sigma2[j];
        let (m, den) = mean_at(a[j], b[j], prev.mu[j], s2, eta, prior);
        if !(den > 0.0) {
            return Err(Error::Domain { dim: j, value: den });
        }
        let d = m - prev.mu[j];
        acc += d * d / s2;
    }
    Ok(0.5 * acc)
}

/// Derivative of the dual function, `C_μ(μ(η)) − ε`.
pub fn dual_derivative(
    eta: f64,
    a: &[f64],
    b: &[f64],
    prev: &ParameterDistribution,
    tr: &TrustRegionParams,
) -> Result<f64> {
    check_inputs(a, b, prev)?;
    Ok(c_mu_at(a, b, prev, eta, tr.prior_curvature())? - tr.epsilon)
}

/// Strategy that picks the multiplier for a step.
pub trait DualSolver {
    fn solve(
        &self,
        a: &[f64],
        b: &[f64],
        prev: &ParameterDistribution,
        tr: &TrustRegionParams,
        dual: &DualState,
    ) -> Result<EtaSolution>;
}

/// Warm-started bracketing bisection on the dual derivative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bisection {
    pub options: SolverOptions,
}

/// Always answers with the same multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEta(pub f64);

impl DualSolver for ConstantEta {
    fn solve(
        &self,
        a: &[f64],
        b: &[f64],
        prev: &ParameterDistribution,
        tr: &TrustRegionParams,
        _dual: &DualState,
    ) -> Result<EtaSolution> {
        let mu = primal_mean(a, b, prev, self.0, tr)?;
        let c_mu = kl_mean_term(&mu, prev);
        Ok(EtaSolution { eta: self.0, mu, c_mu, iterations: 0, evaluations: 0, interior: false })
    }
}

impl DualSolver for Bisection {
    fn solve(
        &self,
        a: &[f64],
        b: &[f64],
        prev: &ParameterDistribution,
        tr: &TrustRegionParams,
        dual: &DualState,
    ) -> Result<EtaSolution> {
        check_inputs(a, b, prev)?;
        let opts = &self.options;
        let eps = tr.epsilon;
        let tol = opts.grad_tol * eps;
        let prior = tr.prior_curvature();

        let mut evaluations = 0usize;
        let mut iterations = 0usize;
        let mut grad = |eta: f64| -> Result<f64> {
            evaluations += 1;
            Ok(c_mu_at(a, b, prev, eta, prior)? - eps)
        };

        let seed = if dual.eta_warm.is_finite() && dual.eta_warm > 0.0 {
            dual.eta_warm.clamp(opts.eta_min, opts.eta_max)
        } else {
            1.0
        };
        let mut lo = (seed / 3.0).max(opts.eta_min);
        let mut hi = (seed * 3.0).min(opts.eta_max);
        // η = 0 is admissible when every denominator stays positive there.
        let zero_ok = a.iter().all(|&aj| aj + prior > 0.0);

        // Establish g'(lo) > 0 >= g'(hi).
        let mut g_lo = grad(lo)?;
        let g_hi;
        if g_lo <= 0.0 {
            let mut g_zero = None;
            if zero_ok {
                let g0 = grad(0.0)?;
                if g0 <= 0.0 {
                    return finish(a, b, prev, tr, 0.0, iterations, evaluations, true);
                }
                g_zero = Some(g0);
            }
            loop {
                hi = lo;
                let g_prev = g_lo;
                let next = lo / 3.0;
                if next < opts.eta_min {
                    match g_zero {
                        Some(g0) => {
                            lo = 0.0;
                            g_lo = g0;
                            g_hi = g_prev;
                            break;
                        }
                        // η = 0 undefined: settle on the smallest feasible bound.
                        None => return finish(a, b, prev, tr, hi, iterations, evaluations, true),
                    }
                }
                lo = next;
                g_lo = grad(lo)?;
                if g_lo > 0.0 {
                    g_hi = g_prev;
                    break;
                }
            }
        } else {
            let mut g = grad(hi)?;
            while g > 0.0 {
                if hi >= opts.eta_max {
                    return Err(Error::SolverFailure { lo, hi });
                }
                lo = hi;
                g_lo = g;
                hi = (hi * 3.0).min(opts.eta_max);
                g = grad(hi)?;
            }
            g_hi = g;
        }
        debug_assert!(g_lo > 0.0 && g_hi <= 0.0);

        if g_hi.abs() < tol {
            return finish(a, b, prev, tr, hi, iterations, evaluations, false);
        }
        if g_lo.abs() < tol {
            return finish(a, b, prev, tr, lo, iterations, evaluations, false);
        }

        while iterations < opts.max_bisections {
            if let Some(w) = opts.width_tol {
                if hi - lo < w {
                    break;
                }
            }
            let mid = 0.5 * (lo + hi);
            iterations += 1;
            let g_mid = grad(mid)?;
            if g_mid.abs() < tol {
                return finish(a, b, prev, tr, mid, iterations, evaluations, false);
            }
            if g_mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        finish(a, b, prev, tr, hi, iterations, evaluations, false)
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    a: &[f64],
    b: &[f64],
    prev: &ParameterDistribution,
    tr: &TrustRegionParams,
    eta: f64,
    iterations: usize,
    evaluations: usize,
    interior: bool,
) -> Result<EtaSolution> {
    let mu = primal_mean(a, b, prev, eta, tr)?;
    let c_mu = kl_mean_term(&mu, prev);
    Ok(EtaSolution { eta, mu, c_mu, iterations, evaluations, interior })
}

/// Solves for `η*` with the default bisection options.
pub fn solve_eta(
    a: &[f64],
    b: &[f64],
    prev: &ParameterDistribution,
    tr: &TrustRegionParams,
    dual: &DualState,
) -> Result<EtaSolution> {
    Bisection::default().solve(a, b, prev, tr, dual)
}
