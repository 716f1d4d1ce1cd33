//! Per-dimension linear model of the stochastic gradient, `g ≈ a·θ + b`.
//!
//! Each parameter dimension carries its own two-dimensional Kalman filter over
//! `w = (a, b)`. The weights drift as a Gaussian random walk with variance `q`
//! per step and every gradient is a noisy observation `g = H w + noise` with
//! `H = (μ, 1)` and noise variance `r`. Old gradients are therefore forgotten
//! at a rate set by `q / r`.
//!
//! The symmetric 2×2 covariances are stored as three parallel vectors
//! (`p11`, `p12`, `p22`) so the update is a single vectorizable sweep.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Filtering distribution of the gradient surrogate for all dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateState {
    a: Vec<f64>,
    b: Vec<f64>,
    p11: Vec<f64>,
    p12: Vec<f64>,
    p22: Vec<f64>,
}

/// Predicted-and-corrected covariance of one dimension plus the quantities the
/// mean update needs.
struct CovarianceStep {
    p11: f64,
    p12: f64,
    p22: f64,
    // P⁻ Hᵀ
    h1: f64,
    h2: f64,
    v: f64,
}

#[inline]
fn covariance_step(p11: f64, p12: f64, p22: f64, mu: f64, q: f64, r: f64) -> CovarianceStep {
    let pp11 = p11 + q;
    let pp22 = p22 + q;
    let h1 = pp11 * mu + p12;
    let h2 = p12 * mu + pp22;
    // v >= r analytically; the clamp only guards against rounding.
    let v = (mu * h1 + h2 + r).max(r);
    CovarianceStep {
        p11: pp11 - h1 * h1 / v,
        p12: p12 - h1 * h2 / v,
        p22: pp22 - h2 * h2 / v,
        h1,
        h2,
        v,
    }
}

#[inline]
fn is_pd(p11: f64, p12: f64, p22: f64) -> bool {
    p11 > 0.0 && p22 > 0.0 && p11 * p22 - p12 * p12 > 0.0 && p12.is_finite()
}

impl SurrogateState {
    /// Zero prior mean with covariance `p0 · I` in every dimension.
    pub fn new(n: usize, p0: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("surrogate dimension must be >= 1".into()));
        }
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial filter variance must be positive and finite, got {p0}"
            )));
        }
        Ok(Self {
            a: vec![0.0; n],
            b: vec![0.0; n],
            p11: vec![p0; n],
            p12: vec![0.0; n],
            p22: vec![p0; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// MAP estimate `(a, b)` of the gradient model.
    pub fn params(&self) -> (&[f64], &[f64]) {
        (&self.a, &self.b)
    }

    pub fn p11(&self) -> &[f64] {
        &self.p11
    }

    pub fn p12(&self) -> &[f64] {
        &self.p12
    }

    pub fn p22(&self) -> &[f64] {
        &self.p22
    }

    /// Covariance of dimension `j` as `[[p11, p12], [p12, p22]]`.
    pub fn covariance(&self, j: usize) -> [[f64; 2]; 2] {
        [[self.p11[j], self.p12[j]], [self.p12[j], self.p22[j]]]
    }

    /// Predict with the random-walk drift, then condition on the gradient `g`
    /// observed at parameters `mu`.
    ///
    /// On error the state is left untouched.
    pub fn update(&mut self, mu: &[f64], g: &[f64], q: f64, r: f64) -> Result<()> {
        let n = self.dim();
        check_len(n, mu.len())?;
        check_len(n, g.len())?;
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!("drift variance q must be >= 0, got {q}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("measurement noise r must be > 0, got {r}")));
        }
        check_finite("mu", mu)?;
        check_finite("gradient", g)?;

        for j in 0..n {
            let c = covariance_step(self.p11[j], self.p12[j], self.p22[j], mu[j], q, r);
            if !is_pd(c.p11, c.p12, c.p22) {
                return Err(Error::InternalConsistency { dim: j });
            }
        }

        for j in 0..n {
            let c = covariance_step(self.p11[j], self.p12[j], self.p22[j], mu[j], q, r);
            let innovation = g[j] - (mu[j] * self.a[j] + self.b[j]);
            self.a[j] += c.h1 / c.v * innovation;
            self.b[j] += c.h2 / c.v * innovation;
            self.p11[j] = c.p11;
            self.p12[j] = c.p12;
            self.p22[j] = c.p22;
        }
        Ok(())
    }

    /// Checks the documented invariants: finite entries and a positive
    /// definite covariance in every dimension.
    pub fn is_valid(&self) -> bool {
        (0..self.dim()).all(|j| {
            self.a[j].is_finite()
                && self.b[j].is_finite()
                && is_pd(self.p11[j], self.p12[j], self.p22[j])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn init_uses_zero_mean_and_isotropic_prior() {
        let s = SurrogateState::new(3, 0.00005).unwrap();
        assert_eq!(s.params(), (&[0.0; 3][..], &[0.0; 3][..]));
        assert_eq!(s.p11(), &[5e-5; 3]);
        assert_eq!(s.p22(), &[5e-5; 3]);
        assert_eq!(s.p12(), &[0.0; 3]);

        let s = SurrogateState::new(1, 1.0).unwrap();
        assert_eq!(s.covariance(0), [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(SurrogateState::new(0, 1.0).is_err());
        assert!(SurrogateState::new(2, 0.0).is_err());
        assert!(SurrogateState::new(2, -1.0).is_err());
        assert!(SurrogateState::new(2, f64::NAN).is_err());
    }

    #[test]
    fn single_update_matches_hand_evaluation() {
        // P⁻ = 0.01005 I, H = (1, 1), v = 1.0201, K = 0.01005 / 1.0201 (both entries).
        let mut s = SurrogateState::new(1, 5e-5).unwrap();
        s.update(&[1.0], &[1.0], 0.01, 1.0).unwrap();
        let k = 0.01005 / 1.0201;
        let (a, b) = s.params();
        assert_relative_eq!(a[0], k, max_relative = 1e-12);
        assert_relative_eq!(b[0], k, max_relative = 1e-12);
        assert_relative_eq!(a[0], 0.009852, max_relative = 1e-4);
        assert_relative_eq!(s.p11()[0], 0.01005 - 0.01005 * 0.01005 / 1.0201, max_relative = 1e-12);
        assert_relative_eq!(s.p11()[0], 0.0099510, max_relative = 1e-4);
        assert_relative_eq!(s.p22()[0], s.p11()[0], max_relative = 1e-15);
        assert_relative_eq!(s.p12()[0], -9.9013e-5, max_relative = 1e-4);
    }

    #[test]
    fn huge_measurement_noise_ignores_observation() {
        let mut s = SurrogateState::new(2, 5e-5).unwrap();
        s.update(&[0.3, -2.0], &[7.0, -11.0], 0.01, 1e12).unwrap();
        let (a, b) = s.params();
        for v in a.iter().chain(b) {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn noiseless_line_is_recovered() {
        // g = 2μ − 4 observed at 20 distinct points.
        let mut s = SurrogateState::new(1, 1.0).unwrap();
        for k in 0..20 {
            let mu = -1.5 + 0.17 * k as f64;
            s.update(&[mu], &[2.0 * mu - 4.0], 0.0, 1e-6).unwrap();
        }
        let (a, b) = s.params();
        assert!((a[0] - 2.0).abs() < 1e-3, "a = {}", a[0]);
        assert!((b[0] + 4.0).abs() < 1e-3, "b = {}", b[0]);
    }

    #[test]
    fn repeated_observation_shrinks_covariance_along_observed_direction() {
        let mut s = SurrogateState::new(1, 1.0).unwrap();
        let (mu, g) = (0.5, 3.0);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            s.update(&[mu], &[g], 0.0, 0.1).unwrap();
            let [[p11, p12], [_, p22]] = s.covariance(0);
            // Variance of H w = μ a + b.
            let var_h = mu * mu * p11 + 2.0 * mu * p12 + p22;
            assert!(var_h <= prev * (1.0 + 1e-12));
            prev = var_h;
        }
        let (a, b) = s.params();
        assert!((mu * a[0] + b[0] - g).abs() < 1e-2);
    }

    #[test]
    fn rejects_invalid_inputs_without_mutation() {
        let mut s = SurrogateState::new(2, 1.0).unwrap();
        let before = s.clone();
        assert!(matches!(
            s.update(&[0.0, f64::NAN], &[1.0, 1.0], 0.1, 1.0),
            Err(Error::NonFinite { what: "mu", index: 1 })
        ));
        assert!(matches!(
            s.update(&[0.0, 0.0], &[f64::INFINITY, 1.0], 0.1, 1.0),
            Err(Error::NonFinite { what: "gradient", index: 0 })
        ));
        assert!(s.update(&[0.0], &[1.0], 0.1, 1.0).is_err());
        assert!(s.update(&[0.0, 0.0], &[1.0, 1.0], -0.1, 1.0).is_err());
        assert!(s.update(&[0.0, 0.0], &[1.0, 1.0], 0.1, 0.0).is_err());
        assert_eq!(s, before);
    }
}
