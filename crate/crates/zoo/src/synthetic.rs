//! Diagonal quadratic objective `½ Σ_j D_j (θ_j − c_j)²` whose minimizer `c`
//! is resampled around `θ*` for every gradient query.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, ZooError};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticQuadraticTask {
    pub theta_star: Vec<f64>,
    pub d: Vec<f64>,
    pub noise_scale: f64,
    pub seed: u64,
}

impl SyntheticQuadraticTask {
    pub fn new(theta_star: Vec<f64>, d: Vec<f64>, noise_scale: f64, seed: u64) -> Result<Self> {
        if theta_star.is_empty() || theta_star.len() != d.len() {
            return Err(ZooError::ShapeMismatch { expected: theta_star.len(), got: d.len() });
        }
        if !d.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(ZooError::InvalidArgument("curvatures must be positive and finite".into()));
        }
        if !theta_star.iter().all(|v| v.is_finite()) {
            return Err(ZooError::InvalidArgument("minimizer must be finite".into()));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(ZooError::InvalidArgument(format!("noise scale must be >= 0, got {noise_scale}")));
        }
        Ok(Self { theta_star, d, noise_scale, seed })
    }

    /// `D_j ~ U[d_min, d_max]`, `θ*_j ~ U[−1, 1]`, drawn from `seed`.
    pub fn random(n: usize, d_min: f64, d_max: f64, noise_scale: f64, seed: u64) -> Result<Self> {
        if !(0.0 < d_min && d_min <= d_max) {
            return Err(ZooError::InvalidArgument(format!("bad curvature range [{d_min}, {d_max}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = (0..n).map(|_| if d_min == d_max { d_min } else { rng.random_range(d_min..d_max) }).collect();
        let theta_star = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(theta_star, d, noise_scale, seed)
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Noiseless objective value at `mu`.
    pub fn loss(&self, mu: &[f64]) -> f64 {
        0.5 * mu.iter().zip(&self.theta_star).zip(&self.d).map(|((m, t), d)| d * (m - t) * (m - t)).sum::<f64>()
    }

    pub fn exact_grad(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter().zip(&self.theta_star).zip(&self.d).map(|((m, t), d)| d * (m - t)).collect()
    }

    /// Gradient averaged over `samples` draws `c ~ N(θ*, s² I)`. Identical
    /// `(task seed, batch_seed)` pairs reproduce the same draws.
    pub fn grad_batch(&self, mu: &[f64], batch_seed: u64, samples: usize) -> Result<Vec<f64>> {
        if mu.len() != self.dim() {
            return Err(ZooError::ShapeMismatch { expected: self.dim(), got: mu.len() });
        }
        if samples == 0 {
            return Err(ZooError::InvalidArgument("need at least one sample".into()));
        }
        if self.noise_scale == 0.0 {
            return Ok(self.exact_grad(mu));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(batch_seed);
        let normal = Normal::new(0.0, self.noise_scale).expect("noise scale validated");
        let mut mean_c = self.theta_star.clone();
        for _ in 0..samples {
            for c in mean_c.iter_mut() {
                *c += normal.sample(&mut rng) / samples as f64;
            }
        }
        Ok(mu.iter().zip(&mean_c).zip(&self.d).map(|((m, c), d)| d * (m - c)).collect())
    }

    /// Single-sample gradient `D (μ − c)`.
    pub fn grad(&self, mu: &[f64], batch_seed: u64) -> Result<Vec<f64>> {
        self.grad_batch(mu, batch_seed, 1)
    }

    pub fn distance(&self, mu: &[f64]) -> f64 {
        mu.iter().zip(&self.theta_star).map(|(m, t)| (m - t) * (m - t)).sum::<f64>().sqrt()
    }
}
