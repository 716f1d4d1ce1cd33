//! The full trust-region step: fit the gradient surrogate, update the
//! variance, solve for `η`, move the mean, then decay.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::optim::{Optimizer, StepDiagnostics};
use crate::surrogate::SurrogateState;
use crate::trust_region::{
    primal_variance, Bisection, ConstantEta, DualSolver, DualState, ParameterDistribution,
    SolverOptions, TrustRegionParams,
};

/// Lower bound on the warm-start multiplier carried to the next step.
pub const ETA_WARM_FLOOR: f64 = 1e-6;

/// How the step direction and multiplier are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Mode {
    /// Kalman surrogate and bisection for `η`.
    #[default]
    Standard,
    /// Kalman surrogate with a constant multiplier.
    FixedEta { eta: f64 },
    /// Adam moment estimates as the surrogate: `a = √v̂ + adam_eps`,
    /// `b = m̂ − a·μ`, so the surrogate gradient at `μ` is `m̂`.
    AdamMomentSurrogate { beta1: f64, beta2: f64, adam_eps: f64 },
}

impl Mode {
    /// Short label used in metrics output.
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::FixedEta { .. } => "fixed-eta",
            Mode::AdamMomentSurrogate { .. } => "adam-surrogate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDecayMode {
    /// `μ ← μ·(1 − wd)` after the trust-region update.
    #[default]
    Decoupled,
    /// `g ← g + wd·μ` before the surrogate sees the gradient.
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArturoConfig {
    pub epsilon: f64,
    pub rho: f64,
    pub nu: f64,
    pub lambda_prec: f64,
    /// Drift variance of the surrogate random walk.
    pub q: f64,
    /// Gradient noise variance of the surrogate measurement model.
    pub r: f64,
    pub sigma2_init: f64,
    pub p0: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecayMode,
    pub epsilon_decay_factor: f64,
    /// Epoch counts after which `ε` is multiplied by `epsilon_decay_factor`.
    pub schedule_milestones: Vec<usize>,
    pub mode: Mode,
    pub solver: SolverOptions,
}

impl Default for ArturoConfig {
    /// Fixed defaults for `ν`, `λ`, `σ²₀` and `P₀`; the tuned Fashion-MNIST
    /// CNN values for `ε`, `ρ`, `r`, `q`; no weight decay.
    fn default() -> Self {
        Self {
            epsilon: 0.085675,
            rho: 0.058657,
            nu: 1.3,
            lambda_prec: 0.0015,
            q: 0.017393,
            r: 2.816791,
            sigma2_init: 0.01,
            p0: 0.00005,
            weight_decay: 0.0,
            weight_decay_mode: WeightDecayMode::Decoupled,
            epsilon_decay_factor: 0.006,
            schedule_milestones: Vec::new(),
            mode: Mode::Standard,
            solver: SolverOptions::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")))
    }
}

pub(crate) fn check_milestones(m: &[usize]) -> Result<()> {
    if m.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("milestones must be strictly increasing, got {m:?}")))
    }
}

impl ArturoConfig {
    pub fn validate(&self) -> Result<()> {
        positive("epsilon", self.epsilon)?;
        positive("rho", self.rho)?;
        positive("nu", self.nu)?;
        positive("lambda_prec", self.lambda_prec)?;
        nonnegative("q", self.q)?;
        positive("r", self.r)?;
        positive("sigma2_init", self.sigma2_init)?;
        positive("p0", self.p0)?;
        nonnegative("weight_decay", self.weight_decay)?;
        positive("epsilon_decay_factor", self.epsilon_decay_factor)?;
        check_milestones(&self.schedule_milestones)?;
        match self.mode {
            Mode::Standard => {}
            Mode::FixedEta { eta } => nonnegative("fixed eta", eta)?,
            Mode::AdamMomentSurrogate { beta1, beta2, adam_eps } => {
                for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
                    if !(0.0..1.0).contains(&beta) {
                        return Err(Error::InvalidArgument(format!("{name} must be in [0, 1), got {beta}")));
                    }
                }
                positive("adam_eps", adam_eps)?;
            }
        }
        Ok(())
    }

    /// Trust-region weights with the given (possibly decayed) bound.
    pub fn trust_region(&self, epsilon: f64) -> TrustRegionParams {
        TrustRegionParams { epsilon, rho: self.rho, nu: self.nu, lambda_prec: self.lambda_prec }
    }
}

/// Bias-corrected first and second gradient moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamMoments {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Updates the moments and fills `a`, `b` with the moment surrogate.
    fn surrogate(
        &mut self,
        grad: &[f64],
        mu: &[f64],
        beta1: f64,
        beta2: f64,
        adam_eps: f64,
        a: &mut [f64],
        b: &mut [f64],
    ) {
        self.t += 1;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for j in 0..grad.len() {
            let g = grad[j];
            self.m[j] = beta1 * self.m[j] + (1.0 - beta1) * g;
            self.v[j] = beta2 * self.v[j] + (1.0 - beta2) * g * g;
            let m_hat = self.m[j] / c1;
            let v_hat = self.v[j] / c2;
            a[j] = v_hat.sqrt() + adam_eps;
            b[j] = m_hat - a[j] * mu[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArturoState {
    pub dist: ParameterDistribution,
    pub filter: SurrogateState,
    pub dual: DualState,
    /// Current trust-region bound after any scheduled decay.
    pub epsilon: f64,
    pub step_count: u64,
    pub epoch: usize,
    pub adam: Option<AdamMoments>,
}

impl ArturoState {
    pub fn new(n: usize, cfg: &ArturoConfig, mu0: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        check_len(n, mu0.len())?;
        let dist = ParameterDistribution::isotropic(mu0, cfg.sigma2_init)?;
        let filter = SurrogateState::new(n, cfg.p0)?;
        let adam = matches!(cfg.mode, Mode::AdamMomentSurrogate { .. }).then(|| AdamMoments::new(n));
        Ok(Self {
            dist,
            filter,
            dual: DualState::default(),
            epsilon: cfg.epsilon,
            step_count: 0,
            epoch: 0,
            adam,
        })
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    /// One optimizer step with the bisection solver configured in `cfg`.
    pub fn step(&mut self, grad: &[f64], cfg: &ArturoConfig) -> Result<StepDiagnostics> {
        let solver = Bisection { options: cfg.solver };
        self.step_with_solver(grad, cfg, &solver)
    }

    /// Like [`step`](Self::step) but with an explicit multiplier strategy for
    /// the standard and moment-surrogate modes. Fixed-`η` mode ignores it.
    pub fn step_with_solver(
        &mut self,
        grad: &[f64],
        cfg: &ArturoConfig,
        solver: &dyn DualSolver,
    ) -> Result<StepDiagnostics> {
        let n = self.dim();
        check_len(n, grad.len())?;
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { step: self.step_count, index });
        }

        let mut g = grad.to_vec();
        if cfg.weight_decay_mode == WeightDecayMode::Coupled && cfg.weight_decay > 0.0 {
            for (gj, mj) in g.iter_mut().zip(&self.dist.mu) {
                *gj += cfg.weight_decay * mj;
            }
        }

        let (mut a, b) = match (cfg.mode, self.adam.as_mut()) {
            (Mode::AdamMomentSurrogate { beta1, beta2, adam_eps }, Some(moments)) => {
                let mut a = vec![0.0; n];
                let mut b = vec![0.0; n];
                moments.surrogate(&g, &self.dist.mu, beta1, beta2, adam_eps, &mut a, &mut b);
                (a, b)
            }
            (Mode::AdamMomentSurrogate { .. }, None) => {
                return Err(Error::InvalidArgument(
                    "state was not initialized for the moment-surrogate mode".into(),
                ))
            }
            _ => {
                self.filter.update(&self.dist.mu, &g, cfg.q, cfg.r)?;
                let (a, b) = self.filter.params();
                (a.to_vec(), b.to_vec())
            }
        };

        let mut clamped = 0usize;
        for aj in a.iter_mut() {
            if *aj < 0.0 {
                *aj = 0.0;
                clamped += 1;
            }
        }

        let tr = cfg.trust_region(self.epsilon);
        let sigma2 = primal_variance(&a, &self.dist, &tr);
        let sol = match cfg.mode {
            Mode::FixedEta { eta } => ConstantEta(eta).solve(&a, &b, &self.dist, &tr, &self.dual)?,
            _ => solver.solve(&a, &b, &self.dist, &tr, &self.dual)?,
        };

        let mut mu = sol.mu;
        if cfg.weight_decay_mode == WeightDecayMode::Decoupled && cfg.weight_decay > 0.0 {
            let keep = 1.0 - cfg.weight_decay;
            mu.iter_mut().for_each(|m| *m *= keep);
        }

        self.dist = ParameterDistribution { mu, sigma2 };
        self.dual.eta_warm = sol.eta.max(ETA_WARM_FLOOR);
        self.step_count += 1;

        Ok(StepDiagnostics {
            eta: sol.eta,
            c_mu: sol.c_mu,
            epsilon: self.epsilon,
            bisection_iters: sol.iterations,
            clamped,
            interior: sol.interior,
        })
    }

    /// Advances the epoch counter and applies the `ε` schedule.
    pub fn on_epoch_end(&mut self, cfg: &ArturoConfig) {
        self.epoch += 1;
        if cfg.schedule_milestones.contains(&self.epoch) {
            self.epsilon *= cfg.epsilon_decay_factor;
        }
    }
}

/// Configuration and state bundled behind the [`Optimizer`] interface.
#[derive(Debug, Clone)]
pub struct Arturo {
    pub config: ArturoConfig,
    pub state: ArturoState,
}

impl Arturo {
    pub fn new(config: ArturoConfig, mu0: Vec<f64>) -> Result<Self> {
        let state = ArturoState::new(mu0.len(), &config, mu0)?;
        Ok(Self { config, state })
    }
}

impl Optimizer for Arturo {
    /// `params` is taken as the current mean and overwritten with the new one.
    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<Option<StepDiagnostics>> {
        check_len(self.state.dim(), params.len())?;
        self.state.dist.mu.copy_from_slice(params);
        let diag = self.state.step(grad, &self.config)?;
        params.copy_from_slice(&self.state.dist.mu);
        Ok(Some(diag))
    }

    fn on_epoch_end(&mut self) {
        self.state.on_epoch_end(&self.config);
    }

    fn name(&self) -> &'static str {
        "arturo"
    }
}
