//! First-order reference optimizers with step-decay learning rates.
//!
//! SGD and Adam take weight decay as an L2 term added to the gradient; AdamW
//! shrinks the parameters directly before the Adam update.

use serde::{Deserialize, Serialize};

use crate::optimizer::check_milestones;
use crate::error::{check_finite, check_len, Error, Result};
use crate::optim::{Optimizer, StepDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64 },
    #[serde(rename = "adamw")]
    AdamW { beta1: f64, beta2: f64 },
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::SgdMomentum { .. } => "sgd",
            BaselineKind::Adam { .. } => "adam",
            BaselineKind::AdamW { .. } => "adamw",
        }
    }
}

fn default_adam_eps() -> f64 {
    1e-8
}

fn default_lr_decay() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    #[serde(flatten)]
    pub kind: BaselineKind,
    pub learning_rate: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub schedule_milestones: Vec<usize>,
    #[serde(default = "default_lr_decay")]
    pub lr_decay_factor: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            adam_eps: default_adam_eps(),
            weight_decay: 0.0,
            schedule_milestones: Vec::new(),
            lr_decay_factor: default_lr_decay(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.lr_decay_factor > 0.0) {
            return bad(format!("lr decay factor must be positive, got {}", self.lr_decay_factor));
        }
        let coeffs: &[(&str, f64)] = match self.kind {
            BaselineKind::SgdMomentum { momentum } => &[("momentum", momentum)],
            BaselineKind::Adam { beta1, beta2 } | BaselineKind::AdamW { beta1, beta2 } => {
                &[("beta1", beta1), ("beta2", beta2)]
            }
        };
        for &(name, v) in coeffs {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        check_milestones(&self.schedule_milestones)
    }
}

/// Momentum buffer (SGD) or first/second moments (Adam, AdamW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub epoch: usize,
}

impl BaselineState {
    pub fn new(n: usize, cfg: &BaselineConfig) -> Self {
        let v = match cfg.kind {
            BaselineKind::SgdMomentum { .. } => Vec::new(),
            _ => vec![0.0; n],
        };
        Self { m: vec![0.0; n], v, t: 0, lr: cfg.learning_rate, epoch: 0 }
    }

    fn check(&self, params: &[f64], grad: &[f64]) -> Result<()> {
        check_len(self.m.len(), params.len())?;
        check_len(self.m.len(), grad.len())?;
        check_finite("params", params)?;
        check_finite("gradient", grad)
    }

    /// Heavy-ball SGD: `buf ← momentum·buf + (g + wd·θ)`, `θ ← θ − lr·buf`.
    pub fn sgd_step(&mut self, params: &mut [f64], grad: &[f64], momentum: f64, weight_decay: f64) -> Result<()> {
        self.check(params, grad)?;
        self.t += 1;
        for ((p, g), buf) in params.iter_mut().zip(grad).zip(self.m.iter_mut()) {
            let g = g + weight_decay * *p;
            *buf = momentum * *buf + g;
            *p -= self.lr * *buf;
        }
        Ok(())
    }

    /// Bias-corrected Adam; `wd·θ` is added to the gradient.
    pub fn adam_step(&mut self, params: &mut [f64], grad: &[f64], cfg: &BaselineConfig) -> Result<()> {
        let BaselineKind::Adam { beta1, beta2 } = cfg.kind else {
            return Err(Error::InvalidArgument("adam_step needs an Adam config".into()));
        };
        self.check(params, grad)?;
        self.adam_update(params, grad, beta1, beta2, cfg.adam_eps, cfg.weight_decay);
        Ok(())
    }

    /// AdamW: `θ ← θ·(1 − lr·wd)` followed by the plain Adam update.
    pub fn adamw_step(&mut self, params: &mut [f64], grad: &[f64], cfg: &BaselineConfig) -> Result<()> {
        let BaselineKind::AdamW { beta1, beta2 } = cfg.kind else {
            return Err(Error::InvalidArgument("adamw_step needs an AdamW config".into()));
        };
        self.check(params, grad)?;
        let keep = 1.0 - self.lr * cfg.weight_decay;
        params.iter_mut().for_each(|p| *p *= keep);
        self.adam_update(params, grad, beta1, beta2, cfg.adam_eps, 0.0);
        Ok(())
    }

    fn adam_update(&mut self, params: &mut [f64], grad: &[f64], beta1: f64, beta2: f64, eps: f64, l2: f64) {
        self.t += 1;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for j in 0..params.len() {
            let g = grad[j] + l2 * params[j];
            self.m[j] = beta1 * self.m[j] + (1.0 - beta1) * g;
            self.v[j] = beta2 * self.v[j] + (1.0 - beta2) * g * g;
            let m_hat = self.m[j] / c1;
            let v_hat = self.v[j] / c2;
            params[j] -= self.lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &BaselineConfig) -> Result<()> {
        match cfg.kind {
            BaselineKind::SgdMomentum { momentum } => self.sgd_step(params, grad, momentum, cfg.weight_decay),
            BaselineKind::Adam { .. } => self.adam_step(params, grad, cfg),
            BaselineKind::AdamW { .. } => self.adamw_step(params, grad, cfg),
        }
    }

    /// Multiplies the learning rate by `lr_decay_factor` at each milestone epoch.
    pub fn on_epoch_end(&mut self, cfg: &BaselineConfig) {
        self.epoch += 1;
        if cfg.schedule_milestones.contains(&self.epoch) {
            self.lr *= cfg.lr_decay_factor;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub config: BaselineConfig,
    pub state: BaselineState,
}

impl Baseline {
    pub fn new(config: BaselineConfig, n: usize) -> Result<Self> {
        config.validate()?;
        let state = BaselineState::new(n, &config);
        Ok(Self { config, state })
    }
}

impl Optimizer for Baseline {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<Option<StepDiagnostics>> {
        self.state.step(params, grad, &self.config)?;
        Ok(None)
    }

    fn on_epoch_end(&mut self) {
        self.state.on_epoch_end(&self.config);
    }

    fn name(&self) -> &'static str {
        self.config.kind.name()
    }
}
