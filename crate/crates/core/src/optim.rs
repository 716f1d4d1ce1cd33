use serde::{Deserialize, Serialize};

use crate::error::Result;

/// What one trust-region step did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Multiplier used for the mean update.
    pub eta: f64,
    /// Mean part of the KL between the old and new distribution, before weight decay.
    pub c_mu: f64,
    /// Trust-region bound in effect for the step.
    pub epsilon: f64,
    pub bisection_iters: usize,
    /// Dimensions whose fitted curvature was negative and floored at zero.
    pub clamped: usize,
    pub interior: bool,
}

/// Common driver interface for the trust-region optimizer and the baselines.
pub trait Optimizer {
    /// Updates `params` in place from `grad`. Trust-region optimizers report
    /// their diagnostics; first-order baselines return `None`.
    fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<Option<StepDiagnostics>>;

    /// Advances the epoch counter and applies any step-size schedule.
    fn on_epoch_end(&mut self);

    fn name(&self) -> &'static str;
}
