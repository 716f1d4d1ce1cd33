//! Stochastic optimization with information-theoretic trust regions.
//!
//! The parameters are modelled as a diagonal Gaussian `N(μ, diag σ²)`. Every
//! step fits a per-dimension linear model of the gradient with a Kalman filter
//! ([`surrogate`]), turns it into a quadratic surrogate of the loss, and moves
//! the Gaussian to the surrogate's optimum subject to a bound on the mean part
//! of the KL divergence ([`trust_region`]). [`optimizer`] ties the pieces together;
//! [`baselines`] holds SGD with momentum, Adam and AdamW for comparison.

pub mod optimizer;
pub mod baselines;
pub mod error;
pub mod optim;
pub mod surrogate;
pub mod trust_region;

pub use optimizer::{Arturo, ArturoConfig, ArturoState, Mode, WeightDecayMode};
pub use baselines::{Baseline, BaselineConfig, BaselineKind, BaselineState};
pub use error::{Error, Result};
pub use optim::{Optimizer, StepDiagnostics};
pub use surrogate::SurrogateState;
pub use trust_region::{
    dual_derivative, kl_mean_term, primal_mean, primal_variance, solve_eta, Bisection, ConstantEta,
    DualSolver, DualState, EtaSolution, ParameterDistribution, SolverOptions, TrustRegionParams,
};
