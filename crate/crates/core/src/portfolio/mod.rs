//! Two-asset portfolio with proportional transaction costs.
//!
//! State `x = (S, V)`: stock and bank holdings. Control `u = (u_i, u_d)`:
//! purchase and sale rates of stock. Itô dynamics with scalar noise
//!
//! ```text
//! dS = (μ S + u_i - u_d) dt + σ S dB
//! dV = (r V - u_i + (1 - α) u_d) dt
//! ```
//!
//! and the objective, maximized in expectation,
//! `∫ (r V + μ S - ν σ S²) dt + r V_T + μ S_T`. With `ν = 0` the running
//! reward also carries a log barrier `β_b ln(V + (1 - α) S)` on the
//! solvency line, continued quadratically below a small threshold.

mod cost;
mod experiment;
mod system;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::policy::{Activation, MlpPolicy};

pub use cost::PortfolioCost;
pub use experiment::{
    crosses_solvency, cumulative_trades, evaluate, policy_grid, run_experiment, simulate_paths,
    write_policy_grid_csv, write_portfolio_trajectory, EvalConfig, EvalStats, ExperimentConfig,
    NuResult,
};
pub use system::PortfolioSystem;

/// Market coefficient: a constant or a function of time.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Varying(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn varying(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Varying(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Varying(f) => f(t),
        }
    }
}

impl From<f64> for Coefficient {
    fn from(c: f64) -> Self {
        Coefficient::Constant(c)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Varying(_) => f.write_str("Varying(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarketParams {
    /// Proportional transaction cost on sales.
    pub alpha: f64,
    pub r: Coefficient,
    pub mu: Coefficient,
    pub sigma: Coefficient,
    /// Risk-aversion weight.
    pub nu: f64,
    /// Log-barrier weight, active only when `nu == 0`.
    pub barrier_weight: f64,
    /// Below this liquidation value the barrier continues as the quadratic
    /// with matching value, slope and curvature, so crossing paths stay
    /// finite and are pushed back. Zero keeps the pure logarithm.
    pub barrier_smoothing: f64,
    pub horizon: f64,
    /// Initial `(S, V)`.
    pub x0: [f64; 2],
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            r: 0.04.into(),
            mu: 0.23.into(),
            sigma: 0.18.into(),
            nu: 0.0,
            barrier_weight: 1e-2,
            barrier_smoothing: 1e-2,
            horizon: 1.0,
            x0: [1.0, 0.0],
        }
    }
}

impl MarketParams {
    pub fn with_nu(&self, nu: f64) -> Self {
        Self { nu, ..self.clone() }
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }

    /// Barrier weight in effect for this `ν`.
    pub fn effective_barrier(&self) -> f64 {
        if self.nu == 0.0 {
            self.barrier_weight
        } else {
            0.0
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("market parameters: {what}")));
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if let Coefficient::Constant(s) = self.sigma {
            if !(s > 0.0) {
                return bad("sigma must be positive");
            }
        }
        if !(self.nu >= 0.0) {
            return bad("nu must be non-negative");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(self.barrier_weight >= 0.0) {
            return bad("barrier weight must be non-negative");
        }
        if !(self.barrier_smoothing >= 0.0) {
            return bad("barrier smoothing must be non-negative");
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("initial state must be finite");
        }
        Ok(())
    }
}

/// Policy network layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub init_seed: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            hidden_width: 32,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Softplus,
            init_seed: 1,
        }
    }
}

impl NetworkSpec {
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![2];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(2);
        dims
    }

    /// Freshly initialized `(S, V) → (u_i, u_d)` network.
    pub fn build(&self) -> Result<MlpPolicy> {
        MlpPolicy::init(
            &self.layer_dims(),
            self.hidden_activation,
            self.output_activation,
            self.init_seed,
        )
    }
}

pub fn build_system(params: &MarketParams) -> Result<PortfolioSystem> {
    params.validate()?;
    Ok(PortfolioSystem::new(params.clone()))
}

pub fn build_cost(params: &MarketParams) -> Result<PortfolioCost> {
    params.validate()?;
    Ok(PortfolioCost::new(params.clone()))
}
