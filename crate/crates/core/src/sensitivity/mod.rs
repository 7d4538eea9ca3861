//! Cost functionals and path-wise gradients `dJ/dθ`.
//!
//! The discretized cost on a grid `t_0 < … < t_K` is
//! `J = Σ_k w_k γ(t_k, x_k, u_k) + Γ(x_K, u_K)` with left-endpoint weights
//! `w_k = Δt` (`k < K`, `w_K = 0`) for integral costs, or unit weights on the
//! jump times of a point-wise cost.
//!
//! Both gradient estimators integrate their sensitivity equations with the
//! Stratonovich-Milstein linearization of the forward step, so they return
//! the exact gradient of the discretized cost. Itô systems integrated with
//! Milstein are converted to Stratonovich form first; the Itô-Milstein and
//! Stratonovich-Milstein steps coincide algebraically, so the stored forward
//! trajectory is the one the adjoint differentiates.

mod adjoint;
mod check;
mod cost;
mod fd;
mod forward;

use nalgebra::DVector;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::sdecore::{
    convert_calculus, step_jacobian, Calculus, ControlledSystem, Scheme, StepJacobian,
};

pub use adjoint::{adjoint_gradient, adjoint_gradient_pointwise, adjoint_sweep, AdjointState};
pub use check::{
    compare_gradients, grad_check, write_grad_check_csv, GradCheck, GradientAgreement,
};
pub use cost::{cost_on_trajectory, eval_cost, running_weights, QuadraticCost};
pub use fd::{finite_difference_coords, finite_difference_gradient};
pub use forward::forward_sensitivity;

/// Whether the cost is to be minimized or maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "minimize" => Ok(Direction::Minimize),
            "maximize" => Ok(Direction::Maximize),
            other => Err(Error::Config(format!("unknown direction `{other}`"))),
        }
    }
}

/// Running cost `γ(t, x, u)`, terminal cost `Γ(x_T, u_T)` and their
/// partials. With `pointwise_times` set, the running integral becomes a sum
/// over those instants.
pub trait CostFunctional: Send + Sync {
    fn running(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn terminal(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn running_dx(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn running_du(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn terminal_dx(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn terminal_du(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn pointwise_times(&self) -> Option<&[f64]> {
        None
    }

    fn direction(&self) -> Direction {
        Direction::Minimize
    }
}

impl<C: CostFunctional + ?Sized> CostFunctional for &C {
    fn running(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (**self).running(t, x, u)
    }
    fn terminal(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (**self).terminal(x, u)
    }
    fn running_dx(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).running_dx(t, x, u)
    }
    fn running_du(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).running_du(t, x, u)
    }
    fn terminal_dx(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).terminal_dx(x, u)
    }
    fn terminal_du(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).terminal_du(x, u)
    }
    fn pointwise_times(&self) -> Option<&[f64]> {
        (**self).pointwise_times()
    }
    fn direction(&self) -> Direction {
        (**self).direction()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Forward,
    Adjoint,
    FiniteDifference,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Forward => "forward",
            Estimator::Adjoint => "adjoint",
            Estimator::FiniteDifference => "finite_difference",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "forward" => Ok(Estimator::Forward),
            "adjoint" => Ok(Estimator::Adjoint),
            "finite_difference" | "fd" => Ok(Estimator::FiniteDifference),
            other => Err(Error::Config(format!(
                "unknown gradient estimator `{other}`"
            ))),
        }
    }
}

/// Gradient of one path's cost.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub grad: DVector<f64>,
    pub estimator: Estimator,
    pub path_seed: u64,
    pub cost_value: f64,
}

/// Numerical knobs and tolerances shared by the estimators and checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSettings {
    pub scheme: Scheme,
    /// Central-difference step `h = h_rel · max(1, |θ_j|)`.
    pub h_rel: f64,
    /// Upper bound on `n_x · n_θ` for forward sensitivity.
    pub max_sensitivity_entries: usize,
    /// Maximum per-coordinate relative error between estimators.
    pub rel_tol: f64,
    /// Minimum cosine similarity between estimators.
    pub min_cosine: f64,
    /// Coordinates below this magnitude are skipped by the relative check.
    pub magnitude_floor: f64,
    /// Coordinates below this fraction of the largest gradient entry are
    /// skipped too; finite differences cannot resolve them.
    pub relative_floor: f64,
}

impl GradientSettings {
    /// Comparison floor for the pair `(a, b)`.
    pub fn floor_for(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.magnitude_floor
            .max(self.relative_floor * a.amax().max(b.amax()))
    }
}

impl Default for GradientSettings {
    fn default() -> Self {
        Self {
            scheme: Scheme::Milstein,
            h_rel: 1e-5,
            max_sensitivity_entries: 1 << 26,
            rel_tol: 1e-3,
            min_cosine: 0.999,
            magnitude_floor: 1e-8,
            relative_floor: 1e-6,
        }
    }
}

/// Jacobian of the forward step used by both sensitivity estimators.
pub(crate) fn linearize<S: ControlledSystem + ?Sized>(
    system: &S,
    scheme: Scheme,
    t: f64,
    dt: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    db: &DVector<f64>,
) -> StepJacobian {
    if scheme == Scheme::Milstein && system.calculus() == Calculus::Ito {
        step_jacobian(&convert_calculus(system), scheme, t, dt, x, u, db)
    } else {
        step_jacobian(system, scheme, t, dt, x, u, db)
    }
}

pub(crate) fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// A system, cost, policy and initial state bundled for gradient checks.
#[derive(Debug, Clone)]
pub struct TestProblem<S, C> {
    pub system: S,
    pub cost: C,
    pub policy: crate::policy::MlpPolicy,
    pub x0: DVector<f64>,
}

/// Controlled GBM with a `[1, 16, 1]` tanh network (49 parameters) and a
/// quadratic tracking cost.
pub fn gbm_test_problem(
    init_seed: u64,
) -> TestProblem<crate::sdecore::systems::ControlledGbm, QuadraticCost> {
    use crate::policy::{Activation, MlpPolicy};
    TestProblem {
        system: crate::sdecore::systems::ControlledGbm::test_problem(),
        cost: QuadraticCost::test_problem(),
        policy: MlpPolicy::init(
            &[1, 16, 1],
            Activation::Tanh,
            Activation::Identity,
            init_seed,
        )
        .expect("valid layer dims"),
        x0: DVector::from_element(1, 1.0),
    }
}
