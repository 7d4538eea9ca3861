use nalgebra::DVector;

use super::CostFunctional;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::sdecore::{integrate, ControlledSystem, Scheme, Trajectory};
use crate::wiener::{TimeGrid, WienerPath};

/// Per-grid-point weights of the running cost (length `n_steps + 1`).
pub fn running_weights<C: CostFunctional + ?Sized>(cost: &C, grid: &TimeGrid) -> Result<Vec<f64>> {
    let mut w = vec![0.0; grid.n_points()];
    match cost.pointwise_times() {
        None => {
            let dt = grid.dt();
            w[..grid.n_steps()].iter_mut().for_each(|v| *v = dt);
        }
        Some(times) => {
            for &t in times {
                let k = grid.index_of(t).ok_or_else(|| {
                    Error::Config(format!("point-wise cost time {t} is not on the grid"))
                })?;
                w[k] += 1.0;
            }
        }
    }
    Ok(w)
}

/// Cost of a stored trajectory.
pub fn cost_on_trajectory<C: CostFunctional + ?Sized>(cost: &C, traj: &Trajectory) -> Result<f64> {
    let w = running_weights(cost, &traj.grid)?;
    let mut total = 0.0;
    for (k, &wk) in w.iter().enumerate() {
        if wk != 0.0 {
            let g = cost.running(traj.grid.time(k), &traj.state(k), &traj.control(k));
            if !g.is_finite() {
                return Err(Error::Divergence {
                    step: k,
                    context: "running cost",
                });
            }
            total += wk * g;
        }
    }
    let n = traj.grid.n_steps();
    let terminal = cost.terminal(&traj.state(n), &traj.control(n));
    if !terminal.is_finite() {
        return Err(Error::Divergence {
            step: n,
            context: "terminal cost",
        });
    }
    Ok(total + terminal)
}

/// Simulates and evaluates `J_θ` on one path.
pub fn eval_cost<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &DVector<f64>,
    path: &WienerPath,
    scheme: Scheme,
) -> Result<f64>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
    C: CostFunctional + ?Sized,
{
    cost_on_trajectory(cost, &integrate(system, policy, x0, path, scheme)?)
}

/// `γ = q‖x - r‖² + ρ‖u‖²`, `Γ = p‖x_T - r‖² + ρ_T‖u_T‖²` (minimized).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub target: DVector<f64>,
    pub state_weight: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    pub terminal_control_weight: f64,
    pub pointwise: Option<Vec<f64>>,
}

impl QuadraticCost {
    /// Cost of the registered controlled-GBM gradient-check problem.
    pub fn test_problem() -> Self {
        Self {
            target: DVector::from_element(1, 1.2),
            state_weight: 1.0,
            control_weight: 0.1,
            terminal_weight: 0.5,
            terminal_control_weight: 0.05,
            pointwise: None,
        }
    }
}

impl CostFunctional for QuadraticCost {
    fn running(&self, _t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.state_weight * (x - &self.target).norm_squared()
            + self.control_weight * u.norm_squared()
    }
    fn terminal(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.terminal_weight * (x - &self.target).norm_squared()
            + self.terminal_control_weight * u.norm_squared()
    }
    fn running_dx(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        (x - &self.target) * (2.0 * self.state_weight)
    }
    fn running_du(&self, _t: f64, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u * (2.0 * self.control_weight)
    }
    fn terminal_dx(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        (x - &self.target) * (2.0 * self.terminal_weight)
    }
    fn terminal_du(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u * (2.0 * self.terminal_control_weight)
    }
    fn pointwise_times(&self) -> Option<&[f64]> {
        self.pointwise.as_deref()
    }
}
