use nalgebra::{DMatrix, DVector};

use super::{
    all_finite, cost_on_trajectory, linearize, running_weights, CostFunctional, Estimator,
    GradientReport, GradientSettings,
};
use crate::error::{Error, Result};
use crate::policy::DifferentiablePolicy;
use crate::sdecore::{integrate, ControlledSystem};
use crate::wiener::WienerPath;

/// Propagates `S_k = dx_k/dθ` alongside the stored trajectory and
/// contracts it with the cost partials.
pub fn forward_sensitivity<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &DVector<f64>,
    path: &WienerPath,
    settings: &GradientSettings,
) -> Result<GradientReport>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + ?Sized,
    C: CostFunctional + ?Sized,
{
    let nx = system.state_dim();
    let n_theta = policy.n_params();
    let needed = nx.saturating_mul(n_theta);
    if needed > settings.max_sensitivity_entries {
        return Err(Error::Capacity {
            needed,
            budget: settings.max_sensitivity_entries,
        });
    }
    let traj = integrate(system, policy, x0, path, settings.scheme)?;
    let cost_value = cost_on_trajectory(cost, &traj)?;
    let grid = traj.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let w = running_weights(cost, &grid)?;

    let mut sens = DMatrix::zeros(nx, n_theta);
    let mut grad = DVector::zeros(n_theta);
    for (k, &wk) in w.iter().enumerate() {
        let t = grid.time(k);
        let (x, u) = (traj.state(k), traj.control(k));
        let (u_x, u_theta) = policy_jacobians(policy, t, &x, u.len(), nx, n_theta);
        // total du/dθ along the path
        let du = &u_x * &sens + u_theta;
        if wk != 0.0 {
            grad += (sens.tr_mul(&cost.running_dx(t, &x, &u))
                + du.tr_mul(&cost.running_du(t, &x, &u)))
                * wk;
        }
        if k == n {
            grad += sens.tr_mul(&cost.terminal_dx(&x, &u)) + du.tr_mul(&cost.terminal_du(&x, &u));
            break;
        }
        let jac = linearize(system, settings.scheme, t, dt, &x, &u, &path.increment(k));
        sens = &jac.dx * &sens + &jac.du * &du;
        if sens.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: k + 1,
                context: "forward sensitivity",
            });
        }
    }
    if !all_finite(&grad) {
        return Err(Error::Divergence {
            step: n,
            context: "forward sensitivity",
        });
    }
    Ok(GradientReport {
        grad,
        estimator: Estimator::Forward,
        path_seed: path.seed(),
        cost_value,
    })
}

/// `(∂u/∂x, ∂u/∂θ)` assembled row by row from unit-cotangent VJPs.
fn policy_jacobians<P: DifferentiablePolicy + ?Sized>(
    policy: &P,
    t: f64,
    x: &DVector<f64>,
    nu: usize,
    nx: usize,
    n_theta: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut u_x = DMatrix::zeros(nu, nx);
    let mut u_theta = DMatrix::zeros(nu, n_theta);
    for j in 0..nu {
        let mut e = DVector::zeros(nu);
        e[j] = 1.0;
        let (vx, vt) = policy.vjp(t, x, &e);
        u_x.set_row(j, &vx.transpose());
        u_theta.set_row(j, &vt.transpose());
    }
    (u_x, u_theta)
}
