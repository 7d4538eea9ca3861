use nalgebra::{DMatrix, DVector};

use super::{
    all_finite, cost_on_trajectory, linearize, running_weights, CostFunctional, Estimator,
    GradientReport, GradientSettings,
};
use crate::error::{Error, Result};
use crate::policy::DifferentiablePolicy;
use crate::sdecore::{integrate, ControlledSystem, Trajectory};
use crate::wiener::WienerPath;

/// Costate trajectory and accumulated gradient of one backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    /// Row `k` is `λ(t_k)`.
    pub lambda: DMatrix<f64>,
    pub grad_acc: DVector<f64>,
}

/// Backward adjoint gradient of one path's cost.
pub fn adjoint_gradient<S, P, C>(
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
    adjoint_sweep(system, policy, cost, x0, path, settings).map(|(report, _)| report)
}

/// Adjoint gradient for a point-wise cost: `λ` jumps by `∂γ/∂x` at each
/// cost time and follows the `γ`-free adjoint dynamics in between.
pub fn adjoint_gradient_pointwise<S, P, C>(
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
    match cost.pointwise_times() {
        Some(times) if !times.is_empty() => {
            adjoint_gradient(system, policy, cost, x0, path, settings)
        }
        _ => Err(Error::Config(
            "point-wise adjoint needs at least one cost time".into(),
        )),
    }
}

/// Forward pass, then backward sweep over the stored trajectory.
pub fn adjoint_sweep<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &DVector<f64>,
    path: &WienerPath,
    settings: &GradientSettings,
) -> Result<(GradientReport, AdjointState)>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + ?Sized,
    C: CostFunctional + ?Sized,
{
    let traj = integrate(system, policy, x0, path, settings.scheme)?;
    let cost_value = cost_on_trajectory(cost, &traj)?;
    let state = backward(system, policy, cost, &traj, path, settings)?;
    let report = GradientReport {
        grad: state.grad_acc.clone(),
        estimator: Estimator::Adjoint,
        path_seed: path.seed(),
        cost_value,
    };
    Ok((report, state))
}

fn backward<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    traj: &Trajectory,
    path: &WienerPath,
    settings: &GradientSettings,
) -> Result<AdjointState>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + ?Sized,
    C: CostFunctional + ?Sized,
{
    let grid = traj.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let w = running_weights(cost, &grid)?;
    let mut lambda = DMatrix::zeros(n + 1, system.state_dim());
    let mut grad = DVector::zeros(policy.n_params());

    let (x, u) = (traj.state(n), traj.control(n));
    let mut lam = cost.terminal_dx(&x, &u);
    let mut cot = cost.terminal_du(&x, &u);
    if w[n] != 0.0 {
        lam += cost.running_dx(grid.t_end(), &x, &u) * w[n];
        cot += cost.running_du(grid.t_end(), &x, &u) * w[n];
    }
    pull_back(policy, grid.t_end(), &x, &cot, &mut lam, &mut grad);
    check(&lam, &grad, n)?;
    lambda.set_row(n, &lam.transpose());

    for k in (0..n).rev() {
        let t = grid.time(k);
        let (x, u) = (traj.state(k), traj.control(k));
        let jac = linearize(system, settings.scheme, t, dt, &x, &u, &path.increment(k));
        let mut next = jac.dx.tr_mul(&lam);
        let mut cot = jac.du.tr_mul(&lam);
        if w[k] != 0.0 {
            next += cost.running_dx(t, &x, &u) * w[k];
            cot += cost.running_du(t, &x, &u) * w[k];
        }
        pull_back(policy, t, &x, &cot, &mut next, &mut grad);
        check(&next, &grad, k)?;
        lambda.set_row(k, &next.transpose());
        lam = next;
    }
    Ok(AdjointState {
        lambda,
        grad_acc: grad,
    })
}

/// Routes a control cotangent through the policy into `λ` and `dJ/dθ`.
fn pull_back<P: DifferentiablePolicy + ?Sized>(
    policy: &P,
    t: f64,
    x: &DVector<f64>,
    cot: &DVector<f64>,
    lam: &mut DVector<f64>,
    grad: &mut DVector<f64>,
) {
    if cot.iter().any(|&c| c != 0.0) {
        let (vx, vtheta) = policy.vjp(t, x, cot);
        *lam += vx;
        *grad += vtheta;
    }
}

fn check(lam: &DVector<f64>, grad: &DVector<f64>, step: usize) -> Result<()> {
    if all_finite(lam) && all_finite(grad) {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            context: "adjoint sweep",
        })
    }
}
