use nalgebra::DVector;
use rayon::prelude::*;

use super::{eval_cost, CostFunctional, Estimator, GradientReport, GradientSettings};
use crate::error::{Error, Result};
use crate::policy::DifferentiablePolicy;
use crate::sdecore::ControlledSystem;
use crate::wiener::WienerPath;

/// Central finite differences over every parameter, all on `path`.
pub fn finite_difference_gradient<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &DVector<f64>,
    path: &WienerPath,
    settings: &GradientSettings,
) -> Result<GradientReport>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + Clone,
    C: CostFunctional + ?Sized,
{
    let coords: Vec<usize> = (0..policy.n_params()).collect();
    let values = finite_difference_coords(system, policy, cost, x0, path, settings, &coords)?;
    Ok(GradientReport {
        grad: DVector::from_vec(values),
        estimator: Estimator::FiniteDifference,
        path_seed: path.seed(),
        cost_value: eval_cost(system, policy, cost, x0, path, settings.scheme)?,
    })
}

/// Central differences for the listed coordinates only.
pub fn finite_difference_coords<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &DVector<f64>,
    path: &WienerPath,
    settings: &GradientSettings,
    coords: &[usize],
) -> Result<Vec<f64>>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + Clone,
    C: CostFunctional + ?Sized,
{
    if settings.h_rel.is_nan() || settings.h_rel <= 0.0 {
        return Err(Error::Config(format!(
            "h_rel must be positive, got {}",
            settings.h_rel
        )));
    }
    let theta = policy.params();
    if let Some(&bad) = coords.iter().find(|&&j| j >= theta.len()) {
        return Err(Error::Config(format!(
            "coordinate {bad} out of range for {} parameters",
            theta.len()
        )));
    }
    coords
        .par_iter()
        .map(|&j| {
            let h = settings.h_rel * theta[j].abs().max(1.0);
            let mut probe = policy.clone();
            let mut shifted = theta.clone();
            shifted[j] = theta[j] + h;
            probe.set_params(&shifted)?;
            let plus = eval_cost(system, &probe, cost, x0, path, settings.scheme)?;
            shifted[j] = theta[j] - h;
            probe.set_params(&shifted)?;
            let minus = eval_cost(system, &probe, cost, x0, path, settings.scheme)?;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}
