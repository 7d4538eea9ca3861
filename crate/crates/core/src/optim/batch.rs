use nalgebra::DVector;
use rayon::prelude::*;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::policy::DifferentiablePolicy;
use crate::sdecore::ControlledSystem;
use crate::sensitivity::{
    adjoint_gradient, finite_difference_gradient, forward_sensitivity, CostFunctional, Estimator,
    GradientReport, GradientSettings,
};
use crate::wiener::{derive_seed, WienerPath};

/// Mean gradient and cost over the non-divergent paths of one batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub grad: DVector<f64>,
    pub mean_cost: f64,
    pub n_diverged: usize,
    /// Per-path reports in seed order, divergent paths omitted.
    pub reports: Vec<GradientReport>,
}

/// Path seeds of batch `iteration`.
pub fn batch_seeds(base_seed: u64, iteration: u64, batch_size: usize) -> Vec<u64> {
    (0..batch_size as u64)
        .map(|i| derive_seed(base_seed, iteration, i))
        .collect()
}

/// Averages path-wise gradients over `batch_size` fresh paths.
pub fn batch_gradient<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &DVector<f64>,
    config: &TrainConfig,
    iteration: u64,
) -> Result<BatchGradient>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + Clone,
    C: CostFunctional + ?Sized,
{
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let paths = batch_seeds(config.base_seed, iteration, config.batch_size)
        .into_par_iter()
        .map(|seed| WienerPath::generate(seed, config.grid, system.noise_dim()))
        .collect::<Result<Vec<_>>>()?;
    batch_gradient_paths(
        system,
        policy,
        cost,
        x0,
        &paths,
        config.estimator,
        &config.gradient,
        iteration,
    )
}

/// Averages path-wise gradients over the given paths. Divergent paths are
/// dropped; more than half dropped is a batch failure.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradient_paths<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &DVector<f64>,
    paths: &[WienerPath],
    estimator: Estimator,
    settings: &GradientSettings,
    iteration: u64,
) -> Result<BatchGradient>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + Clone,
    C: CostFunctional + ?Sized,
{
    let results: Vec<Result<GradientReport>> = paths
        .par_iter()
        .map(|path| match estimator {
            Estimator::Adjoint => adjoint_gradient(system, policy, cost, x0, path, settings),
            Estimator::Forward => forward_sensitivity(system, policy, cost, x0, path, settings),
            Estimator::FiniteDifference => {
                finite_difference_gradient(system, policy, cost, x0, path, settings)
            }
        })
        .collect();

    let mut reports = Vec::with_capacity(paths.len());
    let mut n_diverged = 0;
    for r in results {
        match r {
            Ok(report) => reports.push(report),
            Err(e) if e.is_divergence() => n_diverged += 1,
            Err(e) => return Err(e),
        }
    }
    if reports.is_empty() || 2 * n_diverged > paths.len() {
        return Err(Error::BatchFailure {
            iteration,
            diverged: n_diverged,
            total: paths.len(),
        });
    }
    let mut grad = DVector::zeros(policy.n_params());
    let mut total_cost = 0.0;
    for r in &reports {
        grad += &r.grad;
        total_cost += r.cost_value;
    }
    let n = reports.len() as f64;
    Ok(BatchGradient {
        grad: grad / n,
        mean_cost: total_cost / n,
        n_diverged,
        reports,
    })
}
