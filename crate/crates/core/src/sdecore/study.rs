//! Empirical scheme validation: strong convergence order on GBM, inverse
//! flow reconstruction error, and Itô/Stratonovich agreement.
//!
//! Every study draws one path per seed at the finest resolution and coarsens
//! it, so all resolutions see the same Brownian realization.

use nalgebra::DVector;
use rayon::prelude::*;

use super::systems::Gbm;
use super::{convert_calculus, integrate, integrate_backward, ControlledSystem, Scheme};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::wiener::{TimeGrid, WienerPath};

/// `(n_steps, median error)` per resolution, coarsest first.
pub type ErrorCurve = Vec<(usize, f64)>;

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty sample");
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `ln(error)` against `ln(dt)`.
pub fn fit_order(horizon: f64, curve: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .map(|&(n, e)| ((horizon / n as f64).ln(), e.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn strictly_decreasing(curve: &[(usize, f64)]) -> bool {
    curve.windows(2).all(|w| w[1].1 < w[0].1)
}

fn check_counts(step_counts: &[usize]) -> Result<usize> {
    let finest = *step_counts
        .iter()
        .max()
        .ok_or_else(|| Error::Config("no step counts given".into()))?;
    if step_counts.iter().any(|&n| n == 0 || finest % n != 0) {
        return Err(Error::Config(
            "step counts must divide the finest resolution".into(),
        ));
    }
    Ok(finest)
}

/// Per-seed errors at each resolution, reduced to medians in seed order.
fn median_curve<F>(
    horizon: f64,
    step_counts: &[usize],
    noise_dims: usize,
    seeds: std::ops::Range<u64>,
    error_for: F,
) -> Result<ErrorCurve>
where
    F: Fn(&WienerPath, &WienerPath) -> Result<f64> + Sync,
{
    let finest = check_counts(step_counts)?;
    let grid = TimeGrid::new(0.0, horizon, finest)?;
    let per_seed: Vec<Vec<f64>> = seeds
        .into_par_iter()
        .map(|seed| {
            let fine = WienerPath::generate(seed, grid, noise_dims)?;
            step_counts
                .iter()
                .map(|&n| error_for(&fine, &fine.coarsen(finest / n)?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(step_counts
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let mut col: Vec<f64> = per_seed.iter().map(|r| r[j]).collect();
            (n, median(&mut col))
        })
        .collect())
}

/// Median absolute endpoint error against the closed-form GBM solution.
pub fn strong_convergence(
    gbm: Gbm,
    x0: f64,
    horizon: f64,
    scheme: Scheme,
    step_counts: &[usize],
    n_paths: u64,
    base_seed: u64,
) -> Result<ErrorCurve> {
    let none = crate::policy::ConstantPolicy::none(1);
    let x0v = DVector::from_element(1, x0);
    median_curve(
        horizon,
        step_counts,
        1,
        base_seed..base_seed + n_paths,
        |fine, path| {
            let exact = gbm.exact(x0, horizon, fine.terminal_value()[0]);
            let tr = integrate(&gbm, &none, &x0v, path, scheme)?;
            Ok((tr.final_state()[0] - exact).abs())
        },
    )
}

/// Median `‖Ψ̂(Φ̂(x0)) - x0‖`: forward with `forward`, back along the
/// reversed path with Stratonovich `backward`.
#[allow(clippy::too_many_arguments)]
pub fn reversibility<S, P>(
    system: &S,
    policy: &P,
    x0: &DVector<f64>,
    horizon: f64,
    forward: Scheme,
    backward: Scheme,
    step_counts: &[usize],
    n_seeds: u64,
    base_seed: u64,
) -> Result<ErrorCurve>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    median_curve(
        horizon,
        step_counts,
        system.noise_dim(),
        base_seed..base_seed + n_seeds,
        |_, path| {
            let fwd = integrate(system, policy, x0, path, forward)?;
            let back = integrate_backward(
                system,
                policy,
                &fwd.final_state(),
                &path.reverse(),
                backward,
            )?;
            Ok((back.initial_state() - x0).norm())
        },
    )
}

/// Median endpoint gap between the Itô system under Itô-Milstein and its
/// Stratonovich conversion under `strat_scheme`, on shared paths.
#[allow(clippy::too_many_arguments)]
pub fn calculus_gap<S, P>(
    ito_system: &S,
    policy: &P,
    x0: &DVector<f64>,
    horizon: f64,
    strat_scheme: Scheme,
    step_counts: &[usize],
    n_seeds: u64,
    base_seed: u64,
) -> Result<ErrorCurve>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    let strat = convert_calculus(ito_system);
    median_curve(
        horizon,
        step_counts,
        ito_system.noise_dim(),
        base_seed..base_seed + n_seeds,
        |_, path| {
            let a = integrate(ito_system, policy, x0, path, Scheme::Milstein)?;
            let b = integrate(&strat, policy, x0, path, strat_scheme)?;
            Ok((a.final_state() - b.final_state()).norm())
        },
    )
}
