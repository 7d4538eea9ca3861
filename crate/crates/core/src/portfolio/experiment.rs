use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{build_cost, build_system, MarketParams, NetworkSpec};
use crate::csvio::{fmt_f64, CsvWriter};
use crate::error::{Error, Result};
use crate::optim::{batch_seeds, train_with, TrainConfig, TrainLog};
use crate::policy::{write_checkpoint, MlpPolicy, Policy};
use crate::sdecore::{integrate, Trajectory};
use crate::sensitivity::cost_on_trajectory;
use crate::wiener::{TimeGrid, WienerPath, EVAL_STREAM};

/// Evaluation and export settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Paths behind the reported means.
    pub eval_paths: usize,
    /// Paths behind the solvency crossing fraction.
    pub solvency_paths: usize,
    /// Trajectory files written per `ν`.
    pub traj_files: usize,
    pub grid_s: (f64, f64),
    pub grid_v: (f64, f64),
    pub grid_resolution: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            eval_paths: 50,
            solvency_paths: 200,
            traj_files: 5,
            grid_s: (0.0, 3.0),
            grid_v: (-2.0, 1.0),
            grid_resolution: 31,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub market: MarketParams,
    pub nus: Vec<f64>,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            market: MarketParams::default(),
            nus: vec![0.0, 0.25, 0.5, 1.0],
            network: NetworkSpec::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Statistics of a policy over a set of evaluation paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub n_paths: usize,
    pub mean_terminal_s: f64,
    pub mean_terminal_v: f64,
    /// Mean of `∫ σ S² dt`, the risk penalty at unit `ν`.
    pub mean_penalty: f64,
    /// Mean objective over paths where it is finite.
    pub mean_objective: f64,
    /// Paths whose objective is not finite (barrier breached).
    pub n_objective_invalid: usize,
    /// Fraction of paths with `V + (1 - α) S < 0` at some grid point.
    pub crossing_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct NuResult {
    pub nu: f64,
    pub policy: MlpPolicy,
    pub log: TrainLog,
    pub trained: EvalStats,
    pub untrained: EvalStats,
    /// Crossing fraction of the trained policy over `solvency_paths`.
    pub solvency_crossing: f64,
}

pub fn crosses_solvency(traj: &Trajectory, alpha: f64) -> bool {
    traj.states
        .row_iter()
        .any(|x| x[1] + (1.0 - alpha) * x[0] < 0.0)
}

/// `π_i, π_d` by left-endpoint quadrature of the trade rates.
pub fn cumulative_trades(traj: &Trajectory) -> DMatrix<f64> {
    let n = traj.grid.n_steps();
    let dt = traj.grid.dt();
    let mut pi = DMatrix::zeros(n + 1, 2);
    for k in 0..n {
        for j in 0..2 {
            pi[(k + 1, j)] = pi[(k, j)] + traj.controls[(k, j)] * dt;
        }
    }
    pi
}

/// Evaluation path seeds: a stream disjoint from every training batch.
fn eval_paths(base_seed: u64, grid: TimeGrid, n: usize) -> Result<Vec<WienerPath>> {
    batch_seeds(base_seed, EVAL_STREAM, n)
        .into_par_iter()
        .map(|s| WienerPath::generate(s, grid, 1))
        .collect()
}

/// Simulates `policy` on the first `n_paths` evaluation paths.
pub fn evaluate<P: Policy + ?Sized>(
    params: &MarketParams,
    policy: &P,
    train: &TrainConfig,
    n_paths: usize,
) -> Result<EvalStats> {
    let system = build_system(params)?;
    let cost = build_cost(params)?;
    let paths = eval_paths(train.base_seed, train.grid, n_paths)?;
    let x0 = params.initial_state();
    let per_path: Vec<(f64, f64, f64, Option<f64>, bool)> = paths
        .par_iter()
        .map(|p| {
            let traj = integrate(&system, policy, &x0, p, train.gradient.scheme)?;
            let xt = traj.final_state();
            let dt = traj.grid.dt();
            let penalty = (0..traj.grid.n_steps())
                .map(|k| params.sigma.at(traj.grid.time(k)) * traj.states[(k, 0)].powi(2) * dt)
                .sum::<f64>();
            let objective = cost_on_trajectory(&cost, &traj).ok();
            Ok((
                xt[0],
                xt[1],
                penalty,
                objective,
                crosses_solvency(&traj, params.alpha),
            ))
        })
        .collect::<Result<_>>()?;
    let n = per_path.len().max(1) as f64;
    let finite: Vec<f64> = per_path.iter().filter_map(|p| p.3).collect();
    Ok(EvalStats {
        n_paths: per_path.len(),
        mean_terminal_s: per_path.iter().map(|p| p.0).sum::<f64>() / n,
        mean_terminal_v: per_path.iter().map(|p| p.1).sum::<f64>() / n,
        mean_penalty: per_path.iter().map(|p| p.2).sum::<f64>() / n,
        mean_objective: finite.iter().sum::<f64>() / finite.len().max(1) as f64,
        n_objective_invalid: per_path.len() - finite.len(),
        crossing_fraction: per_path.iter().filter(|p| p.4).count() as f64 / n,
    })
}

/// Trajectories of `policy` on the first `n_paths` evaluation paths.
pub fn simulate_paths<P: Policy + ?Sized>(
    params: &MarketParams,
    policy: &P,
    train: &TrainConfig,
    n_paths: usize,
) -> Result<Vec<Trajectory>> {
    let system = build_system(params)?;
    let x0 = params.initial_state();
    eval_paths(train.base_seed, train.grid, n_paths)?
        .par_iter()
        .map(|p| integrate(&system, policy, &x0, p, train.gradient.scheme))
        .collect()
}

/// Policy values on an `S × V` lattice, rows `(S, V, u_i, u_d)` with `S`
/// varying slowest.
pub fn policy_grid<P: Policy + ?Sized>(
    policy: &P,
    s_range: (f64, f64),
    v_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<[f64; 4]>> {
    if resolution < 2 {
        return Err(Error::Config(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    let finite = [s_range.0, s_range.1, v_range.0, v_range.1]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::Config("policy grid ranges must be finite".into()));
    }
    let at = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut rows = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let (s, v) = (at(s_range, i), at(v_range, j));
            let u = policy.control(0.0, &DVector::from_column_slice(&[s, v]));
            rows.push([s, v, u[0], u[1]]);
        }
    }
    Ok(rows)
}

pub fn write_policy_grid_csv(path: &Path, rows: &[[f64; 4]]) -> Result<()> {
    let mut out = CsvWriter::create(path, &["S", "V", "u_i", "u_d"])?;
    for r in rows {
        out.row(&r.map(fmt_f64))?;
    }
    out.finish()
}

/// Columns: t, S, V, u_i, u_d.
pub fn write_portfolio_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    traj.write_csv(path, Some(&["t", "S", "V", "u_i", "u_d"]))
}

/// Trains one policy per `ν` and writes every artifact into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<NuResult>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if config.nus.is_empty() {
        return Err(Error::Config("no ν values to run".into()));
    }
    let grid = config.train.grid;
    if (grid.t_end() - grid.t_start() - config.market.horizon).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "training grid spans {} but the horizon is {}",
            grid.t_end() - grid.t_start(),
            config.market.horizon
        )));
    }
    let mut results = Vec::with_capacity(config.nus.len());
    for &nu in &config.nus {
        results.push(run_one(config, nu, out_dir)?);
    }
    write_summary(&out_dir.join("summary.csv"), config, &results)?;
    Ok(results)
}

fn run_one(config: &ExperimentConfig, nu: f64, out_dir: &Path) -> Result<NuResult> {
    let params = config.market.with_nu(nu);
    let system = build_system(&params)?;
    let cost = build_cost(&params)?;
    let x0 = params.initial_state();
    let initial = config.network.build()?;
    let tag = format!("nu{nu}");

    let (policy, log) = train_with(
        &system,
        initial.clone(),
        &cost,
        &x0,
        &config.train,
        |k, p: &MlpPolicy| {
            write_checkpoint(&out_dir.join(format!("checkpoint_{tag}_iter{k}.txt")), p)
        },
    )?;
    log.write_csv(&out_dir.join(format!("trainlog_{tag}.csv")))?;
    write_checkpoint(&out_dir.join(format!("checkpoint_{tag}.txt")), &policy)?;

    let eval = &config.eval;
    for (k, traj) in simulate_paths(&params, &policy, &config.train, eval.traj_files)?
        .iter()
        .enumerate()
    {
        write_portfolio_trajectory(&out_dir.join(format!("traj_{tag}_seed{k}.csv")), traj)?;
    }
    let grid = policy_grid(&policy, eval.grid_s, eval.grid_v, eval.grid_resolution)?;
    write_policy_grid_csv(&out_dir.join(format!("policygrid_{tag}.csv")), &grid)?;

    let trained = evaluate(&params, &policy, &config.train, eval.eval_paths)?;
    let untrained = evaluate(&params, &initial, &config.train, eval.eval_paths)?;
    let solvency_crossing =
        evaluate(&params, &policy, &config.train, eval.solvency_paths)?.crossing_fraction;
    Ok(NuResult {
        nu,
        policy,
        log,
        trained,
        untrained,
        solvency_crossing,
    })
}

fn write_summary(path: &Path, config: &ExperimentConfig, results: &[NuResult]) -> Result<()> {
    let mut out = CsvWriter::create(
        path,
        &[
            "nu",
            "horizon",
            "n_steps",
            "mean_objective",
            "mean_terminal_s",
            "mean_terminal_s_untrained",
            "mean_penalty",
            "crossing_fraction",
        ],
    )?;
    for r in results {
        out.row(&[
            fmt_f64(r.nu),
            fmt_f64(config.market.horizon),
            config.train.grid.n_steps().to_string(),
            fmt_f64(r.trained.mean_objective),
            fmt_f64(r.trained.mean_terminal_s),
            fmt_f64(r.untrained.mean_terminal_s),
            fmt_f64(r.trained.mean_penalty),
            fmt_f64(r.solvency_crossing),
        ])?;
    }
    out.finish()
}
