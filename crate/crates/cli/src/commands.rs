use std::fs;
use std::path::Path;

use sdectl_core::config::{CheckSystem, Config};
use sdectl_core::csvio::{fmt_f64, CsvWriter};
use sdectl_core::policy::read_checkpoint;
use sdectl_core::portfolio::{
    build_cost, build_system, policy_grid as tabulate, run_experiment, simulate_paths,
    write_policy_grid_csv, write_portfolio_trajectory,
};
use sdectl_core::sdecore::study::{
    fit_order, reversibility, strictly_decreasing, strong_convergence,
};
use sdectl_core::sdecore::systems::Gbm;
use sdectl_core::sensitivity::{
    gbm_test_problem, grad_check as check_path, write_grad_check_csv, GradCheck,
};
use sdectl_core::wiener::{derive_seed, TimeGrid, WienerPath};
use sdectl_core::{ConstantPolicy, CostFunctional, DifferentiablePolicy, Error, MlpPolicy, Scheme};

use crate::Common;

pub enum Outcome {
    Passed,
    Failed(String),
}

pub struct Failure {
    pub code: u8,
    pub message: String,
}

type Run<T = Outcome> = Result<T, Failure>;

fn usage(message: impl ToString) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

/// Config-shaped library errors are usage errors; the rest are run failures.
fn from_lib(e: Error) -> Failure {
    let code = match e {
        Error::Config(_) | Error::Parse { .. } => 2,
        _ => 1,
    };
    Failure {
        code,
        message: e.to_string(),
    }
}

pub fn setup(common: &Common, checkpoint: Option<&Path>) -> Run<Config> {
    let mut cfg = Config::load(&common.config).map_err(usage)?;
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string()).map_err(usage)?;
    }
    if let Some(nu) = &common.nu {
        cfg.set("nu", nu).map_err(usage)?;
        if let [single] = cfg.experiment.nus[..] {
            cfg.set("check_nu", &single.to_string()).map_err(usage)?;
        }
    }
    if let Some(cp) = checkpoint {
        cfg.set("checkpoint", &cp.to_string_lossy())
            .map_err(usage)?;
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&common.out).map_err(|e| usage(format!("{}: {e}", common.out.display())))?;
    let used = common.out.join("config_used.txt");
    fs::write(&used, cfg.render()).map_err(|e| usage(format!("{}: {e}", used.display())))?;
    Ok(cfg)
}

pub fn train(cfg: &Config, out: &Path) -> Run {
    let results = run_experiment(&cfg.experiment, out).map_err(from_lib)?;
    for r in &results {
        println!(
            "nu={} objective={} S_T={} (untrained {}) penalty={} solvency_crossing={}",
            r.nu,
            fmt_f64(r.trained.mean_objective),
            fmt_f64(r.trained.mean_terminal_s),
            fmt_f64(r.untrained.mean_terminal_s),
            fmt_f64(r.trained.mean_penalty),
            fmt_f64(r.solvency_crossing),
        );
    }
    Ok(Outcome::Passed)
}

pub fn grad_check(cfg: &Config, out: &Path, corrupt_adjoint: bool) -> Run {
    let c = &cfg.check;
    let grid = TimeGrid::new(0.0, cfg.experiment.market.horizon, c.n_steps).map_err(from_lib)?;
    let base = cfg.experiment.train.base_seed;
    let checks = match c.system {
        CheckSystem::Gbm => {
            let p = gbm_test_problem(cfg.experiment.network.init_seed);
            run_checks(
                &p.system, &p.policy, &p.cost, &p.x0, grid, base, c.seeds, cfg,
            )?
        }
        CheckSystem::Portfolio => {
            let params = cfg.experiment.market.with_nu(c.nu);
            let system = build_system(&params).map_err(from_lib)?;
            let cost = build_cost(&params).map_err(from_lib)?;
            let policy = cfg.experiment.network.build().map_err(from_lib)?;
            run_checks(
                &system,
                &policy,
                &cost,
                &params.initial_state(),
                grid,
                base,
                c.seeds,
                cfg,
            )?
        }
    };

    let mut summary = CsvWriter::create(
        &out.join("gradcheck_summary.csv"),
        &[
            "seed",
            "path_seed",
            "pair",
            "cosine",
            "max_rel_err",
            "worst_coord",
            "passed",
        ],
    )
    .map_err(from_lib)?;
    let mut worst: Option<(usize, &'static str, f64, Option<usize>, f64)> = None;
    let mut all_passed = true;
    for (k, mut check) in checks.into_iter().enumerate() {
        if corrupt_adjoint {
            let mut adjoint = check.adjoint.clone();
            adjoint.grad *= 1.01;
            check = GradCheck::from_reports(check.forward, adjoint, check.fd, &c.settings);
        }
        write_grad_check_csv(&out.join(format!("gradcheck_seed{k}.csv")), &check)
            .map_err(from_lib)?;
        for (pair, a) in check.pairs() {
            let ok = a.passed(c.settings.rel_tol, c.settings.min_cosine);
            all_passed &= ok;
            summary
                .row(&[
                    k.to_string(),
                    check.adjoint.path_seed.to_string(),
                    pair.to_string(),
                    fmt_f64(a.cosine),
                    fmt_f64(a.max_rel_err),
                    a.worst_coord.map_or_else(String::new, |j| j.to_string()),
                    ok.to_string(),
                ])
                .map_err(from_lib)?;
            if worst.is_none_or(|w| a.max_rel_err > w.2) {
                worst = Some((k, pair, a.max_rel_err, a.worst_coord, a.cosine));
            }
        }
    }
    summary.finish().map_err(from_lib)?;
    let (k, pair, err, coord, cos) = worst.expect("at least one seed");
    let report = format!(
        "worst: seed {k}, {pair}, coordinate {}, relative error {err:.3e}, cosine {cos:.9}",
        coord.map_or_else(|| "-".to_string(), |j| j.to_string())
    );
    println!("{report}");
    if all_passed {
        Ok(Outcome::Passed)
    } else {
        Ok(Outcome::Failed(format!(
            "gradient estimators disagree (rel_tol {}, min_cosine {}); {report}",
            c.settings.rel_tol, c.settings.min_cosine
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn run_checks<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &sdectl_core::DVector<f64>,
    grid: TimeGrid,
    base_seed: u64,
    n_seeds: usize,
    cfg: &Config,
) -> Run<Vec<GradCheck>>
where
    S: sdectl_core::ControlledSystem,
    P: DifferentiablePolicy + Clone,
    C: CostFunctional,
{
    if n_seeds == 0 {
        return Err(usage("check_seeds must be positive"));
    }
    (0..n_seeds as u64)
        .map(|k| {
            let path =
                WienerPath::generate(derive_seed(base_seed, 0, k), grid, system.noise_dim())?;
            check_path(system, policy, cost, x0, &path, &cfg.check.settings)
        })
        .collect::<Result<_, _>>()
        .map_err(from_lib)
}

pub fn convergence(cfg: &Config, out: &Path) -> Run {
    let c = &cfg.convergence;
    let gbm = Gbm::new(c.mu, c.sigma);
    let counts = c.step_counts();
    let seed = cfg.experiment.train.base_seed;
    let mut csv = CsvWriter::create(
        &out.join("convergence.csv"),
        &["n_steps", "scheme", "median_error"],
    )
    .map_err(from_lib)?;
    let mut orders = CsvWriter::create(
        &out.join("orders.csv"),
        &["scheme", "fitted_order", "expected", "passed"],
    )
    .map_err(from_lib)?;
    let mut failures = Vec::new();
    for (scheme, expected) in [(Scheme::EulerMaruyama, 0.5), (Scheme::Milstein, 1.0)] {
        let curve = strong_convergence(gbm, c.x0, c.horizon, scheme, &counts, c.paths, seed)
            .map_err(from_lib)?;
        for &(n, e) in &curve {
            csv.row(&[n.to_string(), scheme.to_string(), fmt_f64(e)])
                .map_err(from_lib)?;
        }
        let order = fit_order(c.horizon, &curve);
        let ok = (order - expected).abs() <= c.order_band;
        println!(
            "{scheme}: fitted order {order:.4} (expected {expected} ± {})",
            c.order_band
        );
        orders
            .row(&[
                scheme.to_string(),
                fmt_f64(order),
                fmt_f64(expected),
                ok.to_string(),
            ])
            .map_err(from_lib)?;
        if !ok {
            failures.push(format!(
                "{scheme} order {order:.4} outside {expected} ± {}",
                c.order_band
            ));
        }
    }
    csv.finish().map_err(from_lib)?;
    orders.finish().map_err(from_lib)?;

    let x0 = sdectl_core::DVector::from_element(1, c.x0);
    let rev = reversibility(
        &gbm,
        &ConstantPolicy::none(1),
        &x0,
        c.horizon,
        Scheme::Milstein,
        Scheme::Milstein,
        &c.reversal_step_counts(),
        c.rev_seeds,
        seed,
    )
    .map_err(from_lib)?;
    let mut rcsv = CsvWriter::create(&out.join("reversibility.csv"), &["n_steps", "median_error"])
        .map_err(from_lib)?;
    for &(n, e) in &rev {
        rcsv.row(&[n.to_string(), fmt_f64(e)]).map_err(from_lib)?;
    }
    rcsv.finish().map_err(from_lib)?;
    let decreasing = strictly_decreasing(&rev);
    println!("reversibility: median error strictly decreasing = {decreasing}");
    if !decreasing {
        failures.push("reversibility error does not strictly decrease".into());
    }
    if failures.is_empty() {
        Ok(Outcome::Passed)
    } else {
        Ok(Outcome::Failed(failures.join("; ")))
    }
}

fn load_policy(cfg: &Config) -> Run<MlpPolicy> {
    let path = cfg
        .simulate
        .checkpoint
        .as_deref()
        .ok_or_else(|| usage("no checkpoint given (set `checkpoint` or pass --checkpoint)"))?;
    let policy = read_checkpoint(path).map_err(usage)?;
    let expected = cfg.experiment.network.layer_dims();
    if policy.layer_dims() != expected.as_slice() {
        return Err(usage(format!(
            "{}: layer sizes {:?} do not match the configured network {:?}",
            path.display(),
            policy.layer_dims(),
            expected
        )));
    }
    Ok(policy)
}

pub fn simulate(cfg: &Config, out: &Path) -> Run {
    let policy = load_policy(cfg)?;
    let nu = cfg.experiment.nus.first().copied().unwrap_or(0.0);
    let params = cfg.experiment.market.with_nu(nu);
    let trajs = simulate_paths(
        &params,
        &policy,
        &cfg.experiment.train,
        cfg.simulate.n_paths,
    )
    .map_err(from_lib)?;
    for (k, traj) in trajs.iter().enumerate() {
        write_portfolio_trajectory(&out.join(format!("sim_seed{k}.csv")), traj)
            .map_err(from_lib)?;
    }
    println!("wrote {} trajectories", trajs.len());
    Ok(Outcome::Passed)
}

pub fn policy_grid(cfg: &Config, out: &Path) -> Run {
    let policy = load_policy(cfg)?;
    let e = &cfg.experiment.eval;
    let rows = tabulate(&policy, e.grid_s, e.grid_v, e.grid_resolution).map_err(from_lib)?;
    write_policy_grid_csv(&out.join("policygrid.csv"), &rows).map_err(from_lib)?;
    Ok(Outcome::Passed)
}
