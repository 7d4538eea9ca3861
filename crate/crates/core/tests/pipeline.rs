use std::fs;

use proptest::prelude::*;
use sdectl_core::config::Config;
use sdectl_core::optim::{batch_gradient, train, TrainConfig};
use sdectl_core::policy::read_checkpoint;
use sdectl_core::portfolio::{policy_grid, run_experiment};
use sdectl_core::sdecore::integrate;
use sdectl_core::sensitivity::{adjoint_gradient, compare_gradients, forward_sensitivity, gbm_test_problem, GradientSettings};
use sdectl_core::{DifferentiablePolicy, Estimator, Scheme, TimeGrid, WienerPath};
use tempfile::TempDir;

#[test]
fn config_file_to_checkpoint_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(
        &cfg_path,
        "# tiny run\niterations = 2\nbatch_size = 4\nnu = 0.5\neval_paths = 4\nsolvency_paths = 4\ntraj_files = 1\ngrid_resolution = 4\n",
    )
    .unwrap();
    let cfg = Config::load(&cfg_path).unwrap();
    let out = dir.path().join("out");
    let results = run_experiment(&cfg.experiment, &out).unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0].log.records.len(), 2);

    let restored = read_checkpoint(&out.join("checkpoint_nu0.5.txt")).unwrap();
    assert_eq!(restored.params(), results[0].policy.params());
    assert_eq!(restored, results[0].policy);
    let grid = policy_grid(&restored, (0.0, 3.0), (-2.0, 1.0), 4).unwrap();
    assert_eq!(grid.len(), 16);
    assert!(grid.iter().all(|r| r[2] > 0.0 && r[3] > 0.0));
}

#[test]
fn adjoint_training_reduces_tracking_cost() {
    let p = gbm_test_problem(2);
    let config = TrainConfig {
        grid: TimeGrid::new(0.0, 1.0, 64).unwrap(),
        batch_size: 16,
        iterations: 40,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let before = batch_gradient(&p.system, &p.policy, &p.cost, &p.x0, &config, 1000).unwrap().mean_cost;
    let (trained, log) = train(&p.system, p.policy.clone(), &p.cost, &p.x0, &config).unwrap();
    let after = batch_gradient(&p.system, &trained, &p.cost, &p.x0, &config, 1000).unwrap().mean_cost;
    assert_eq!(log.records.len(), 40);
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn estimators_interchangeable_in_training() {
    let p = gbm_test_problem(3);
    let base = TrainConfig {
        grid: TimeGrid::new(0.0, 1.0, 32).unwrap(),
        batch_size: 4,
        iterations: 3,
        ..TrainConfig::default()
    };
    let run = |estimator| {
        let c = TrainConfig { estimator, ..base.clone() };
        train(&p.system, p.policy.clone(), &p.cost, &p.x0, &c).unwrap().0.params()
    };
    let a = run(Estimator::Adjoint);
    let f = run(Estimator::Forward);
    let d = run(Estimator::FiniteDifference);
    assert!((&a - &f).amax() < 1e-10);
    assert!((&a - &d).amax() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_and_adjoint_agree(seed in 0u64..10_000, init in 0u64..50, log_steps in 3u32..9) {
        let p = gbm_test_problem(init);
        let path = WienerPath::generate(seed, TimeGrid::new(0.0, 1.0, 1 << log_steps).unwrap(), 1).unwrap();
        let s = GradientSettings::default();
        let a = adjoint_gradient(&p.system, &p.policy, &p.cost, &p.x0, &path, &s).unwrap();
        let f = forward_sensitivity(&p.system, &p.policy, &p.cost, &p.x0, &path, &s).unwrap();
        let agreement = compare_gradients(&a.grad, &f.grad, 1e-12);
        prop_assert!(agreement.max_rel_err < 1e-9, "{:?}", agreement);
        prop_assert_eq!(a.cost_value, f.cost_value);
    }

    #[test]
    fn trajectories_start_at_x0(seed in 0u64..10_000, x0 in 0.1f64..5.0, scheme_ix in 0usize..3) {
        let scheme = [Scheme::EulerMaruyama, Scheme::Milstein, Scheme::EulerHeun][scheme_ix];
        let p = gbm_test_problem(1);
        let path = WienerPath::generate(seed, TimeGrid::new(0.0, 1.0, 16).unwrap(), 1).unwrap();
        let x = sdectl_core::DVector::from_element(1, x0);
        let tr = if scheme == Scheme::EulerHeun {
            integrate(&sdectl_core::sdecore::convert_calculus(&p.system), &p.policy, &x, &path, scheme)
        } else {
            integrate(&p.system, &p.policy, &x, &path, scheme)
        }
        .unwrap();
        prop_assert_eq!(tr.states[(0, 0)], x0);
        prop_assert_eq!(tr.states.nrows(), 17);
        prop_assert_eq!(tr.controls[(0, 0)], sdectl_core::Policy::control(&p.policy, 0.0, &x)[0]);
    }
}
