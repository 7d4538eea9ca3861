//! The benchmarked workloads run once, so a broken bench fails `cargo test`.

use sdectl_core::portfolio::{build_cost, build_system, MarketParams, NetworkSpec};
use sdectl_core::sensitivity::{adjoint_gradient, forward_sensitivity, gbm_test_problem, GradientSettings};
use sdectl_core::{TimeGrid, WienerPath};

#[test]
fn benchmark_inputs_are_valid() {
    let s = GradientSettings::default();
    let p = gbm_test_problem(1);
    let path = WienerPath::generate(1, TimeGrid::new(0.0, 1.0, 256).unwrap(), 1).unwrap();
    let a = adjoint_gradient(&p.system, &p.policy, &p.cost, &p.x0, &path, &s).unwrap();
    assert!(a.grad.iter().all(|g| g.is_finite()));

    let params = MarketParams::default().with_nu(0.25);
    let system = build_system(&params).unwrap();
    let cost = build_cost(&params).unwrap();
    let policy = NetworkSpec::default().build().unwrap();
    let path = WienerPath::generate(1, TimeGrid::new(0.0, 1.0, 200).unwrap(), 1).unwrap();
    let a = adjoint_gradient(&system, &policy, &cost, &params.initial_state(), &path, &s).unwrap();
    let f = forward_sensitivity(&system, &policy, &cost, &params.initial_state(), &path, &s).unwrap();
    assert!((&a.grad - &f.grad).amax() < 1e-10);
}
