use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::scheme::advance;
use super::{convert_calculus, Calculus, ControlledSystem, NoiseStructure, Scheme};
use crate::csvio::{fmt_f64, CsvWriter};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::wiener::{BackwardWienerPath, TimeGrid, WienerPath};

/// States and controls on every grid point. Row `k` holds `x_{t_k}` and
/// `u(t_k, x_{t_k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: DMatrix<f64>,
    pub controls: DMatrix<f64>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.row(k).transpose()
    }

    pub fn control(&self, k: usize) -> DVector<f64> {
        self.controls.row(k).transpose()
    }

    pub fn initial_state(&self) -> DVector<f64> {
        self.state(0)
    }

    pub fn final_state(&self) -> DVector<f64> {
        self.state(self.grid.n_steps())
    }

    /// CSV with `t, x_1..x_n, u_1..u_m`, or with the given column names.
    pub fn write_csv(&self, path: &Path, names: Option<&[&str]>) -> Result<()> {
        let (nx, nu) = (self.states.ncols(), self.controls.ncols());
        let header: Vec<String> = match names {
            Some(n) => n.iter().map(|s| s.to_string()).collect(),
            None => std::iter::once("t".to_string())
                .chain((1..=nx).map(|i| format!("x_{i}")))
                .chain((1..=nu).map(|i| format!("u_{i}")))
                .collect(),
        };
        if header.len() != 1 + nx + nu {
            return Err(Error::Dimension {
                what: "trajectory csv header",
                expected: 1 + nx + nu,
                got: header.len(),
            });
        }
        let mut w = CsvWriter::create(path, &header)?;
        for (k, t) in self.grid.times().enumerate() {
            let mut row = vec![fmt_f64(t)];
            row.extend(self.states.row(k).iter().map(|v| fmt_f64(*v)));
            row.extend(self.controls.row(k).iter().map(|v| fmt_f64(*v)));
            w.row(&row)?;
        }
        w.finish()
    }
}

fn check_dims<S, P>(system: &S, policy: &P, x: &DVector<f64>, noise_dims: usize) -> Result<()>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    let checks = [
        ("initial state", system.state_dim(), x.len()),
        ("policy state input", system.state_dim(), policy.state_dim()),
        (
            "policy control output",
            system.control_dim(),
            policy.control_dim(),
        ),
        ("wiener path channels", system.noise_dim(), noise_dims),
    ];
    for (what, expected, got) in checks {
        if expected != got {
            return Err(Error::Dimension {
                what,
                expected,
                got,
            });
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("initial state must be finite".into()));
    }
    Ok(())
}

fn store_row(m: &mut DMatrix<f64>, k: usize, v: &DVector<f64>) {
    for (j, x) in v.iter().enumerate() {
        m[(k, j)] = *x;
    }
}

/// Solves the system forward along `path`.
pub fn integrate<S, P>(
    system: &S,
    policy: &P,
    x0: &DVector<f64>,
    path: &WienerPath,
    scheme: Scheme,
) -> Result<Trajectory>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    check_dims(system, policy, x0, path.dims())?;
    scheme.check_compatible(system)?;
    let grid = *path.grid();
    let dt = grid.dt();
    let n = grid.n_steps();
    let mut states = DMatrix::zeros(n + 1, system.state_dim());
    let mut controls = DMatrix::zeros(n + 1, system.control_dim());
    let mut x = x0.clone();
    for k in 0..n {
        let t = grid.time(k);
        let u = policy.control(t, &x);
        store_row(&mut states, k, &x);
        store_row(&mut controls, k, &u);
        x = advance(system, scheme, t, dt, &x, &u, &path.increment(k));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: k + 1,
                context: "forward integration",
            });
        }
    }
    let u = policy.control(grid.t_end(), &x);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            step: n,
            context: "policy output",
        });
    }
    store_row(&mut states, n, &x);
    store_row(&mut controls, n, &u);
    Ok(Trajectory {
        grid,
        states,
        controls,
    })
}

/// Inverse flow: integrates `x_s = x_T - ∫ f dt - ∫ g ∘ dB̌` from `t_end`
/// back to `t_start` with a Stratonovich scheme. Itô systems are converted
/// first. Row `n_steps` of the result is `x_T`; row 0 approximates the
/// initial state that produced it.
pub fn integrate_backward<S, P>(
    system: &S,
    policy: &P,
    x_t: &DVector<f64>,
    backward_path: &BackwardWienerPath,
    scheme: Scheme,
) -> Result<Trajectory>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    match system.calculus() {
        Calculus::Stratonovich => run_backward(system, policy, x_t, backward_path, scheme),
        Calculus::Ito => run_backward(
            &convert_calculus(system),
            policy,
            x_t,
            backward_path,
            scheme,
        ),
    }
}

fn run_backward<S, P>(
    system: &S,
    policy: &P,
    x_t: &DVector<f64>,
    path: &BackwardWienerPath,
    scheme: Scheme,
) -> Result<Trajectory>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    check_dims(system, policy, x_t, path.dims())?;
    let grid = *path.grid();
    let reversed = Reversed {
        inner: system,
        t_sum: grid.t_start() + grid.t_end(),
    };
    scheme.check_compatible(&reversed)?;
    let dt = grid.dt();
    let n = grid.n_steps();
    let mut states = DMatrix::zeros(n + 1, system.state_dim());
    let mut controls = DMatrix::zeros(n + 1, system.control_dim());
    let mut x = x_t.clone();
    for k in (0..n).rev() {
        let t = grid.time(k + 1);
        let u = policy.control(t, &x);
        store_row(&mut states, k + 1, &x);
        store_row(&mut controls, k + 1, &u);
        let tau = reversed.t_sum - t;
        x = advance(&reversed, scheme, tau, dt, &x, &u, &path.increment(k));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: k,
                context: "backward integration",
            });
        }
    }
    let u = policy.control(grid.t_start(), &x);
    store_row(&mut states, 0, &x);
    store_row(&mut controls, 0, &u);
    Ok(Trajectory {
        grid,
        states,
        controls,
    })
}

/// `(-f, -g)` in reversed time `τ = t_start + t_end - t`. The Milstein
/// correction is even in `g` and passes through unchanged.
struct Reversed<'a, S: ?Sized> {
    inner: &'a S,
    t_sum: f64,
}

impl<S: ControlledSystem + ?Sized> ControlledSystem for Reversed<'_, S> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn calculus(&self) -> Calculus {
        self.inner.calculus()
    }
    fn noise_structure(&self) -> NoiseStructure {
        self.inner.noise_structure()
    }
    fn drift(&self, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        -self.inner.drift(self.t_sum - tau, x, u)
    }
    fn diffusion(&self, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        -self.inner.diffusion(self.t_sum - tau, x, u)
    }
    fn drift_dx(&self, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        -self.inner.drift_dx(self.t_sum - tau, x, u)
    }
    fn drift_du(&self, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        -self.inner.drift_du(self.t_sum - tau, x, u)
    }
    fn diffusion_dx(&self, i: usize, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        -self.inner.diffusion_dx(i, self.t_sum - tau, x, u)
    }
    fn diffusion_du(&self, i: usize, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        -self.inner.diffusion_du(i, self.t_sum - tau, x, u)
    }
    fn ito_correction(&self, tau: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.inner.ito_correction(self.t_sum - tau, x, u)
    }
    fn ito_correction_dx(
        &self,
        i: usize,
        tau: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        self.inner.ito_correction_dx(i, self.t_sum - tau, x, u)
    }
    fn ito_correction_du(
        &self,
        i: usize,
        tau: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        self.inner.ito_correction_du(i, self.t_sum - tau, x, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ConstantPolicy;
    use crate::sdecore::systems::{ControlledGbm, Gbm, LinearOde};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn path(seed: u64, n: usize) -> WienerPath {
        WienerPath::generate(seed, TimeGrid::new(0.0, 1.0, n).unwrap(), 1).unwrap()
    }

    #[test]
    fn stationary_system_is_constant() {
        let sys = LinearOde::new(0.0);
        let none = ConstantPolicy::none(1);
        let p = path(1, 32);
        for scheme in [Scheme::EulerMaruyama, Scheme::Milstein] {
            let tr = integrate(&sys, &none, &v(&[3.0]), &p, scheme).unwrap();
            assert!(tr.states.iter().all(|&x| x == 3.0));
        }
        let back =
            integrate_backward(&sys, &none, &v(&[3.0]), &p.reverse(), Scheme::Milstein).unwrap();
        assert!(back.states.iter().all(|&x| x == 3.0));
    }

    #[test]
    fn decay_matches_exponential() {
        let sys = LinearOde::new(-1.0);
        let none = ConstantPolicy::none(1);
        let tr = integrate(&sys, &none, &v(&[1.0]), &path(0, 4096), Scheme::Milstein).unwrap();
        assert!((tr.final_state()[0] - (-1.0f64).exp()).abs() < 1e-3);
        assert_eq!(tr.initial_state()[0], 1.0);
    }

    #[test]
    fn milstein_tracks_gbm_path() {
        let sys = Gbm::new(0.23, 0.18);
        let none = ConstantPolicy::none(1);
        let p = path(42, 1024);
        let tr = integrate(&sys, &none, &v(&[1.0]), &p, Scheme::Milstein).unwrap();
        let exact = sys.exact(1.0, 1.0, p.terminal_value()[0]);
        assert!((tr.final_state()[0] - exact).abs() < 1e-3);
    }

    #[test]
    fn controls_recorded() {
        let sys = ControlledGbm::growth();
        let pol = ConstantPolicy::new(1, v(&[0.5]));
        let tr = integrate(&sys, &pol, &v(&[1.0]), &path(0, 8), Scheme::Milstein).unwrap();
        assert!(tr.controls.iter().all(|&u| u == 0.5));
        assert_eq!(tr.controls.nrows(), 9);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let sys = Gbm::new(0.1, 0.2);
        let none = ConstantPolicy::none(1);
        let r = integrate(&sys, &none, &v(&[1.0, 2.0]), &path(0, 8), Scheme::Milstein);
        assert!(matches!(r, Err(Error::Dimension { .. })));
        let two = WienerPath::generate(0, TimeGrid::new(0.0, 1.0, 8).unwrap(), 2).unwrap();
        assert!(integrate(&sys, &none, &v(&[1.0]), &two, Scheme::Milstein).is_err());
    }

    #[test]
    fn divergence_reports_step() {
        let sys = LinearOde::new(1e300);
        let none = ConstantPolicy::none(1);
        match integrate(&sys, &none, &v(&[1e10]), &path(0, 8), Scheme::EulerMaruyama) {
            Err(Error::Divergence { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_reversal() {
        let sys = LinearOde::new(-0.8);
        let none = ConstantPolicy::none(1);
        let p = path(3, 4096);
        let strat = convert_calculus(sys);
        let fwd = integrate(&strat, &none, &v(&[1.0]), &p, Scheme::EulerHeun).unwrap();
        let back = integrate_backward(
            &sys,
            &none,
            &fwd.final_state(),
            &p.reverse(),
            Scheme::EulerHeun,
        )
        .unwrap();
        assert!((back.initial_state()[0] - 1.0).abs() < 1e-6);
        // first-order pair: round trip error is O(dt)
        let fwd = integrate(&sys, &none, &v(&[1.0]), &p, Scheme::Milstein).unwrap();
        let back = integrate_backward(
            &sys,
            &none,
            &fwd.final_state(),
            &p.reverse(),
            Scheme::Milstein,
        )
        .unwrap();
        assert!((back.initial_state()[0] - 1.0).abs() < 1e-3);
        assert_eq!(back.final_state(), fwd.final_state());
    }

    #[test]
    fn zero_noise_calculi_identical() {
        let sys = LinearOde::new(-0.4);
        let strat = convert_calculus(&sys);
        let none = ConstantPolicy::none(1);
        let p = path(5, 64);
        let a = integrate(&sys, &none, &v(&[2.0]), &p, Scheme::Milstein).unwrap();
        let b = integrate(&strat, &none, &v(&[2.0]), &p, Scheme::Milstein).unwrap();
        let c = integrate(&sys, &none, &v(&[2.0]), &p, Scheme::EulerMaruyama).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.states, c.states);
    }

    #[test]
    fn csv_dump_has_one_row_per_point() {
        let sys = ControlledGbm::growth();
        let pol = ConstantPolicy::new(1, v(&[0.1]));
        let tr = integrate(&sys, &pol, &v(&[1.0]), &path(0, 4), Scheme::Milstein).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("traj.csv");
        tr.write_csv(&f, None).unwrap();
        let text = std::fs::read_to_string(&f).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,u_1");
        assert_eq!(lines.len(), 6);
    }
}
