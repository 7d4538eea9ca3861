//! One-step maps `x_{k+1} = F(t_k, x_k, u_k, Δt, ΔB_k)` and their exact
//! linearizations. The control is held at its left-endpoint value for the
//! whole step.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::{Calculus, ControlledSystem, NoiseStructure};
use crate::error::{Error, Result};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Itô only: `x + f Δt + g ΔB`.
    EulerMaruyama,
    /// Scalar or diagonal noise. The correction `½ Σ c^i (ΔB_i² - Δt)` under
    /// Itô and `½ Σ c^i ΔB_i²` under Stratonovich.
    Milstein,
    /// Stratonovich predictor-corrector:
    /// `x̄ = x + f Δt + g ΔB`, `x' = x + ½(f + f̄) Δt + ½(g + ḡ) ΔB`.
    EulerHeun,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::EulerMaruyama => "euler_maruyama",
            Scheme::Milstein => "milstein",
            Scheme::EulerHeun => "euler_heun",
        }
    }

    /// Errors if this scheme cannot integrate `system`.
    pub fn check_compatible<S: ControlledSystem + ?Sized>(self, system: &S) -> Result<()> {
        match (self, system.calculus()) {
            (Scheme::EulerMaruyama, Calculus::Stratonovich) => {
                return Err(Error::UnsupportedScheme(
                    "Euler-Maruyama converges to the Itô solution; convert the system first".into(),
                ))
            }
            (Scheme::EulerHeun, Calculus::Ito) => {
                return Err(Error::UnsupportedScheme(
                    "Euler-Heun converges to the Stratonovich solution; convert the system first"
                        .into(),
                ))
            }
            _ => {}
        }
        if self == Scheme::Milstein && system.noise_structure() == NoiseStructure::General {
            return Err(Error::UnsupportedScheme(
                "Milstein needs scalar or diagonal noise (general noise requires Lévy areas)"
                    .into(),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "euler_maruyama" | "em" => Ok(Scheme::EulerMaruyama),
            "milstein" => Ok(Scheme::Milstein),
            "euler_heun" | "heun" => Ok(Scheme::EulerHeun),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// One step of `scheme` with the control already evaluated. No
/// compatibility or finiteness checks.
pub fn advance<S: ControlledSystem + ?Sized>(
    system: &S,
    scheme: Scheme,
    t: f64,
    dt: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    db: &DVector<f64>,
) -> DVector<f64> {
    let f = system.drift(t, x, u);
    let g = system.diffusion(t, x, u);
    match scheme {
        Scheme::EulerMaruyama => x + f * dt + g * db,
        Scheme::Milstein => {
            let c = system.ito_correction(t, x, u);
            let ito = system.calculus() == Calculus::Ito;
            let w = milstein_weights(db, dt, ito);
            x + f * dt + g * db + c * w
        }
        Scheme::EulerHeun => {
            let pred = x + &f * dt + &g * db;
            let f2 = system.drift(t + dt, &pred, u);
            let g2 = system.diffusion(t + dt, &pred, u);
            x + (f + f2) * (0.5 * dt) + (g + g2) * db * 0.5
        }
    }
}

/// Per-channel weights `½(ΔB_i² - Δt)` (Itô) or `½ΔB_i²` (Stratonovich).
fn milstein_weights(db: &DVector<f64>, dt: f64, ito: bool) -> DVector<f64> {
    db.map(|b| if ito { 0.5 * (b * b - dt) } else { 0.5 * b * b })
}

fn finite_or(x: DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Divergence { step: 0, context })
    }
}

/// Single Itô Euler–Maruyama step. Divergence errors report step 0; use
/// [`super::integrate`] for indexed reporting.
pub fn euler_maruyama_step<S, P>(
    system: &S,
    policy: &P,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
    db: &DVector<f64>,
) -> Result<DVector<f64>>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    Scheme::EulerMaruyama.check_compatible(system)?;
    let u = policy.control(t, x);
    finite_or(
        advance(system, Scheme::EulerMaruyama, t, dt, x, &u, db),
        "euler-maruyama step",
    )
}

/// Single Milstein step in the given calculus. `calculus` must match the
/// system's own tag.
pub fn milstein_step<S, P>(
    system: &S,
    policy: &P,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
    db: &DVector<f64>,
    calculus: Calculus,
) -> Result<DVector<f64>>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    if calculus != system.calculus() {
        return Err(Error::Config(format!(
            "{calculus} Milstein step requested for a {} system",
            system.calculus()
        )));
    }
    Scheme::Milstein.check_compatible(system)?;
    let u = policy.control(t, x);
    finite_or(
        advance(system, Scheme::Milstein, t, dt, x, &u, db),
        "milstein step",
    )
}

pub fn euler_heun_step<S, P>(
    system: &S,
    policy: &P,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
    db: &DVector<f64>,
) -> Result<DVector<f64>>
where
    S: ControlledSystem + ?Sized,
    P: Policy + ?Sized,
{
    Scheme::EulerHeun.check_compatible(system)?;
    let u = policy.control(t, x);
    finite_or(
        advance(system, Scheme::EulerHeun, t, dt, x, &u, db),
        "euler-heun step",
    )
}

/// Partials of one step map with the control treated as an independent
/// input: `dx = ∂F/∂x`, `du = ∂F/∂u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepJacobian {
    pub dx: DMatrix<f64>,
    pub du: DMatrix<f64>,
}

/// Exact derivative of [`advance`] with respect to `x` and `u`.
pub fn step_jacobian<S: ControlledSystem + ?Sized>(
    system: &S,
    scheme: Scheme,
    t: f64,
    dt: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    db: &DVector<f64>,
) -> StepJacobian {
    let n = system.state_dim();
    let noise = system.noise_dim();
    let mut dx = DMatrix::identity(n, n) + system.drift_dx(t, x, u) * dt;
    let mut du = system.drift_du(t, x, u) * dt;
    match scheme {
        Scheme::EulerMaruyama | Scheme::Milstein => {
            for i in 0..noise {
                dx += system.diffusion_dx(i, t, x, u) * db[i];
                du += system.diffusion_du(i, t, x, u) * db[i];
            }
            if scheme == Scheme::Milstein {
                let w = milstein_weights(db, dt, system.calculus() == Calculus::Ito);
                for i in 0..noise {
                    dx += system.ito_correction_dx(i, t, x, u) * w[i];
                    du += system.ito_correction_du(i, t, x, u) * w[i];
                }
            }
        }
        Scheme::EulerHeun => {
            // predictor and its partials
            let mut p_dx = dx.clone();
            let mut p_du = du.clone();
            for i in 0..noise {
                p_dx += system.diffusion_dx(i, t, x, u) * db[i];
                p_du += system.diffusion_du(i, t, x, u) * db[i];
            }
            let pred = x + system.drift(t, x, u) * dt + system.diffusion(t, x, u) * db;
            let t2 = t + dt;
            let f2_dx = system.drift_dx(t2, &pred, u);
            let f2_du = system.drift_du(t2, &pred, u);
            dx = DMatrix::identity(n, n) + (system.drift_dx(t, x, u) + &f2_dx * &p_dx) * (0.5 * dt);
            du = (system.drift_du(t, x, u) + &f2_dx * &p_du + f2_du) * (0.5 * dt);
            for i in 0..noise {
                let g2_dx = system.diffusion_dx(i, t2, &pred, u);
                let half = 0.5 * db[i];
                dx += (system.diffusion_dx(i, t, x, u) + &g2_dx * &p_dx) * half;
                du += (system.diffusion_du(i, t, x, u)
                    + &g2_dx * &p_du
                    + system.diffusion_du(i, t2, &pred, u))
                    * half;
            }
        }
    }
    StepJacobian { dx, du }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ConstantPolicy;
    use crate::sdecore::systems::{ControlledGbm, CoupledNoise, DiagonalGbm, Gbm, LinearOde};
    use crate::sdecore::{convert_calculus, ControlledSystem};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn em_trivial_steps() {
        let none = ConstantPolicy::none(1);
        let zero = LinearOde::new(0.0);
        let x = euler_maruyama_step(&zero, &none, 0.0, &v(&[2.5]), 0.1, &v(&[0.3])).unwrap();
        assert_eq!(x[0], 2.5);

        let unit = LinearOde::constant_drift(1.0);
        let x = euler_maruyama_step(&unit, &none, 0.0, &v(&[2.5]), 0.1, &v(&[0.3])).unwrap();
        assert!((x[0] - 2.6).abs() < 1e-15);
    }

    #[test]
    fn em_gbm_hand_arithmetic() {
        let sys = Gbm::new(0.23, 0.18);
        let none = ConstantPolicy::none(1);
        let x = euler_maruyama_step(&sys, &none, 0.0, &v(&[1.0]), 0.01, &v(&[0.05])).unwrap();
        assert!((x[0] - 1.0113).abs() < 1e-15);
    }

    #[test]
    fn milstein_reduces_to_em() {
        let none = ConstantPolicy::none(1);
        let additive = LinearOde::new(0.4).with_additive_noise(0.7);
        let x0 = v(&[1.2]);
        let db = v(&[0.11]);
        let m = milstein_step(&additive, &none, 0.0, &x0, 0.01, &db, Calculus::Ito).unwrap();
        let e = euler_maruyama_step(&additive, &none, 0.0, &x0, 0.01, &db).unwrap();
        assert_eq!(m, e);

        let gbm = Gbm::new(0.23, 0.18);
        let dt: f64 = 0.01;
        let db = v(&[dt.sqrt()]);
        let m = milstein_step(&gbm, &none, 0.0, &x0, dt, &db, Calculus::Ito).unwrap();
        let e = euler_maruyama_step(&gbm, &none, 0.0, &x0, dt, &db).unwrap();
        assert!((m - e).amax() < 1e-15);
    }

    #[test]
    fn milstein_calculus_must_match() {
        let none = ConstantPolicy::none(1);
        let gbm = Gbm::new(0.1, 0.2);
        let r = milstein_step(
            &gbm,
            &none,
            0.0,
            &v(&[1.0]),
            0.1,
            &v(&[0.1]),
            Calculus::Stratonovich,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn general_noise_rejects_milstein() {
        let sys = convert_calculus(CoupledNoise::new(0.3));
        let none = ConstantPolicy::none(2);
        let r = milstein_step(
            &sys,
            &none,
            0.0,
            &v(&[1.0, 1.0]),
            0.1,
            &v(&[0.1, 0.2]),
            Calculus::Stratonovich,
        );
        assert!(matches!(r, Err(Error::UnsupportedScheme(_))));
        assert!(euler_heun_step(&sys, &none, 0.0, &v(&[1.0, 1.0]), 0.1, &v(&[0.1, 0.2])).is_ok());
    }

    #[test]
    fn calculus_scheme_pairing() {
        let gbm = Gbm::new(0.1, 0.2);
        assert!(Scheme::EulerHeun.check_compatible(&gbm).is_err());
        assert!(Scheme::EulerMaruyama
            .check_compatible(&convert_calculus(&gbm))
            .is_err());
    }

    #[test]
    fn divergence_detected() {
        let none = ConstantPolicy::none(1);
        let sys = LinearOde::new(1.0);
        let r = euler_maruyama_step(&sys, &none, 0.0, &v(&[f64::MAX]), 10.0, &v(&[0.0]));
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    fn fd_jacobian<S: ControlledSystem>(
        sys: &S,
        scheme: Scheme,
        x: &DVector<f64>,
        u: &DVector<f64>,
        db: &DVector<f64>,
    ) -> StepJacobian {
        let (t, dt, h) = (0.3, 0.05, 1e-6);
        let n = x.len();
        let m = u.len();
        let mut dx = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let d = (advance(sys, scheme, t, dt, &xp, u, db)
                - advance(sys, scheme, t, dt, &xm, u, db))
                / (2.0 * h);
            dx.set_column(j, &d);
        }
        let mut du = DMatrix::zeros(n, m);
        for j in 0..m {
            let mut up = u.clone();
            up[j] += h;
            let mut um = u.clone();
            um[j] -= h;
            let d = (advance(sys, scheme, t, dt, x, &up, db)
                - advance(sys, scheme, t, dt, x, &um, db))
                / (2.0 * h);
            du.set_column(j, &d);
        }
        StepJacobian { dx, du }
    }

    fn assert_jacobian_matches<S: ControlledSystem>(
        sys: &S,
        scheme: Scheme,
        x: DVector<f64>,
        u: DVector<f64>,
        db: DVector<f64>,
    ) {
        let exact = step_jacobian(sys, scheme, 0.3, 0.05, &x, &u, &db);
        let fd = fd_jacobian(sys, scheme, &x, &u, &db);
        assert!((&exact.dx - &fd.dx).amax() < 1e-8, "{scheme} dx");
        assert!((&exact.du - &fd.du).amax() < 1e-8, "{scheme} du");
    }

    #[test]
    fn step_jacobians_match_finite_differences() {
        let cg = ControlledGbm::test_problem();
        for scheme in [Scheme::EulerMaruyama, Scheme::Milstein] {
            assert_jacobian_matches(&cg, scheme, v(&[1.3]), v(&[0.4]), v(&[0.21]));
        }
        let strat = convert_calculus(&cg);
        for scheme in [Scheme::Milstein, Scheme::EulerHeun] {
            assert_jacobian_matches(&strat, scheme, v(&[1.3]), v(&[0.4]), v(&[-0.17]));
        }
        let diag = DiagonalGbm::new(vec![0.1, -0.2], vec![0.3, 0.5]);
        assert_jacobian_matches(
            &diag,
            Scheme::Milstein,
            v(&[1.0, 2.0]),
            v(&[]),
            v(&[0.1, -0.3]),
        );
        let coupled = convert_calculus(CoupledNoise::new(0.4));
        assert_jacobian_matches(
            &coupled,
            Scheme::EulerHeun,
            v(&[1.0, 0.5]),
            v(&[]),
            v(&[0.1, -0.3]),
        );
    }

    #[test]
    fn ito_and_converted_milstein_agree() {
        let cg = ControlledGbm::test_problem();
        let strat = convert_calculus(&cg);
        let (x, u, db) = (v(&[0.9]), v(&[-0.3]), v(&[0.13]));
        let a = advance(&cg, Scheme::Milstein, 0.0, 0.01, &x, &u, &db);
        let b = advance(&strat, Scheme::Milstein, 0.0, 0.01, &x, &u, &db);
        assert!((a - b).amax() < 1e-14);
        let ja = step_jacobian(&cg, Scheme::Milstein, 0.0, 0.01, &x, &u, &db);
        let jb = step_jacobian(&strat, Scheme::Milstein, 0.0, 0.01, &x, &u, &db);
        assert!((ja.dx - jb.dx).amax() < 1e-14);
        assert!((ja.du - jb.du).amax() < 1e-14);
    }
}
