use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ControlledSystem;

/// `(t, x, u)` at which partials are compared.
pub type SamplePoint = (f64, DVector<f64>, DVector<f64>);

/// Worst disagreement between analytic partials and central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialsCheck {
    pub max_rel_err: f64,
    pub worst: String,
}

impl PartialsCheck {
    pub fn passed(&self, rel_tol: f64) -> bool {
        self.max_rel_err <= rel_tol
    }
}

/// Uniform samples in `[t_lo, t_hi] × x_box × u_box`.
pub fn random_points(
    seed: u64,
    n: usize,
    t_range: (f64, f64),
    x_box: &[(f64, f64)],
    u_box: &[(f64, f64)],
) -> Vec<SamplePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    (0..n)
        .map(|_| {
            let t = draw(t_range);
            let x = DVector::from_iterator(x_box.len(), x_box.iter().map(|b| draw(*b)));
            let u = DVector::from_iterator(u_box.len(), u_box.iter().map(|b| draw(*b)));
            (t, x, u)
        })
        .collect()
}

/// Compares every analytic partial of `system` against central finite
/// differences. Error per entry is `|a - fd| / max(1, |a|, |fd|)`.
pub fn check_partials<S: ControlledSystem + ?Sized>(
    system: &S,
    points: &[SamplePoint],
) -> PartialsCheck {
    let mut report = PartialsCheck {
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for (t, x, u) in points {
        let (t, x, u) = (*t, x, u);
        let mut record = |name: String, analytic: &DMatrix<f64>, fd: &DMatrix<f64>| {
            for (a, b) in analytic.iter().zip(fd.iter()) {
                let err = (a - b).abs() / 1f64.max(a.abs()).max(b.abs());
                if err > report.max_rel_err || !err.is_finite() {
                    report.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
                    report.worst = format!(
                        "{name} at t={t}, x={:?}, u={:?}",
                        x.as_slice(),
                        u.as_slice()
                    );
                }
            }
        };

        let f_col = |x: &DVector<f64>, u: &DVector<f64>| system.drift(t, x, u);
        record(
            "drift_dx".into(),
            &system.drift_dx(t, x, u),
            &fd_x(x, |x| f_col(x, u)),
        );
        record(
            "drift_du".into(),
            &system.drift_du(t, x, u),
            &fd_u(u, x.len(), |u| f_col(x, u)),
        );
        for i in 0..system.noise_dim() {
            let g_col = |x: &DVector<f64>, u: &DVector<f64>| {
                system.diffusion(t, x, u).column(i).into_owned()
            };
            let c_col = |x: &DVector<f64>, u: &DVector<f64>| {
                system.ito_correction(t, x, u).column(i).into_owned()
            };
            record(
                format!("diffusion_dx[{i}]"),
                &system.diffusion_dx(i, t, x, u),
                &fd_x(x, |x| g_col(x, u)),
            );
            record(
                format!("diffusion_du[{i}]"),
                &system.diffusion_du(i, t, x, u),
                &fd_u(u, x.len(), |u| g_col(x, u)),
            );
            record(
                format!("ito_correction_dx[{i}]"),
                &system.ito_correction_dx(i, t, x, u),
                &fd_x(x, |x| c_col(x, u)),
            );
            record(
                format!("ito_correction_du[{i}]"),
                &system.ito_correction_du(i, t, x, u),
                &fd_u(u, x.len(), |u| c_col(x, u)),
            );
        }
    }
    report
}

fn fd_x(x: &DVector<f64>, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        out.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    out
}

fn fd_u(u: &DVector<f64>, rows: usize, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, u.len());
    for j in 0..u.len() {
        let h = 1e-6 * u[j].abs().max(1.0);
        let mut up = u.clone();
        up[j] += h;
        let mut um = u.clone();
        um[j] -= h;
        out.set_column(j, &((f(&up) - f(&um)) / (2.0 * h)));
    }
    out
}
