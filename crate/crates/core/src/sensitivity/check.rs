use std::path::Path;

use nalgebra::DVector;

use super::{
    adjoint_gradient, finite_difference_gradient, forward_sensitivity, CostFunctional,
    GradientReport, GradientSettings,
};
use crate::csvio::{fmt_f64, CsvWriter};
use crate::error::Result;
use crate::policy::DifferentiablePolicy;
use crate::sdecore::ControlledSystem;
use crate::wiener::WienerPath;

/// Similarity of two gradient vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientAgreement {
    pub cosine: f64,
    /// Largest `|a_j - b_j| / max(|a_j|, |b_j|)` over coordinates above the
    /// magnitude floor.
    pub max_rel_err: f64,
    pub worst_coord: Option<usize>,
    pub n_compared: usize,
}

impl GradientAgreement {
    pub fn passed(&self, rel_tol: f64, min_cosine: f64) -> bool {
        self.cosine >= min_cosine && self.max_rel_err <= rel_tol
    }
}

pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn compare_gradients(
    a: &DVector<f64>,
    b: &DVector<f64>,
    magnitude_floor: f64,
) -> GradientAgreement {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let (na, nb) = (a.norm(), b.norm());
    let cosine = match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (false, false) => a.dot(b) / (na * nb),
        _ => 0.0,
    };
    let mut max_rel_err = 0.0;
    let mut worst_coord = None;
    let mut n_compared = 0;
    for j in 0..a.len() {
        if a[j].abs().max(b[j].abs()) <= magnitude_floor {
            continue;
        }
        n_compared += 1;
        let e = rel_err(a[j], b[j]);
        if worst_coord.is_none() || e > max_rel_err {
            max_rel_err = e;
            worst_coord = Some(j);
        }
    }
    GradientAgreement {
        cosine,
        max_rel_err,
        worst_coord,
        n_compared,
    }
}

/// All three estimators on one path and their pairwise agreement.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub forward: GradientReport,
    pub adjoint: GradientReport,
    pub fd: GradientReport,
    pub forward_vs_adjoint: GradientAgreement,
    pub fd_vs_adjoint: GradientAgreement,
    pub fd_vs_forward: GradientAgreement,
}

impl GradCheck {
    pub fn from_reports(
        forward: GradientReport,
        adjoint: GradientReport,
        fd: GradientReport,
        settings: &GradientSettings,
    ) -> Self {
        let pair =
            |a: &DVector<f64>, b: &DVector<f64>| compare_gradients(a, b, settings.floor_for(a, b));
        let forward_vs_adjoint = pair(&forward.grad, &adjoint.grad);
        let fd_vs_adjoint = pair(&fd.grad, &adjoint.grad);
        let fd_vs_forward = pair(&fd.grad, &forward.grad);
        Self {
            forward,
            adjoint,
            fd,
            forward_vs_adjoint,
            fd_vs_adjoint,
            fd_vs_forward,
        }
    }

    pub fn pairs(&self) -> [(&'static str, GradientAgreement); 3] {
        [
            ("forward/adjoint", self.forward_vs_adjoint),
            ("fd/adjoint", self.fd_vs_adjoint),
            ("fd/forward", self.fd_vs_forward),
        ]
    }

    pub fn passed(&self, rel_tol: f64, min_cosine: f64) -> bool {
        self.pairs()
            .iter()
            .all(|(_, a)| a.passed(rel_tol, min_cosine))
    }

    /// Pair with the largest coordinate error.
    pub fn worst(&self) -> (&'static str, GradientAgreement) {
        self.pairs()
            .into_iter()
            .max_by(|a, b| a.1.max_rel_err.total_cmp(&b.1.max_rel_err))
            .expect("three pairs")
    }
}

pub fn grad_check<S, P, C>(
    system: &S,
    policy: &P,
    cost: &C,
    x0: &DVector<f64>,
    path: &WienerPath,
    settings: &GradientSettings,
) -> Result<GradCheck>
where
    S: ControlledSystem + ?Sized,
    P: DifferentiablePolicy + Clone,
    C: CostFunctional + ?Sized,
{
    let forward = forward_sensitivity(system, policy, cost, x0, path, settings)?;
    let adjoint = adjoint_gradient(system, policy, cost, x0, path, settings)?;
    let fd = finite_difference_gradient(system, policy, cost, x0, path, settings)?;
    Ok(GradCheck::from_reports(forward, adjoint, fd, settings))
}

/// Columns: coord_index, fd, forward, adjoint, rel_err_fa, rel_err_fd.
pub fn write_grad_check_csv(path: &Path, check: &GradCheck) -> Result<()> {
    let mut out = CsvWriter::create(
        path,
        &[
            "coord_index",
            "fd",
            "forward",
            "adjoint",
            "rel_err_fa",
            "rel_err_fd",
        ],
    )?;
    let (fd, fw, ad) = (&check.fd.grad, &check.forward.grad, &check.adjoint.grad);
    for j in 0..fd.len() {
        out.row(&[
            j.to_string(),
            fmt_f64(fd[j]),
            fmt_f64(fw[j]),
            fmt_f64(ad[j]),
            fmt_f64(rel_err(fw[j], ad[j])),
            fmt_f64(rel_err(fd[j], ad[j])),
        ])?;
    }
    out.finish()
}
