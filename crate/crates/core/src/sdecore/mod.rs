//! Controlled SDE systems `dx = f(t,x,u) dt + g(t,x,u) dB` and their
//! numerical integration under either calculus.
//!
//! Systems supply analytic first partials of drift and diffusion. The
//! Milstein correction `c^i = (∂g^i/∂x) g^i` and its partials are also part
//! of the interface: Milstein steps, calculus conversion and the exact
//! linearization of a Milstein step all need them.

mod check;
mod convert;
mod integrate;
mod scheme;
pub mod study;
pub mod systems;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;

pub use check::{check_partials, random_points, PartialsCheck, SamplePoint};
pub use convert::{convert_calculus, Converted};
pub use integrate::{integrate, integrate_backward, Trajectory};
pub use scheme::{
    advance, euler_heun_step, euler_maruyama_step, milstein_step, step_jacobian, Scheme,
    StepJacobian,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calculus {
    Ito,
    Stratonovich,
}

impl Calculus {
    pub fn opposite(self) -> Self {
        match self {
            Calculus::Ito => Calculus::Stratonovich,
            Calculus::Stratonovich => Calculus::Ito,
        }
    }
}

impl fmt::Display for Calculus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Calculus::Ito => "ito",
            Calculus::Stratonovich => "stratonovich",
        })
    }
}

impl FromStr for Calculus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "ito" => Ok(Calculus::Ito),
            "stratonovich" => Ok(Calculus::Stratonovich),
            other => Err(Error::Config(format!("unknown calculus `{other}`"))),
        }
    }
}

/// Shape of the diffusion matrix, which decides Milstein applicability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseStructure {
    /// One noise channel.
    Scalar,
    /// `n_ξ = n_x` and channel `i` only drives (and only reads) state `i`.
    Diagonal,
    General,
}

pub trait ControlledSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn calculus(&self) -> Calculus;

    fn noise_structure(&self) -> NoiseStructure {
        if self.noise_dim() == 1 {
            NoiseStructure::Scalar
        } else {
            NoiseStructure::General
        }
    }

    /// `f(t, x, u)`, length `n_x`.
    fn drift(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `g(t, x, u)`, shape `n_x × n_ξ`.
    fn diffusion(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    fn drift_dx(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    fn drift_du(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    /// `∂g^{(i)}/∂x`, shape `n_x × n_x`.
    fn diffusion_dx(&self, i: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    /// `∂g^{(i)}/∂u`, shape `n_x × n_u`.
    fn diffusion_du(&self, i: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    /// Column `i` holds `(∂g^{(i)}/∂x) g^{(i)}`.
    fn ito_correction(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let g = self.diffusion(t, x, u);
        let mut out = DMatrix::zeros(self.state_dim(), self.noise_dim());
        for i in 0..self.noise_dim() {
            out.set_column(i, &(self.diffusion_dx(i, t, x, u) * g.column(i)));
        }
        out
    }

    /// `∂c^{(i)}/∂x`. The default differentiates [`Self::ito_correction`]
    /// numerically; systems shipped with the crate override it analytically.
    fn ito_correction_dx(
        &self,
        i: usize,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let d = (self.ito_correction(t, &xp, u).column(i)
                - self.ito_correction(t, &xm, u).column(i))
                / (2.0 * h);
            out.set_column(j, &d);
        }
        out
    }

    /// `∂c^{(i)}/∂u`, numeric by default like [`Self::ito_correction_dx`].
    fn ito_correction_du(
        &self,
        i: usize,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        let m = self.control_dim();
        let mut out = DMatrix::zeros(self.state_dim(), m);
        for j in 0..m {
            let h = 1e-6 * u[j].abs().max(1.0);
            let mut up = u.clone();
            up[j] += h;
            let mut um = u.clone();
            um[j] -= h;
            let d = (self.ito_correction(t, x, &up).column(i)
                - self.ito_correction(t, x, &um).column(i))
                / (2.0 * h);
            out.set_column(j, &d);
        }
        out
    }
}

impl<S: ControlledSystem + ?Sized> ControlledSystem for &S {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn calculus(&self) -> Calculus {
        (**self).calculus()
    }
    fn noise_structure(&self) -> NoiseStructure {
        (**self).noise_structure()
    }
    fn drift(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).drift(t, x, u)
    }
    fn diffusion(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).diffusion(t, x, u)
    }
    fn drift_dx(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).drift_dx(t, x, u)
    }
    fn drift_du(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).drift_du(t, x, u)
    }
    fn diffusion_dx(&self, i: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).diffusion_dx(i, t, x, u)
    }
    fn diffusion_du(&self, i: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).diffusion_du(i, t, x, u)
    }
    fn ito_correction(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).ito_correction(t, x, u)
    }
    fn ito_correction_dx(
        &self,
        i: usize,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        (**self).ito_correction_dx(i, t, x, u)
    }
    fn ito_correction_du(
        &self,
        i: usize,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        (**self).ito_correction_du(i, t, x, u)
    }
}
