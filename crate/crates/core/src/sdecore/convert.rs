use nalgebra::{DMatrix, DVector};

use super::{Calculus, ControlledSystem, NoiseStructure};

/// A system re-expressed in the opposite calculus.
///
/// Sign convention: with `c = Σ_i (∂g^{(i)}/∂x) g^{(i)}`,
/// `f_strat = f_ito - c/2` and `f_ito = f_strat + c/2`. The diffusion is
/// unchanged.
#[derive(Debug, Clone)]
pub struct Converted<S> {
    inner: S,
}

pub fn convert_calculus<S: ControlledSystem>(system: S) -> Converted<S> {
    Converted { inner: system }
}

impl<S: ControlledSystem> Converted<S> {
    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }

    /// `+1/2` when moving to Itô, `-1/2` when moving to Stratonovich.
    fn factor(&self) -> f64 {
        match self.inner.calculus() {
            Calculus::Ito => -0.5,
            Calculus::Stratonovich => 0.5,
        }
    }
}

impl<S: ControlledSystem> ControlledSystem for Converted<S> {
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
        self.inner.calculus().opposite()
    }
    fn noise_structure(&self) -> NoiseStructure {
        self.inner.noise_structure()
    }

    fn drift(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let c = self.inner.ito_correction(t, x, u);
        let mut f = self.inner.drift(t, x, u);
        for col in c.column_iter() {
            f.axpy(self.factor(), &col, 1.0);
        }
        f
    }

    fn diffusion(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.inner.diffusion(t, x, u)
    }

    fn drift_dx(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut d = self.inner.drift_dx(t, x, u);
        for i in 0..self.noise_dim() {
            d += self.inner.ito_correction_dx(i, t, x, u) * self.factor();
        }
        d
    }

    fn drift_du(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut d = self.inner.drift_du(t, x, u);
        for i in 0..self.noise_dim() {
            d += self.inner.ito_correction_du(i, t, x, u) * self.factor();
        }
        d
    }

    fn diffusion_dx(&self, i: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.inner.diffusion_dx(i, t, x, u)
    }

    fn diffusion_du(&self, i: usize, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.inner.diffusion_du(i, t, x, u)
    }

    fn ito_correction(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.inner.ito_correction(t, x, u)
    }

    fn ito_correction_dx(
        &self,
        i: usize,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        self.inner.ito_correction_dx(i, t, x, u)
    }

    fn ito_correction_du(
        &self,
        i: usize,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        self.inner.ito_correction_du(i, t, x, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdecore::systems::{ControlledGbm, Gbm, LinearOde};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn additive_noise_only_flips_tag() {
        let sys = LinearOde::new(-0.7).with_additive_noise(0.3);
        let conv = convert_calculus(&sys);
        assert_eq!(conv.calculus(), Calculus::Stratonovich);
        let (x, u) = (v(&[1.3]), v(&[]));
        assert_eq!(conv.drift(0.2, &x, &u), sys.drift(0.2, &x, &u));
    }

    #[test]
    fn gbm_correction_is_half_sigma_squared_x() {
        let (mu, sigma) = (0.23, 0.18);
        let sys = Gbm::new(mu, sigma);
        let conv = convert_calculus(&sys);
        for x in [0.5, 1.0, 2.0, -1.5] {
            let f = conv.drift(0.0, &v(&[x]), &v(&[]))[0];
            let expected = mu * x - 0.5 * sigma * sigma * x;
            assert!((f - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_recovers_drift() {
        let sys = ControlledGbm::test_problem();
        let back = convert_calculus(convert_calculus(&sys));
        assert_eq!(back.calculus(), Calculus::Ito);
        for k in 0..50 {
            let x = v(&[0.3 + 0.05 * k as f64]);
            let u = v(&[-0.4 + 0.02 * k as f64]);
            let a = sys.drift(0.1, &x, &u);
            let b = back.drift(0.1, &x, &u);
            assert!((a - b).amax() <= 1e-12);
            let da = sys.drift_dx(0.1, &x, &u) - back.drift_dx(0.1, &x, &u);
            assert!(da.amax() <= 1e-12);
        }
    }
}
