use nalgebra::{DMatrix, DVector};

use super::MarketParams;
use crate::sdecore::{Calculus, ControlledSystem, NoiseStructure};

#[derive(Debug, Clone)]
pub struct PortfolioSystem {
    params: MarketParams,
}

impl PortfolioSystem {
    pub fn new(params: MarketParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }
}

impl ControlledSystem for PortfolioSystem {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn calculus(&self) -> Calculus {
        Calculus::Ito
    }
    fn noise_structure(&self) -> NoiseStructure {
        NoiseStructure::Scalar
    }

    fn drift(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        DVector::from_column_slice(&[
            p.mu.at(t) * x[0] + u[0] - u[1],
            p.r.at(t) * x[1] - u[0] + (1.0 - p.alpha) * u[1],
        ])
    }

    fn diffusion(&self, t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[self.params.sigma.at(t) * x[0], 0.0])
    }

    fn drift_dx(&self, t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&[
            self.params.mu.at(t),
            self.params.r.at(t),
        ]))
    }

    fn drift_du(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0 - self.params.alpha])
    }

    fn diffusion_dx(
        &self,
        _i: usize,
        t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[self.params.sigma.at(t), 0.0, 0.0, 0.0])
    }

    fn diffusion_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }

    fn ito_correction(&self, t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let s = self.params.sigma.at(t);
        DMatrix::from_column_slice(2, 1, &[s * s * x[0], 0.0])
    }

    fn ito_correction_dx(
        &self,
        _i: usize,
        t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        let s = self.params.sigma.at(t);
        DMatrix::from_row_slice(2, 2, &[s * s, 0.0, 0.0, 0.0])
    }

    fn ito_correction_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
}
