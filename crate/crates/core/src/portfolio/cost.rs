use nalgebra::DVector;

use super::MarketParams;
use crate::sensitivity::{CostFunctional, Direction};

/// `(ln z, 1/z)` for `z ≥ δ`, else the second-order Taylor continuation
/// at `δ`. With `δ = 0` the value is NaN or `-inf` past the line, which
/// the cost evaluation reports as divergence.
fn barrier(z: f64, delta: f64) -> (f64, f64) {
    if z >= delta || delta == 0.0 {
        (z.ln(), 1.0 / z)
    } else {
        let d = (z - delta) / delta;
        (delta.ln() + d - 0.5 * d * d, (1.0 - d) / delta)
    }
}

/// Risk-penalized portfolio value, maximized.
#[derive(Debug, Clone)]
pub struct PortfolioCost {
    params: MarketParams,
}

impl PortfolioCost {
    pub fn new(params: MarketParams) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    /// `V + (1 - α) S`.
    fn liquidation_value(&self, x: &DVector<f64>) -> f64 {
        x[1] + (1.0 - self.params.alpha) * x[0]
    }
}

impl CostFunctional for PortfolioCost {
    fn running(&self, t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> f64 {
        let p = &self.params;
        let (s, v) = (x[0], x[1]);
        let mut g = p.r.at(t) * v + p.mu.at(t) * s - p.nu * s * s * p.sigma.at(t);
        let beta = p.effective_barrier();
        if beta != 0.0 {
            g += beta * barrier(self.liquidation_value(x), p.barrier_smoothing).0;
        }
        g
    }

    fn terminal(&self, x: &DVector<f64>, _u: &DVector<f64>) -> f64 {
        let t = self.params.horizon;
        self.params.r.at(t) * x[1] + self.params.mu.at(t) * x[0]
    }

    fn running_dx(&self, t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let mut ds = p.mu.at(t) - 2.0 * p.nu * x[0] * p.sigma.at(t);
        let mut dv = p.r.at(t);
        let beta = p.effective_barrier();
        if beta != 0.0 {
            let w = beta * barrier(self.liquidation_value(x), p.barrier_smoothing).1;
            ds += w * (1.0 - p.alpha);
            dv += w;
        }
        DVector::from_column_slice(&[ds, dv])
    }

    fn running_du(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }

    fn terminal_dx(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        let t = self.params.horizon;
        DVector::from_column_slice(&[self.params.mu.at(t), self.params.r.at(t)])
    }

    fn terminal_du(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }

    fn direction(&self) -> Direction {
        Direction::Maximize
    }
}
