//! Small reference systems with closed forms or known structure, used by
//! tests, the convergence study and the gradient checker.

use nalgebra::{DMatrix, DVector};

use super::{Calculus, ControlledSystem, NoiseStructure};

/// Geometric Brownian motion `dx = μx dt + σx dB` (Itô, no control).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gbm {
    pub mu: f64,
    pub sigma: f64,
}

impl Gbm {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }

    /// `x_0 exp((μ - σ²/2) t + σ B_t)`.
    pub fn exact(&self, x0: f64, t: f64, b_t: f64) -> f64 {
        x0 * ((self.mu - 0.5 * self.sigma * self.sigma) * t + self.sigma * b_t).exp()
    }
}

impl ControlledSystem for Gbm {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        0
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn calculus(&self) -> Calculus {
        Calculus::Ito
    }
    fn drift(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x * self.mu
    }
    fn diffusion(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.sigma * x[0])
    }
    fn drift_dx(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.mu)
    }
    fn drift_du(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 0)
    }
    fn diffusion_dx(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.sigma)
    }
    fn diffusion_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(1, 0)
    }
    fn ito_correction(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.sigma * self.sigma * x[0])
    }
    fn ito_correction_dx(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.sigma * self.sigma)
    }
    fn ito_correction_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(1, 0)
    }
}

/// Scalar `dx = (a x + c) dt + b dB` with constant (additive) noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOde {
    pub rate: f64,
    pub offset: f64,
    pub noise: f64,
}

impl LinearOde {
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            offset: 0.0,
            noise: 0.0,
        }
    }

    pub fn constant_drift(offset: f64) -> Self {
        Self {
            rate: 0.0,
            offset,
            noise: 0.0,
        }
    }

    pub fn with_additive_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }
}

impl ControlledSystem for LinearOde {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        0
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn calculus(&self) -> Calculus {
        Calculus::Ito
    }
    fn drift(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.rate * x[0] + self.offset)
    }
    fn diffusion(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.noise)
    }
    fn drift_dx(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.rate)
    }
    fn drift_du(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 0)
    }
    fn diffusion_dx(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
    fn diffusion_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(1, 0)
    }
    fn ito_correction(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
    fn ito_correction_dx(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
    fn ito_correction_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(1, 0)
    }
}

/// Scalar GBM whose growth rate and volatility are shifted by a scalar
/// control: `dx = (μ + a u) x dt + (σ + b u) x dB` (Itô).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlledGbm {
    pub mu: f64,
    pub sigma: f64,
    pub drift_gain: f64,
    pub vol_gain: f64,
}

impl ControlledGbm {
    pub fn new(mu: f64, sigma: f64, drift_gain: f64, vol_gain: f64) -> Self {
        Self {
            mu,
            sigma,
            drift_gain,
            vol_gain,
        }
    }

    /// Parameters of the registered gradient-check problem.
    pub fn test_problem() -> Self {
        Self::new(0.1, 0.3, 0.8, 0.2)
    }

    /// `ẋ = u x`, deterministic.
    pub fn growth() -> Self {
        Self::new(0.0, 0.0, 1.0, 0.0)
    }

    fn vol(&self, u: &DVector<f64>) -> f64 {
        self.sigma + self.vol_gain * u[0]
    }
}

impl ControlledSystem for ControlledGbm {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn calculus(&self) -> Calculus {
        Calculus::Ito
    }
    fn drift(&self, _t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, (self.mu + self.drift_gain * u[0]) * x[0])
    }
    fn diffusion(&self, _t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.vol(u) * x[0])
    }
    fn drift_dx(&self, _t: f64, _x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.mu + self.drift_gain * u[0])
    }
    fn drift_du(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.drift_gain * x[0])
    }
    fn diffusion_dx(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.vol(u))
    }
    fn diffusion_du(
        &self,
        _i: usize,
        _t: f64,
        x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.vol_gain * x[0])
    }
    fn ito_correction(&self, _t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.vol(u).powi(2) * x[0])
    }
    fn ito_correction_dx(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.vol(u).powi(2))
    }
    fn ito_correction_du(
        &self,
        _i: usize,
        _t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 2.0 * self.vol_gain * self.vol(u) * x[0])
    }
}

/// Independent GBMs, one noise channel per coordinate (diagonal noise).
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGbm {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl DiagonalGbm {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        assert_eq!(mu.len(), sigma.len());
        Self { mu, sigma }
    }
}

impl ControlledSystem for DiagonalGbm {
    fn state_dim(&self) -> usize {
        self.mu.len()
    }
    fn control_dim(&self) -> usize {
        0
    }
    fn noise_dim(&self) -> usize {
        self.mu.len()
    }
    fn calculus(&self) -> Calculus {
        Calculus::Ito
    }
    fn noise_structure(&self) -> NoiseStructure {
        NoiseStructure::Diagonal
    }
    fn drift(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| self.mu[i] * x[i])
    }
    fn diffusion(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(x.len(), |i, _| self.sigma[i] * x[i]))
    }
    fn drift_dx(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(&self.mu))
    }
    fn drift_du(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.state_dim(), 0)
    }
    fn diffusion_dx(
        &self,
        i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut m = DMatrix::zeros(n, n);
        m[(i, i)] = self.sigma[i];
        m
    }
    fn diffusion_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(self.state_dim(), 0)
    }
    fn ito_correction_dx(
        &self,
        i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut m = DMatrix::zeros(n, n);
        m[(i, i)] = self.sigma[i] * self.sigma[i];
        m
    }
    fn ito_correction_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(self.state_dim(), 0)
    }
}

/// Two states driven by two non-commuting noise channels:
/// `dx = -x/2 dt + s [x₂ dB₁, x₁ dB₂]` (Itô). Milstein does not apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledNoise {
    pub strength: f64,
}

impl CoupledNoise {
    pub fn new(strength: f64) -> Self {
        Self { strength }
    }
}

impl ControlledSystem for CoupledNoise {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        0
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn calculus(&self) -> Calculus {
        Calculus::Ito
    }
    fn noise_structure(&self) -> NoiseStructure {
        NoiseStructure::General
    }
    fn drift(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x * -0.5
    }
    fn diffusion(&self, _t: f64, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let s = self.strength;
        DMatrix::from_row_slice(2, 2, &[s * x[1], 0.0, 0.0, s * x[0]])
    }
    fn drift_dx(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * -0.5
    }
    fn drift_du(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 0)
    }
    fn diffusion_dx(
        &self,
        i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        let s = self.strength;
        if i == 0 {
            DMatrix::from_row_slice(2, 2, &[0.0, s, 0.0, 0.0])
        } else {
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, s, 0.0])
        }
    }
    fn diffusion_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(2, 0)
    }
    fn ito_correction(&self, _t: f64, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn ito_correction_dx(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn ito_correction_du(
        &self,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> DMatrix<f64> {
        DMatrix::zeros(2, 0)
    }
}
