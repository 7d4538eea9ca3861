//! Feedback control policies `u = u_θ(t, x)`.
//!
//! Gradient estimators only need vector-Jacobian products, so a policy
//! exposes `vjp` returning the contraction of a control-space cotangent with
//! both the state Jacobian and the parameter Jacobian.

mod activation;
mod checkpoint;
mod mlp;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub use activation::Activation;
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use mlp::{Layer, MlpPolicy};

pub trait Policy: Send + Sync {
    /// Length of the state vector the policy reads.
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn control(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
}

pub trait DifferentiablePolicy: Policy {
    fn n_params(&self) -> usize;
    fn params(&self) -> DVector<f64>;
    fn set_params(&mut self, theta: &DVector<f64>) -> Result<()>;

    /// Returns `(cotᵀ ∂u/∂x, cotᵀ ∂u/∂θ)` at `(t, x)`.
    fn vjp(
        &self,
        t: f64,
        x: &DVector<f64>,
        cotangent: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>);
}

/// Open-loop constant control whose parameters are the control values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy {
    state_dim: usize,
    value: DVector<f64>,
}

impl ConstantPolicy {
    pub fn new(state_dim: usize, value: DVector<f64>) -> Self {
        Self { state_dim, value }
    }

    /// Policy for systems without a control input.
    pub fn none(state_dim: usize) -> Self {
        Self::new(state_dim, DVector::zeros(0))
    }
}

impl Policy for ConstantPolicy {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn control_dim(&self) -> usize {
        self.value.len()
    }

    fn control(&self, _t: f64, _x: &DVector<f64>) -> DVector<f64> {
        self.value.clone()
    }
}

impl DifferentiablePolicy for ConstantPolicy {
    fn n_params(&self) -> usize {
        self.value.len()
    }

    fn params(&self) -> DVector<f64> {
        self.value.clone()
    }

    fn set_params(&mut self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.value.len() {
            return Err(Error::Dimension {
                what: "constant policy parameters",
                expected: self.value.len(),
                got: theta.len(),
            });
        }
        self.value.copy_from(theta);
        Ok(())
    }

    fn vjp(
        &self,
        _t: f64,
        _x: &DVector<f64>,
        cotangent: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(self.state_dim), cotangent.clone())
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn control(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (**self).control(t, x)
    }
}
