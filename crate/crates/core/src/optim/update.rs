use nalgebra::DVector;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sensitivity::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step_count: u64,
    pub learning_rate: f64,
    /// Learning rate at step `k` is `learning_rate / (1 + lr_decay · k)`.
    pub lr_decay: f64,
    pub adam_m: DVector<f64>,
    pub adam_v: DVector<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub direction: Direction,
}

impl OptimizerState {
    pub fn new(
        kind: OptimizerKind,
        learning_rate: f64,
        direction: Direction,
        n_params: usize,
    ) -> Self {
        Self {
            kind,
            step_count: 0,
            learning_rate,
            lr_decay: 0.0,
            adam_m: DVector::zeros(n_params),
            adam_v: DVector::zeros(n_params),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            direction,
        }
    }

    pub fn sgd(learning_rate: f64, direction: Direction, n_params: usize) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate, direction, n_params)
    }

    pub fn adam(learning_rate: f64, direction: Direction, n_params: usize) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate, direction, n_params)
    }

    pub fn current_learning_rate(&self) -> f64 {
        self.learning_rate / (1.0 + self.lr_decay * self.step_count as f64)
    }

    pub fn update(&mut self, theta: &DVector<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
        match self.kind {
            OptimizerKind::Sgd => self.sgd_update(theta, grad),
            OptimizerKind::Adam => self.adam_update(theta, grad),
        }
    }

    /// `θ' = θ ∓ η·grad`, minus when minimizing.
    pub fn sgd_update(
        &mut self,
        theta: &DVector<f64>,
        grad: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let g = self.descent_gradient(theta, grad)?;
        let lr = self.current_learning_rate();
        self.step_count += 1;
        Ok(theta - g * lr)
    }

    pub fn adam_update(
        &mut self,
        theta: &DVector<f64>,
        grad: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let g = self.descent_gradient(theta, grad)?;
        if self.adam_m.len() != g.len() {
            return Err(Error::Dimension {
                what: "Adam moments",
                expected: self.adam_m.len(),
                got: g.len(),
            });
        }
        let lr = self.current_learning_rate();
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        self.adam_m = &self.adam_m * b1 + &g * (1.0 - b1);
        self.adam_v = &self.adam_v * b2 + g.component_mul(&g) * (1.0 - b2);
        let m_scale = 1.0 / (1.0 - b1.powi(t));
        let v_scale = 1.0 / (1.0 - b2.powi(t));
        let step = self.adam_m.zip_map(&self.adam_v, |m, v| {
            m * m_scale / ((v * v_scale).sqrt() + self.epsilon)
        });
        Ok(theta - step * lr)
    }

    /// Gradient of the quantity being minimized.
    fn descent_gradient(&self, theta: &DVector<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != grad.len() {
            return Err(Error::Dimension {
                what: "gradient",
                expected: theta.len(),
                got: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        Ok(match self.direction {
            Direction::Minimize => grad.clone(),
            Direction::Maximize => -grad,
        })
    }
}
