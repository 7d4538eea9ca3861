//! Learning feedback control policies for stochastic differential equations
//! by direct gradient descent on path-wise cost gradients.
//!
//! The pieces, bottom up:
//!
//! * [`wiener`]: reproducible Brownian paths on a uniform grid, and their
//!   time reversal.
//! * [`sdecore`]: controlled systems, Itô/Stratonovich conversion,
//!   Euler–Maruyama / Milstein / Euler–Heun integration forward and along the
//!   inverse flow.
//! * [`policy`]: feed-forward network policies with exact vector-Jacobian
//!   products.
//! * [`sensitivity`]: cost functionals and `dJ/dθ` by forward sensitivity,
//!   backward adjoint, or central finite differences.
//! * [`optim`]: batch-averaged gradients, SGD and Adam, the training loop.
//! * [`portfolio`]: two-asset portfolio with proportional transaction costs.
//! * [`config`]: the `key = value` run configuration.

pub mod config;
pub mod csvio;
pub mod error;
pub mod optim;
pub mod policy;
pub mod portfolio;
pub mod sdecore;
pub mod sensitivity;
pub mod wiener;

pub use nalgebra::{DMatrix, DVector};

pub use error::{Error, Result};
pub use policy::{Activation, ConstantPolicy, DifferentiablePolicy, MlpPolicy, Policy};
pub use sdecore::{Calculus, ControlledSystem, Scheme, Trajectory};
pub use sensitivity::{CostFunctional, Direction, Estimator, GradientReport};
pub use wiener::{BackwardWienerPath, TimeGrid, WienerPath};
