use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, DifferentiablePolicy, Policy};
use crate::error::{Error, Result};

/// Affine map `x ↦ A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Fully connected feed-forward network
/// `ℓ_L ∘ φ_out ∘ … ∘ φ ∘ ℓ_0`, with `φ` on hidden layers and a separate
/// output activation after the last affine map.
///
/// Parameters are flattened layer by layer: weights in row-major order,
/// then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    hidden: Activation,
    output: Activation,
    time_input: bool,
    seed: u64,
}

struct Tape {
    /// `inputs[k]` feeds layer `k`; `pre[k]` is its affine output.
    inputs: Vec<DVector<f64>>,
    pre: Vec<DVector<f64>>,
}

impl MlpPolicy {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn init(
        layer_dims: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut weights = DMatrix::zeros(fan_out, fan_in);
                for r in 0..fan_out {
                    for c in 0..fan_in {
                        weights[(r, c)] = rng.random_range(-bound..bound);
                    }
                }
                Layer {
                    weights,
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            hidden,
            output,
            time_input: false,
            seed,
        })
    }

    /// All-zero parameters.
    pub fn zeros(layer_dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        let mut p = Self::init(layer_dims, hidden, output, 0)?;
        let n = p.n_params();
        p.set_params(&DVector::zeros(n))?;
        Ok(p)
    }

    pub fn from_layers(layers: Vec<Layer>, hidden: Activation, output: Activation) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("network needs at least one layer".into()))?;
        let mut dims = vec![first.weights.ncols()];
        for l in &layers {
            if l.weights.ncols() != *dims.last().unwrap() || l.bias.len() != l.weights.nrows() {
                return Err(Error::Config("inconsistent layer shapes".into()));
            }
            dims.push(l.weights.nrows());
        }
        Ok(Self {
            layer_dims: dims,
            layers,
            hidden,
            output,
            time_input: false,
            seed: 0,
        })
    }

    /// Appends `t` as the last network input; the state then fills the
    /// first `n_in - 1` inputs.
    pub fn with_time_input(mut self, on: bool) -> Result<Self> {
        if on && self.layer_dims[0] < 2 {
            return Err(Error::Config(
                "time input needs at least two network inputs".into(),
            ));
        }
        self.time_input = on;
        Ok(self)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn time_input(&self) -> bool {
        self.time_input
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Network output for a raw input vector.
    pub fn eval(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(input)?;
        Ok(self.forward(input, None))
    }

    /// `cotᵀ ∂eval/∂input`.
    pub fn vjp_input(
        &self,
        input: &DVector<f64>,
        cotangent: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_input(input)?;
        self.check_cotangent(cotangent)?;
        Ok(self.backward(input, cotangent, false).0)
    }

    /// `cotᵀ ∂eval/∂θ` in flattened parameter order.
    pub fn vjp_params(
        &self,
        input: &DVector<f64>,
        cotangent: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_input(input)?;
        self.check_cotangent(cotangent)?;
        Ok(self.backward(input, cotangent, true).1)
    }

    /// Both products from one forward pass.
    pub fn vjp_both(
        &self,
        input: &DVector<f64>,
        cotangent: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_input(input)?;
        self.check_cotangent(cotangent)?;
        Ok(self.backward(input, cotangent, true))
    }

    fn check_input(&self, input: &DVector<f64>) -> Result<()> {
        if input.len() != self.n_inputs() {
            return Err(Error::Dimension {
                what: "policy input",
                expected: self.n_inputs(),
                got: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("policy input must be finite".into()));
        }
        Ok(())
    }

    fn check_cotangent(&self, cot: &DVector<f64>) -> Result<()> {
        if cot.len() != self.n_outputs() {
            return Err(Error::Dimension {
                what: "policy cotangent",
                expected: self.n_outputs(),
                got: cot.len(),
            });
        }
        Ok(())
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn forward(&self, input: &DVector<f64>, mut tape: Option<&mut Tape>) -> DVector<f64> {
        let mut a = input.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.bias + &layer.weights * &a;
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(a);
                t.pre.push(z.clone());
            }
            let act = self.activation(k);
            z.apply(|v| *v = act.value(*v));
            a = z;
        }
        a
    }

    fn backward(
        &self,
        input: &DVector<f64>,
        cotangent: &DVector<f64>,
        want_params: bool,
    ) -> (DVector<f64>, DVector<f64>) {
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        self.forward(input, Some(&mut tape));

        let mut grad = if want_params {
            DVector::zeros(self.n_params())
        } else {
            DVector::zeros(0)
        };
        let mut offset = self.n_params();
        let mut delta = cotangent.clone();
        for k in (0..self.layers.len()).rev() {
            let act = self.activation(k);
            delta.zip_apply(&tape.pre[k], |d, z| *d *= act.derivative(z));
            let layer = &self.layers[k];
            let (rows, cols) = layer.weights.shape();
            if want_params {
                offset -= rows * cols + rows;
                let a = &tape.inputs[k];
                for r in 0..rows {
                    for c in 0..cols {
                        grad[offset + r * cols + c] = delta[r] * a[c];
                    }
                    grad[offset + rows * cols + r] = delta[r];
                }
            }
            delta = layer.weights.tr_mul(&delta);
        }
        (delta, grad)
    }

    fn network_input(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        if self.time_input {
            let mut v = DVector::zeros(x.len() + 1);
            v.rows_mut(0, x.len()).copy_from(x);
            v[x.len()] = t;
            v
        } else {
            x.clone()
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(
            "layer_dims needs at least an input and an output width".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::Config("layer widths must be positive".into()));
    }
    Ok(())
}

/// `Σ_k (n_{k+1} n_k + n_{k+1})`.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Policy for MlpPolicy {
    fn state_dim(&self) -> usize {
        self.n_inputs() - usize::from(self.time_input)
    }

    fn control_dim(&self) -> usize {
        self.n_outputs()
    }

    fn control(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.forward(&self.network_input(t, x), None)
    }
}

impl DifferentiablePolicy for MlpPolicy {
    fn n_params(&self) -> usize {
        param_count(&self.layer_dims)
    }

    fn params(&self) -> DVector<f64> {
        let mut theta = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            for r in 0..l.weights.nrows() {
                theta.extend(l.weights.row(r).iter());
            }
            theta.extend(l.bias.iter());
        }
        DVector::from_vec(theta)
    }

    fn set_params(&mut self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Dimension {
                what: "policy parameters",
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        let mut i = 0;
        for l in &mut self.layers {
            let (rows, cols) = l.weights.shape();
            for r in 0..rows {
                for c in 0..cols {
                    l.weights[(r, c)] = theta[i];
                    i += 1;
                }
            }
            for r in 0..rows {
                l.bias[r] = theta[i];
                i += 1;
            }
        }
        Ok(())
    }

    fn vjp(
        &self,
        t: f64,
        x: &DVector<f64>,
        cotangent: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let (dx, dtheta) = self.backward(&self.network_input(t, x), cotangent, true);
        if self.time_input {
            (dx.rows(0, x.len()).into_owned(), dtheta)
        } else {
            (dx, dtheta)
        }
    }
}
