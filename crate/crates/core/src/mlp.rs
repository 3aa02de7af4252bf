//! Fully connected feed-forward network: forward pass, parameter
//! flattening and the residual Jacobian used by the LM step.
//!
//! Parameter order (`flatten`): layer by layer, the weight matrix in
//! row-major order (`fan_out × fan_in`) followed by that layer's biases.
//!
//! Jacobian sign convention: `J = ∂f/∂β` and `r = y − f`, so the damped
//! normal equations read `(λD + JᵀJ)δ = Jᵀr`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{DenseMatrix, DenseVector, LinalgError};
use crate::lm::ResidualProvider;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlpError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("expected {expected} parameters, got {actual}")]
    ParameterCount { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenActivation {
    Sigmoid,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, Copy)]
enum Act {
    Sigmoid,
    Tanh,
    Linear,
}

impl Act {
    fn apply(self, z: f64) -> f64 {
        match self {
            Act::Sigmoid => sigmoid(z),
            Act::Tanh => z.tanh(),
            Act::Linear => z,
        }
    }

    /// Derivative expressed through the activation value `a = act(z)`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Act::Sigmoid => a * (1.0 - a),
            Act::Tanh => 1.0 - a * a,
            Act::Linear => 1.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl From<HiddenActivation> for Act {
    fn from(a: HiddenActivation) -> Self {
        match a {
            HiddenActivation::Sigmoid => Act::Sigmoid,
            HiddenActivation::Tanh => Act::Tanh,
        }
    }
}

impl From<OutputActivation> for Act {
    fn from(a: OutputActivation) -> Self {
        match a {
            OutputActivation::Sigmoid => Act::Sigmoid,
            OutputActivation::Linear => Act::Linear,
        }
    }
}

impl fmt::Display for HiddenActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HiddenActivation::Sigmoid => "sigmoid",
            HiddenActivation::Tanh => "tanh",
        })
    }
}

impl fmt::Display for OutputActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputActivation::Sigmoid => "sigmoid",
            OutputActivation::Linear => "linear",
        })
    }
}

impl FromStr for HiddenActivation {
    type Err = MlpError;

    fn from_str(s: &str) -> Result<Self, MlpError> {
        match s.trim() {
            "sigmoid" => Ok(Self::Sigmoid),
            "tanh" => Ok(Self::Tanh),
            other => Err(MlpError::UnknownActivation(other.to_string())),
        }
    }
}

impl FromStr for OutputActivation {
    type Err = MlpError;

    fn from_str(s: &str) -> Result<Self, MlpError> {
        match s.trim() {
            "sigmoid" => Ok(Self::Sigmoid),
            "linear" => Ok(Self::Linear),
            other => Err(MlpError::UnknownActivation(other.to_string())),
        }
    }
}

/// Layer sizes and activations; everything about a model except its
/// parameter values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpShape {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self, MlpError> {
        if layer_sizes.len() < 2 {
            return Err(MlpError::InvalidArchitecture(format!(
                "need at least an input and an output layer, got {} layer(s)",
                layer_sizes.len()
            )));
        }
        if let Some(i) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(MlpError::InvalidArchitecture(format!(
                "layer {i} has size 0"
            )));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation,
            output_activation,
        })
    }

    /// Sigmoid hidden layers and a sigmoid output.
    pub fn sigmoid(layer_sizes: Vec<usize>) -> Result<Self, MlpError> {
        Self::new(
            layer_sizes,
            HiddenActivation::Sigmoid,
            OutputActivation::Sigmoid,
        )
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn activation(&self, layer: usize) -> Act {
        if layer + 1 == self.num_layers() {
            self.output_activation.into()
        } else {
            self.hidden_activation.into()
        }
    }

    /// Offset in the flattened vector where layer `l` starts.
    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_layers());
        let mut acc = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(acc);
            acc += w[1] * (w[0] + 1);
        }
        offsets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_out × fan_in`
    pub weights: DenseMatrix,
    pub biases: DenseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    shape: MlpShape,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Uniform in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`, zero biases.
    #[default]
    UniformScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InitSpec {
    pub seed: u64,
    pub scheme: InitScheme,
}

impl InitSpec {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            scheme: InitScheme::UniformScaled,
        }
    }
}

/// Random model for `shape`, fully determined by `spec.seed`.
pub fn init_model(shape: &MlpShape, spec: InitSpec) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layers = shape
        .layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = match spec.scheme {
                InitScheme::UniformScaled => {
                    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..fan_in * fan_out)
                        .map(|_| rng.gen_range(-s..=s))
                        .collect()
                }
            };
            Layer {
                weights: DenseMatrix::new(fan_out, fan_in, weights)
                    .expect("bounded uniform draws are finite"),
                biases: DenseVector::zeros(fan_out),
            }
        })
        .collect();
    MlpModel {
        shape: shape.clone(),
        layers,
    }
}

/// Convenience wrapper over [`init_model`] taking raw layer sizes.
pub fn init_sigmoid_model(layer_sizes: &[usize], spec: InitSpec) -> Result<MlpModel, MlpError> {
    Ok(init_model(&MlpShape::sigmoid(layer_sizes.to_vec())?, spec))
}

impl MlpModel {
    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.shape.param_count()
    }

    pub fn forward(&self, x: &DenseVector) -> Result<DenseVector, MlpError> {
        self.check_input(x.len())?;
        let out = self.forward_slice(x.as_slice());
        Ok(DenseVector::new(out)?)
    }

    fn check_input(&self, len: usize) -> Result<(), MlpError> {
        if len != self.shape.input_dim() {
            return Err(MlpError::DimensionMismatch(format!(
                "input of length {len}, model expects {}",
                self.shape.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass without validation; `x.len()` must equal the input size.
    pub(crate) fn forward_slice(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            a = self.layer_forward(l, layer, &a);
        }
        a
    }

    fn layer_forward(&self, l: usize, layer: &Layer, input: &[f64]) -> Vec<f64> {
        let act = self.shape.activation(l);
        (0..layer.weights.rows())
            .map(|o| {
                let z = layer.biases[o]
                    + layer
                        .weights
                        .row(o)
                        .iter()
                        .zip(input)
                        .map(|(w, a)| w * a)
                        .sum::<f64>();
                act.apply(z)
            })
            .collect()
    }

    /// All layer activations, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let next = self.layer_forward(l, layer, acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    pub fn flatten(&self) -> DenseVector {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(layer.biases.as_slice());
        }
        DenseVector::new(out).expect("model parameters are finite")
    }

    pub fn unflatten(shape: &MlpShape, beta: &DenseVector) -> Result<MlpModel, MlpError> {
        let expected = shape.param_count();
        if beta.len() != expected {
            return Err(MlpError::ParameterCount {
                expected,
                actual: beta.len(),
            });
        }
        let mut rest = beta.as_slice();
        let mut layers = Vec::with_capacity(shape.num_layers());
        for w in shape.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let (wts, tail) = rest.split_at(fan_in * fan_out);
            let (bias, tail) = tail.split_at(fan_out);
            layers.push(Layer {
                weights: DenseMatrix::new(fan_out, fan_in, wts.to_vec())?,
                biases: DenseVector::new(bias.to_vec())?,
            });
            rest = tail;
        }
        Ok(MlpModel {
            shape: shape.clone(),
            layers,
        })
    }

    /// Residuals `r = y − f(X)` stacked sample-major (`i·m + k`) and the
    /// Jacobian `∂f/∂β` with one row per sample-output pair.
    ///
    /// Each row comes from a reverse pass seeded at a single output unit.
    pub fn residual_jacobian(
        &self,
        x: &DenseMatrix,
        y: &DenseMatrix,
    ) -> Result<(DenseVector, DenseMatrix), MlpError> {
        self.check_data(x, y)?;
        let m = self.shape.output_dim();
        let b = self.param_count();
        let offsets = self.shape.layer_offsets();
        let n_layers = self.layers.len();

        let mut r = Vec::with_capacity(x.rows() * m);
        let mut jac = vec![0.0; x.rows() * m * b];

        for i in 0..x.rows() {
            let acts = self.activations(x.row(i));
            let out = &acts[n_layers];
            for k in 0..m {
                r.push(y.get(i, k) - out[k]);

                let row = &mut jac[(i * m + k) * b..(i * m + k + 1) * b];
                // delta = ∂f_k/∂z for the current layer's pre-activations
                let mut delta = vec![0.0; m];
                delta[k] = self
                    .shape
                    .activation(n_layers - 1)
                    .derivative_from_output(out[k]);

                for l in (0..n_layers).rev() {
                    let layer = &self.layers[l];
                    let input = &acts[l];
                    let fan_in = input.len();
                    let off = offsets[l];
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let wrow = &mut row[off + o * fan_in..off + (o + 1) * fan_in];
                        for (g, a) in wrow.iter_mut().zip(input) {
                            *g = d * a;
                        }
                        row[off + layer.weights.rows() * fan_in + o] = d;
                    }
                    if l > 0 {
                        let act = self.shape.activation(l - 1);
                        delta = (0..fan_in)
                            .map(|p| {
                                let back: f64 = delta
                                    .iter()
                                    .enumerate()
                                    .map(|(o, d)| d * layer.weights.get(o, p))
                                    .sum();
                                back * act.derivative_from_output(input[p])
                            })
                            .collect();
                    }
                }
            }
        }

        Ok((
            DenseVector::new(r)?,
            DenseMatrix::new(x.rows() * m, b, jac)?,
        ))
    }

    /// Residuals only; cheaper than [`residual_jacobian`](Self::residual_jacobian).
    pub fn residuals(&self, x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseVector, MlpError> {
        self.check_data(x, y)?;
        let m = self.shape.output_dim();
        let mut r = Vec::with_capacity(x.rows() * m);
        for i in 0..x.rows() {
            let out = self.forward_slice(x.row(i));
            r.extend((0..m).map(|k| y.get(i, k) - out[k]));
        }
        Ok(DenseVector::new(r)?)
    }

    /// First output for every row of `x`.
    pub fn predict_scores(&self, x: &DenseMatrix) -> Result<DenseVector, MlpError> {
        self.check_input(x.cols())?;
        let scores = (0..x.rows())
            .map(|i| self.forward_slice(x.row(i))[0])
            .collect();
        Ok(DenseVector::new(scores)?)
    }

    fn check_data(&self, x: &DenseMatrix, y: &DenseMatrix) -> Result<(), MlpError> {
        self.check_input(x.cols())?;
        if y.cols() != self.shape.output_dim() || y.rows() != x.rows() {
            return Err(MlpError::DimensionMismatch(format!(
                "targets are {}x{}, expected {}x{}",
                y.rows(),
                y.cols(),
                x.rows(),
                self.shape.output_dim()
            )));
        }
        Ok(())
    }
}

/// Least-squares fit of an MLP to `(X, Y)`; adapts the network to the
/// generic LM loop.
#[derive(Debug, Clone)]
pub struct MlpProblem {
    shape: MlpShape,
    x: DenseMatrix,
    y: DenseMatrix,
}

impl MlpProblem {
    pub fn new(shape: MlpShape, x: DenseMatrix, y: DenseMatrix) -> Result<Self, MlpError> {
        if x.cols() != shape.input_dim() || y.cols() != shape.output_dim() || x.rows() != y.rows() {
            return Err(MlpError::DimensionMismatch(format!(
                "inputs {}x{} and targets {}x{} do not fit layers {:?}",
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols(),
                shape.layer_sizes()
            )));
        }
        Ok(Self { shape, x, y })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }
}

fn to_linalg(e: MlpError) -> LinalgError {
    match e {
        MlpError::Linalg(e) => e,
        other => LinalgError::DimensionMismatch(other.to_string()),
    }
}

impl ResidualProvider for MlpProblem {
    fn residual_len(&self) -> usize {
        self.x.rows() * self.shape.output_dim()
    }

    fn param_len(&self) -> usize {
        self.shape.param_count()
    }

    fn residuals(&self, beta: &DenseVector) -> Result<DenseVector, LinalgError> {
        MlpModel::unflatten(&self.shape, beta)
            .and_then(|m| m.residuals(&self.x, &self.y))
            .map_err(to_linalg)
    }

    fn residuals_and_jacobian(
        &self,
        beta: &DenseVector,
    ) -> Result<(DenseVector, DenseMatrix), LinalgError> {
        MlpModel::unflatten(&self.shape, beta)
            .and_then(|m| m.residual_jacobian(&self.x, &self.y))
            .map_err(to_linalg)
    }
}
