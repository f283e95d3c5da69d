//! Fixed-topology multilayer perceptrons with reverse-mode gradients.
//!
//! A network is a chain of affine layers `y = act(W x + b)` with weights stored
//! `[out x in]`. The last layer is always linear. [`MlpNetwork::backward`]
//! returns gradients with respect to both parameters and inputs; the particle
//! flow needs the latter to differentiate the discriminator at each particle.

mod checkpoint;
mod optim;
mod schedule;

pub use checkpoint::{read_networks, write_networks, CHECKPOINT_VERSION};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use schedule::PiecewiseSchedule;

use serde::{Deserialize, Serialize};

use crate::error::{DdrError, Result};
use crate::matrix::Matrix;
use crate::rng::DdrRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Identity,
}

impl Activation {
    pub fn leaky(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(DdrError::invalid(format!(
                "LeakyReLU slope must lie in (0, 1), got {slope}"
            )));
        }
        Ok(Activation::LeakyRelu { slope })
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative evaluated at the pre-activation; the kink at 0 takes the left slope.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    layers: Vec<Layer>,
}

/// Per-layer parameter gradients, shaped like the network they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Intermediate values from a forward pass, consumed by [`MlpNetwork::backward_from`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `inputs[k]` is the input to layer `k`; the final entry is the network output.
    inputs: Vec<Matrix>,
    /// Pre-activation values of each layer.
    pre: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.inputs.last().expect("trace always holds the input")
    }
}

impl MlpNetwork {
    /// He-uniform weights, zero biases; `hidden` is used on every layer except
    /// the last, which is linear.
    pub fn new(layer_dims: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(DdrError::dim(format!(
                "a network needs at least input and output dims, got {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(DdrError::dim(format!(
                "layer dims must be positive, got {layer_dims:?}"
            )));
        }
        if let Activation::LeakyRelu { slope } = hidden {
            Activation::leaky(slope)?;
        }
        let mut rng = DdrRng::new(seed);
        let n_layers = layer_dims.len() - 1;
        let layers = layer_dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                Layer {
                    weight: rng.uniform_matrix(fan_out, fan_in, -bound, bound),
                    bias: vec![0.0; fan_out],
                    activation: if k + 1 == n_layers {
                        Activation::Identity
                    } else {
                        hidden
                    },
                }
            })
            .collect();
        Ok(MlpNetwork { layers })
    }

    /// Assembles a network from explicit layers, checking the chain invariants.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(DdrError::dim("network has no layers"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(DdrError::dim(format!(
                    "layer {k}: bias length {} != out dim {}",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if k > 0 && layers[k - 1].out_dim() != l.in_dim() {
                return Err(DdrError::dim(format!(
                    "layer {k} expects {} inputs but layer {} emits {}",
                    l.in_dim(),
                    k - 1,
                    layers[k - 1].out_dim()
                )));
            }
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(DdrError::dim(format!("layer {k} has a zero dimension")));
            }
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(DdrError::invalid("last layer must be linear (Identity)"));
        }
        Ok(MlpNetwork { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * l.weight.cols() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights (row-major) then bias.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(DdrError::dim(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weight.rows() * l.weight.cols();
            l.weight
                .as_mut_slice()
                .copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(DdrError::dim(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layers {
            let mut z = h.matmul_transposed(&l.weight)?;
            add_bias_activate(&mut z, &l.bias, l.activation);
            h = z;
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: &Matrix) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(x.clone());
        for l in &self.layers {
            let mut z = inputs.last().unwrap().matmul_transposed(&l.weight)?;
            add_bias_activate(&mut z, &l.bias, Activation::Identity);
            let h = z.map(|v| l.activation.apply(v));
            pre.push(z);
            inputs.push(h);
        }
        Ok(ForwardTrace { inputs, pre })
    }

    /// Gradients of `sum_ij grad_output_ij * forward(x)_ij` with respect to the
    /// parameters and to `x`.
    pub fn backward(&self, x: &Matrix, grad_output: &Matrix) -> Result<(Gradients, Matrix)> {
        let trace = self.forward_trace(x)?;
        self.backward_from(&trace, grad_output)
    }

    pub fn backward_from(
        &self,
        trace: &ForwardTrace,
        grad_output: &Matrix,
    ) -> Result<(Gradients, Matrix)> {
        let out = trace.output();
        if grad_output.shape() != out.shape() {
            return Err(DdrError::dim(format!(
                "grad_output is {}x{}, network output is {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let mut grads: Vec<LayerGradient> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.clone();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[k];
            if l.activation != Activation::Identity {
                for (d, z) in delta.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *d *= l.activation.derivative(*z);
                }
            }
            let weight = delta.transposed_matmul(&trace.inputs[k])?;
            let mut bias = vec![0.0; l.out_dim()];
            for r in delta.row_iter() {
                for (b, v) in bias.iter_mut().zip(r) {
                    *b += v;
                }
            }
            grads.push(LayerGradient { weight, bias });
            delta = delta.matmul(&l.weight)?;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// Gradient of the scalar network output with respect to each input row.
    pub fn input_gradient(&self, x: &Matrix) -> Result<Matrix> {
        if self.output_dim() != 1 {
            return Err(DdrError::dim("input_gradient needs a scalar-output network"));
        }
        let ones = Matrix::filled(x.rows(), 1, 1.0);
        Ok(self.backward(x, &ones)?.1)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }
}

fn add_bias_activate(z: &mut Matrix, bias: &[f64], act: Activation) {
    let cols = z.cols();
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        for j in 0..cols {
            row[j] = act.apply(row[j] + bias[j]);
        }
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn scale(&mut self, a: f64) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().iter_mut().for_each(|v| *v *= a);
            l.bias.iter_mut().for_each(|v| *v *= a);
        }
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, b: f64, act: Activation) -> MlpNetwork {
        // a hidden nonlinearity needs a trailing linear layer to satisfy the chain invariant
        let first = Layer {
            weight: Matrix::from_vec(1, 1, vec![w]).unwrap(),
            bias: vec![b],
            activation: act,
        };
        if act == Activation::Identity {
            MlpNetwork::from_layers(vec![first]).unwrap()
        } else {
            let id = Layer {
                weight: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
                bias: vec![0.0],
                activation: Activation::Identity,
            };
            MlpNetwork::from_layers(vec![first, id]).unwrap()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpNetwork::new(&[2, 1], Activation::Relu, 7).unwrap();
        let b = MlpNetwork::new(&[2, 1], Activation::Relu, 7).unwrap();
        let bits = |n: &MlpNetwork| -> Vec<u64> {
            n.flat_parameters().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn init_shapes_and_bounds() {
        let net = MlpNetwork::new(&[20, 16, 8, 1], Activation::Relu, 1).unwrap();
        assert_eq!(net.layers().len(), 3);
        assert_eq!(net.input_dim(), 20);
        assert_eq!(net.output_dim(), 1);
        assert_eq!(net.layers()[2].activation, Activation::Identity);
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(net.layers()[0]
            .weight
            .as_slice()
            .iter()
            .all(|w| w.abs() <= bound));
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn degenerate_dims_rejected() {
        assert!(matches!(
            MlpNetwork::new(&[5], Activation::Relu, 0),
            Err(DdrError::Dimension(_))
        ));
        assert!(MlpNetwork::new(&[], Activation::Relu, 0).is_err());
        assert!(MlpNetwork::new(&[3, 0, 1], Activation::Relu, 0).is_err());
        assert!(MlpNetwork::new(&[3, 1], Activation::LeakyRelu { slope: 1.5 }, 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let x = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let y = single(2.0, 1.0, Activation::Identity).forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[7.0]);

        let x = Matrix::from_vec(1, 1, vec![-5.0]).unwrap();
        let y = single(1.0, 0.0, Activation::Relu).forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[0.0]);

        let x = Matrix::from_vec(1, 1, vec![-10.0]).unwrap();
        let y = single(1.0, 0.0, Activation::LeakyRelu { slope: 0.1 })
            .forward(&x)
            .unwrap();
        assert!((y[(0, 0)] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = MlpNetwork::new(&[3, 2], Activation::Relu, 0).unwrap();
        assert!(net.forward(&Matrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn backward_examples() {
        let net = single(2.0, 0.0, Activation::Identity);
        let x = Matrix::from_vec(1, 1, vec![0.7]).unwrap();
        let (_, gx) = net.backward(&x, &Matrix::filled(1, 1, 1.0)).unwrap();
        assert_eq!(gx.as_slice(), &[2.0]);

        let net = single(1.0, 0.0, Activation::Relu);
        let x = Matrix::from_vec(1, 1, vec![-5.0]).unwrap();
        let (g, gx) = net.backward(&x, &Matrix::filled(1, 1, 3.0)).unwrap();
        assert_eq!(gx.as_slice(), &[0.0]);
        assert_eq!(g.layers[0].weight.as_slice(), &[0.0]);

        let wrong = Matrix::zeros(2, 1);
        assert!(net.backward(&x, &wrong).is_err());
    }

    #[test]
    fn from_layers_enforces_chain() {
        let a = Layer {
            weight: Matrix::zeros(3, 2),
            bias: vec![0.0; 3],
            activation: Activation::Relu,
        };
        let b = Layer {
            weight: Matrix::zeros(1, 4),
            bias: vec![0.0],
            activation: Activation::Identity,
        };
        assert!(MlpNetwork::from_layers(vec![a.clone(), b]).is_err());
        assert!(MlpNetwork::from_layers(vec![a]).is_err());
    }
}
