//! First-order optimizers. Weight decay is L2 coupling: `g <- g + wd * w`
//! before the update, applied to weights and biases alike.

use serde::{Deserialize, Serialize};

use super::{Gradients, MlpNetwork};
use crate::error::{DdrError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd {
        momentum: f64,
        weight_decay: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl OptimizerKind {
    pub fn adam(weight_decay: f64) -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn sgd(momentum: f64, weight_decay: f64) -> Self {
        OptimizerKind::Sgd {
            momentum,
            weight_decay,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl Default for OptimizerConfig {
    /// Adam, lr 1e-3, weight decay 1e-4.
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::adam(1e-4),
            learning_rate: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(config: &OptimizerConfig, net: &MlpNetwork) -> Self {
        let n = net.parameter_count();
        let second = match config.kind {
            OptimizerKind::Adam { .. } => vec![0.0; n],
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Optimizer {
            kind: config.kind,
            learning_rate: config.learning_rate,
            first: vec![0.0; n],
            second,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    pub fn apply(&mut self, net: &mut MlpNetwork, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(DdrError::dim(format!(
                "gradient has {} layers, network has {}",
                grads.layers.len(),
                net.layers().len()
            )));
        }
        for (k, (g, l)) in grads.layers.iter().zip(net.layers()).enumerate() {
            if g.weight.shape() != l.weight.shape() || g.bias.len() != l.bias.len() {
                return Err(DdrError::dim(format!("gradient shape mismatch at layer {k}")));
            }
            if !g.weight.is_finite() || g.bias.iter().any(|v| !v.is_finite()) {
                return Err(DdrError::numeric(format!("non-finite gradient in layer {k}")));
            }
        }
        if self.first.len() != net.parameter_count() {
            return Err(DdrError::dim("optimizer state does not match network size"));
        }

        self.step_count += 1;
        let lr = self.learning_rate;
        let mut offset = 0;
        for (g, l) in grads.layers.iter().zip(net.layers_mut()) {
            let nw = g.weight.as_slice().len();
            update_block(
                self.kind,
                lr,
                self.step_count,
                l.weight.as_mut_slice(),
                g.weight.as_slice(),
                &mut self.first[offset..offset + nw],
                self.second.get_mut(offset..offset + nw),
            );
            offset += nw;
            let nb = g.bias.len();
            update_block(
                self.kind,
                lr,
                self.step_count,
                &mut l.bias,
                &g.bias,
                &mut self.first[offset..offset + nb],
                self.second.get_mut(offset..offset + nb),
            );
            offset += nb;
        }
        Ok(())
    }
}

fn update_block(
    kind: OptimizerKind,
    lr: f64,
    t: u64,
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: Option<&mut [f64]>,
) {
    match kind {
        OptimizerKind::Sgd {
            momentum,
            weight_decay,
        } => {
            for ((p, &g), buf) in params.iter_mut().zip(grads).zip(m.iter_mut()) {
                let g = g + weight_decay * *p;
                *buf = if t == 1 { g } else { momentum * *buf + g };
                *p -= lr * *buf;
            }
        }
        OptimizerKind::Adam {
            beta1,
            beta2,
            eps,
            weight_decay,
        } => {
            let v = v.expect("adam keeps second moments");
            let bc1 = 1.0 - beta1.powi(t as i32);
            let bc2 = 1.0 - beta2.powi(t as i32);
            for (((p, &g), mi), vi) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v) {
                let g = g + weight_decay * *p;
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::{Activation, Layer, LayerGradient};

    fn scalar_net(w: f64) -> MlpNetwork {
        MlpNetwork::from_layers(vec![Layer {
            weight: Matrix::from_vec(1, 1, vec![w]).unwrap(),
            bias: vec![0.0],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            layers: vec![LayerGradient {
                weight: Matrix::from_vec(1, 1, vec![g]).unwrap(),
                bias: vec![0.0],
            }],
        }
    }

    #[test]
    fn plain_sgd_step() {
        let mut net = scalar_net(1.0);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::sgd(0.0, 0.0),
            learning_rate: 0.1,
        };
        let mut opt = Optimizer::new(&cfg, &net);
        opt.apply(&mut net, &scalar_grad(1.0)).unwrap();
        assert!((net.layers()[0].weight[(0, 0)] - 0.9).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        for c in [1e-3, 0.5, 40.0] {
            let mut net = scalar_net(0.0);
            let cfg = OptimizerConfig {
                kind: OptimizerKind::Adam {
                    beta1: 0.9,
                    beta2: 0.999,
                    eps: 1e-12,
                    weight_decay: 0.0,
                },
                learning_rate: 0.01,
            };
            let mut opt = Optimizer::new(&cfg, &net);
            opt.apply(&mut net, &scalar_grad(c)).unwrap();
            assert!((net.layers()[0].weight[(0, 0)] + 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        for kind in [OptimizerKind::sgd(0.9, 0.0), OptimizerKind::adam(0.0)] {
            let mut net = MlpNetwork::new(&[3, 4, 2], Activation::Relu, 5).unwrap();
            let before = net.clone();
            let mut opt = Optimizer::new(
                &OptimizerConfig {
                    kind,
                    learning_rate: 0.1,
                },
                &net,
            );
            let zero = net.zero_gradients();
            for _ in 0..3 {
                opt.apply(&mut net, &zero).unwrap();
            }
            assert_eq!(net, before);
            assert_eq!(opt.step_count(), 3);
        }
    }

    #[test]
    fn momentum_accumulates() {
        let mut net = scalar_net(0.0);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::sgd(0.5, 0.0),
            learning_rate: 1.0,
        };
        let mut opt = Optimizer::new(&cfg, &net);
        opt.apply(&mut net, &scalar_grad(1.0)).unwrap();
        opt.apply(&mut net, &scalar_grad(1.0)).unwrap();
        // steps of 1 then 1.5
        assert!((net.layers()[0].weight[(0, 0)] + 2.5).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks_without_gradient() {
        let mut net = scalar_net(2.0);
        let cfg = OptimizerConfig {
            kind: OptimizerKind::sgd(0.0, 0.1),
            learning_rate: 0.5,
        };
        let mut opt = Optimizer::new(&cfg, &net);
        opt.apply(&mut net, &scalar_grad(0.0)).unwrap();
        assert!((net.layers()[0].weight[(0, 0)] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut net = MlpNetwork::new(&[2, 3, 1], Activation::Relu, 0).unwrap();
        let mut g = net.zero_gradients();
        g.layers[1].bias[0] = f64::NAN;
        let mut opt = Optimizer::new(&OptimizerConfig::default(), &net);
        let err = opt.apply(&mut net, &g).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        assert_eq!(opt.step_count(), 0);
    }
}
