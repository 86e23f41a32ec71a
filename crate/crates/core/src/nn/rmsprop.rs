//! RMSProp: per-parameter squared-gradient accumulator with elementwise
//! adaptive step sizes.

use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients, Layer};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    /// Accumulator decay rate, in (0, 1).
    pub decay: f64,
    /// Step size, > 0.
    pub learning_rate: f64,
    /// Stabilizer added under the square root, > 0.
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            decay: 0.95,
            learning_rate: 2.5e-4,
            epsilon: 1e-6,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(CoreError::InvalidArgument(format!(
                "decay must be in (0,1), got {}",
                self.decay
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Optimizer state: one squared-gradient accumulator per parameter, stored
/// with the same layer shapes as the net it updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    acc: Vec<Layer>,
}

impl RmsPropState {
    /// Fresh state with all accumulators at zero.
    pub fn new(net: &DenseNet, config: RmsPropConfig) -> Result<Self> {
        config.validate()?;
        Ok(RmsPropState {
            config,
            acc: Gradients::zeros_like(net).layers,
        })
    }

    /// One update: `acc <- decay*acc + (1-decay)*g^2`, then
    /// `w <- w - lr*g / sqrt(acc + eps)`, elementwise.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.acc.len() {
            return Err(CoreError::DimensionMismatch(
                "gradient layout does not match optimizer state".into(),
            ));
        }
        let RmsPropConfig {
            decay,
            learning_rate,
            epsilon,
        } = self.config;
        for ((layer, g), a) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.acc) {
            if g.weights.len() != layer.weights.len() || g.bias.len() != layer.bias.len() {
                return Err(CoreError::DimensionMismatch(
                    "gradient layer shape does not match net".into(),
                ));
            }
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let grads = g.weights.iter().chain(g.bias.iter());
            let accs = a.weights.iter_mut().chain(a.bias.iter_mut());
            for ((w, &grad), acc) in params.zip(grads).zip(accs) {
                *acc = decay * *acc + (1.0 - decay) * grad * grad;
                *w -= learning_rate * grad / (*acc + epsilon).sqrt();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_net(w: f64) -> DenseNet {
        DenseNet::from_layers(
            vec![1, 1],
            vec![Layer {
                in_dim: 1,
                out_dim: 1,
                weights: vec![w],
                bias: vec![0.0],
            }],
        )
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            layers: vec![Layer {
                in_dim: 1,
                out_dim: 1,
                weights: vec![g],
                bias: vec![0.0],
            }],
        }
    }

    #[test]
    fn single_step_matches_hand_arithmetic() {
        // w=1, g=1, decay=0.9, lr=0.1, eps=1e-8, fresh accumulator:
        // acc = 0.1, w <- 1 - 0.1/sqrt(0.1 + 1e-8).
        let mut net = scalar_net(1.0);
        let mut opt = RmsPropState::new(
            &net,
            RmsPropConfig {
                decay: 0.9,
                learning_rate: 0.1,
                epsilon: 1e-8,
            },
        )
        .unwrap();
        opt.step(&mut net, &scalar_grad(1.0)).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (0.1_f64 + 1e-8).sqrt();
        let got = net.layers()[0].weights[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.68377).abs() < 1e-5, "got {got}");
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut net = scalar_net(0.37);
        let mut opt = RmsPropState::new(&net, RmsPropConfig::default()).unwrap();
        opt.step(&mut net, &scalar_grad(0.0)).unwrap();
        assert_eq!(net.layers()[0].weights[0], 0.37);
    }

    #[test]
    fn accumulator_decays_across_steps() {
        let cfg = RmsPropConfig {
            decay: 0.5,
            learning_rate: 0.01,
            epsilon: 1e-8,
        };
        let mut net = scalar_net(0.0);
        let mut opt = RmsPropState::new(&net, cfg).unwrap();
        opt.step(&mut net, &scalar_grad(2.0)).unwrap();
        opt.step(&mut net, &scalar_grad(2.0)).unwrap();
        // acc after two identical steps: 0.5*(0.5*0 + 0.5*4) + 0.5*4 = 3.
        let acc = opt.acc[0].weights[0];
        assert!((acc - 3.0).abs() < 1e-15, "acc {acc}");
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let net = scalar_net(0.0);
        for cfg in [
            RmsPropConfig { decay: 0.0, ..Default::default() },
            RmsPropConfig { decay: 1.0, ..Default::default() },
            RmsPropConfig { learning_rate: 0.0, ..Default::default() },
            RmsPropConfig { epsilon: 0.0, ..Default::default() },
        ] {
            assert!(RmsPropState::new(&net, cfg).is_err());
        }
    }
}
