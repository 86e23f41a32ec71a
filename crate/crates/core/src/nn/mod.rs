//! Minimal dense numeric layer: a multi-layer perceptron with rectified-linear
//! hidden activations and a linear output head, reverse-mode gradients computed
//! analytically, an RMSProp optimizer, and a finite-difference gradient checker.
//!
//! Everything runs in 64-bit floats. Networks are plain owned data: cloning a
//! net yields a bitwise-identical copy, which is how target-network snapshots
//! are taken.

mod gradcheck;
mod rmsprop;

pub use gradcheck::{gradient_check, gradient_check_against, GradCheckSettings};
pub use rmsprop::{RmsPropConfig, RmsPropState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One dense layer: row-major weights with shape `(out_dim, in_dim)` plus a bias
/// vector of length `out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Layer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// `z = W x + b`.
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut z = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            out.push(z);
        }
    }
}

/// Multi-layer perceptron mapping a state vector to one value per action.
///
/// Hidden layers apply the rectifier `max(0, z)`; the output layer is linear.
/// The rectifier subgradient at exactly zero is taken to be zero so gradients
/// are a deterministic function of the parameters and input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    /// `widths[0]` is the input dimension, `widths.last()` the action count.
    widths: Vec<usize>,
    layers: Vec<Layer>,
}

/// Per-parameter gradients, shaped exactly like the net they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    /// Elementwise accumulate. Shapes must match.
    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.layers.len(), other.layers.len(), "gradient layer count");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in self.layers.iter_mut() {
            for x in l.weights.iter_mut() {
                *x *= factor;
            }
            for x in l.bias.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// Max absolute entry, used by divergence checks.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for l in &self.layers {
            for &x in l.weights.iter().chain(&l.bias) {
                m = m.max(x.abs());
            }
        }
        m
    }
}

/// Intermediate activations from one forward pass, kept for the backward pass.
pub struct ForwardTrace {
    /// Layer inputs: `inputs[0]` is the state, `inputs[l]` feeds layer `l`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pre: Vec<Vec<f64>>,
    /// Final (linear) output.
    pub output: Vec<f64>,
}

impl DenseNet {
    /// Builds a net with the given widths and all parameters zero.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(CoreError::InvalidArgument(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(CoreError::InvalidArgument("zero layer width".into()));
        }
        let layers = widths
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(DenseNet {
            widths: widths.to_vec(),
            layers,
        })
    }

    /// Seeded initialization: every weight and bias uniform in
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for layer in net.layers.iter_mut() {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = -bound + rng.random::<f64>() * 2.0 * bound;
            }
        }
        Ok(net)
    }

    pub fn from_layers(widths: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let net = DenseNet { widths, layers };
        net.check_shapes()?;
        Ok(net)
    }

    fn check_shapes(&self) -> Result<()> {
        if self.widths.len() != self.layers.len() + 1 {
            return Err(CoreError::DimensionMismatch(
                "layer count does not match widths".into(),
            ));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim != self.widths[i]
                || l.out_dim != self.widths[i + 1]
                || l.weights.len() != l.in_dim * l.out_dim
                || l.bias.len() != l.out_dim
            {
                return Err(CoreError::DimensionMismatch(format!(
                    "layer {i} shapes inconsistent with widths"
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    /// Evaluates the net. Pure function of `(parameters, state)`.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(state)?.output)
    }

    /// Forward pass that retains per-layer activations for `backward_from_trace`.
    pub fn forward_trace(&self, state: &[f64]) -> Result<ForwardTrace> {
        if state.len() != self.input_dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "state length {} != input dim {}",
                state.len(),
                self.input_dim()
            )));
        }
        let n = self.layers.len();
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut x = state.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.affine(&x, &mut z);
            inputs.push(x);
            let last = l + 1 == n;
            let y = if last {
                z.clone()
            } else {
                z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
            };
            pre.push(z);
            x = y;
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: x,
        })
    }

    /// Reverse pass from an output gradient down to parameter gradients.
    ///
    /// The result is linear in `out_grad`; a zero output gradient yields
    /// all-zero parameter gradients.
    pub fn backward(&self, state: &[f64], out_grad: &[f64]) -> Result<Gradients> {
        let trace = self.forward_trace(state)?;
        self.backward_from_trace(&trace, out_grad)
    }

    /// Same as [`DenseNet::backward`] but reuses an existing forward trace.
    pub fn backward_from_trace(&self, trace: &ForwardTrace, out_grad: &[f64]) -> Result<Gradients> {
        if out_grad.len() != self.output_dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "output gradient length {} != action count {}",
                out_grad.len(),
                self.output_dim()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = out_grad.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let g = &mut grads.layers[l];
            for o in 0..layer.out_dim {
                let d = delta[o];
                g.bias[o] = d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw = d * xi;
                }
            }
            if l > 0 {
                // Propagate through the previous layer's rectifier; the
                // subgradient at 0 is 0.
                let prev_pre = &trace.pre[l - 1];
                let mut next = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (ni, w) in next.iter_mut().zip(row) {
                        *ni += w * d;
                    }
                }
                for (ni, &z) in next.iter_mut().zip(prev_pre) {
                    if z <= 0.0 {
                        *ni = 0.0;
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }

    /// Flat view of all parameters, layer by layer, weights then bias.
    /// Used by the gradient checker and nowhere else on hot paths.
    pub fn param(&self, idx: usize) -> f64 {
        let (l, off) = self.locate(idx);
        let layer = &self.layers[l];
        if off < layer.weights.len() {
            layer.weights[off]
        } else {
            layer.bias[off - layer.weights.len()]
        }
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let (l, off) = self.locate(idx);
        let layer = &mut self.layers[l];
        if off < layer.weights.len() {
            &mut layer.weights[off]
        } else {
            let w = layer.weights.len();
            &mut layer.bias[off - w]
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let n = layer.weights.len() + layer.bias.len();
            if idx < n {
                return (l, idx);
            }
            idx -= n;
        }
        panic!("parameter index out of range");
    }
}

impl Gradients {
    /// Flat accessor mirroring [`DenseNet::param`].
    pub fn param(&self, idx: usize) -> f64 {
        let mut rem = idx;
        for layer in &self.layers {
            let n = layer.weights.len() + layer.bias.len();
            if rem < n {
                return if rem < layer.weights.len() {
                    layer.weights[rem]
                } else {
                    layer.bias[rem - layer.weights.len()]
                };
            }
            rem -= n;
        }
        panic!("parameter index out of range");
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        let mut rem = idx;
        for layer in self.layers.iter_mut() {
            let n = layer.weights.len() + layer.bias.len();
            if rem < n {
                let w = layer.weights.len();
                return if rem < w {
                    &mut layer.weights[rem]
                } else {
                    &mut layer.bias[rem - w]
                };
            }
            rem -= n;
        }
        panic!("parameter index out of range");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_layer(weights: Vec<f64>, bias: Vec<f64>, in_dim: usize, out_dim: usize) -> DenseNet {
        DenseNet::from_layers(
            vec![in_dim, out_dim],
            vec![Layer {
                in_dim,
                out_dim,
                weights,
                bias,
            }],
        )
        .unwrap()
    }

    #[test]
    fn forward_identity_weights() {
        let net = single_layer(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_affine_output_is_linear() {
        // Output layer applies no rectifier, so negatives pass through.
        let net = single_layer(vec![1.0, 0.0, 0.0, 1.0], vec![-5.0, -5.0], 2, 2);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![-4.0, -3.0]);
    }

    #[test]
    fn forward_two_layer_matches_scalar_arithmetic() {
        // 1 -> 2 -> 1 net evaluated independently with straight-line scalar ops.
        let net = DenseNet::from_layers(
            vec![1, 2, 1],
            vec![
                Layer {
                    in_dim: 1,
                    out_dim: 2,
                    weights: vec![2.0, -3.0],
                    bias: vec![0.25, 0.5],
                },
                Layer {
                    in_dim: 2,
                    out_dim: 1,
                    weights: vec![1.5, -0.5],
                    bias: vec![0.1],
                },
            ],
        )
        .unwrap();
        let x = 0.5;
        let h0 = f64::max(0.0, 2.0 * x + 0.25);
        let h1 = f64::max(0.0, -3.0 * x + 0.5);
        let expected = 1.5 * h0 - 0.5 * h1 + 0.1;
        let got = net.forward(&[x]).unwrap();
        assert!((got[0] - expected).abs() < 1e-15, "{} vs {expected}", got[0]);
    }

    #[test]
    fn forward_rejects_bad_dimension() {
        let net = single_layer(vec![1.0], vec![0.0], 1, 1);
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(CoreError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn backward_zero_output_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = DenseNet::init(&[3, 5, 2], &mut rng).unwrap();
        let grads = net.backward(&[0.3, -0.2, 0.9], &[0.0, 0.0]).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn backward_scalar_chain_rule() {
        // f(x) = w*x with w=1, x=2; dL/df = 1 => dL/dw = 2, dL/db = 1.
        let net = single_layer(vec![1.0], vec![0.0], 1, 1);
        let grads = net.backward(&[2.0], &[1.0]).unwrap();
        assert_eq!(grads.layers[0].weights[0], 2.0);
        assert_eq!(grads.layers[0].bias[0], 1.0);
    }

    #[test]
    fn backward_is_linear_in_output_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::init(&[2, 4, 3], &mut rng).unwrap();
        let state = [0.4, -1.2];
        let g1 = net.backward(&state, &[1.0, -2.0, 0.5]).unwrap();
        let mut g2 = net.backward(&state, &[2.0, -4.0, 1.0]).unwrap();
        g2.scale(0.5);
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clone_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::init(&[4, 8, 3], &mut rng).unwrap();
        let copy = net.clone();
        let s = [0.1, 0.2, 0.3, 0.4];
        let a = net.forward(&s).unwrap();
        let b = copy.forward(&s).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::init(&[16, 8, 2], &mut rng).unwrap();
        for layer in net.layers() {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for &w in layer.weights.iter().chain(&layer.bias) {
                assert!(w.abs() <= bound);
            }
        }
    }
}
