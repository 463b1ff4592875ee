//! Fully connected Q-network with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the output layer is linear. Weights are stored
//! row-major as `outputs x inputs`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(dot + self.bias[o]);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

/// Per-layer post-activation outputs of one forward pass; `values[0]` is the input.
#[derive(Clone, Debug, Default)]
pub struct Activations {
    values: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.values.last().map_or(&[], |v| v.as_slice())
    }
}

/// Parameter-shaped accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }
}

impl QNetwork {
    /// `sizes` lists layer widths from input to output, e.g. `[8, 12, 6, 3]`.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "network needs at least an input and an output width");
        QNetwork {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_uniform(sizes: &[usize], rng: &mut RngStream) -> Self {
        let mut net = Self::zeros(sizes);
        for l in &mut net.layers {
            let bound = 1.0 / libm::sqrt(l.inputs as f64);
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        net
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        for pair in layers.windows(2) {
            assert_eq!(pair[0].outputs, pair[1].inputs, "layer widths do not chain");
        }
        QNetwork { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn shape(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs, l.outputs)).collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = Activations::default();
        self.forward_cached(x, &mut acts);
        acts.values.pop().unwrap_or_default()
    }

    pub fn forward_cached(&self, x: &[f64], acts: &mut Activations) {
        assert_eq!(x.len(), self.input_width(), "state width does not match network input");
        acts.values.resize_with(self.layers.len() + 1, Vec::new);
        acts.values[0].clear();
        acts.values[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (head, tail) = acts.values.split_at_mut(i + 1);
            let out = &mut tail[0];
            layer.affine(&head[i], out);
            if i < last {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Adds `d(loss)/d(params)` to `grads` given `d(loss)/d(output)` for the
    /// forward pass recorded in `acts`.
    pub fn backward(&self, acts: &Activations, d_out: &[f64], grads: &mut Gradients) {
        let mut delta: Vec<f64> = d_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &acts.values[i];
            let g = &mut grads.layers[i];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // ReLU derivative on the hidden activation feeding this layer
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// `theta <- theta - lr * (grad + weight_decay * theta)`.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64, weight_decay: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in l.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * (gw + weight_decay * *w);
            }
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b -= learning_rate * (gb + weight_decay * *b);
            }
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&[8, 12, 6, 3]);
        assert_eq!(net.forward(&[1.0; 8]), vec![0.0; 3]);
        assert_eq!(net.num_params(), 8 * 12 + 12 + 12 * 6 + 6 + 6 * 3 + 3);
    }

    #[test]
    fn hand_computed_forward() {
        // 2 -> 2 -> 1 with identity-like weights
        let l1 = Dense {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.5, -3.0],
        };
        let l2 = Dense {
            inputs: 2,
            outputs: 1,
            weights: vec![2.0, 5.0],
            bias: vec![1.0],
        };
        let net = QNetwork::from_layers(vec![l1, l2]);
        // h = relu([1.5, -1.0]) = [1.5, 0]; q = 2*1.5 + 0 + 1 = 4
        assert_eq!(net.forward(&[1.0, 2.0]), vec![4.0]);
    }

    #[test]
    fn negative_preactivations_zero_hidden() {
        let mut net = QNetwork::zeros(&[2, 3, 1]);
        net.layers_mut()[0].bias = vec![-1.0; 3];
        net.layers_mut()[1].weights = vec![1.0; 3];
        net.layers_mut()[1].bias = vec![0.25];
        assert_eq!(net.forward(&[0.0, 0.0]), vec![0.25]);
    }

    #[test]
    fn argmax_tie_break() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.2]), 0);
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = QNetwork::init_uniform(&[8, 12, 6, 3], &mut stream(1, StreamId::AgentInit));
        let b = QNetwork::init_uniform(&[8, 12, 6, 3], &mut stream(1, StreamId::AgentInit));
        assert_eq!(a, b);
        let bound = 1.0 / libm::sqrt(8.0);
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn decay_only_step_shrinks_parameters() {
        let mut net = QNetwork::init_uniform(&[3, 4, 2], &mut stream(2, StreamId::AgentInit));
        let before: Vec<f64> = net.params().copied().collect();
        let g = net.zero_gradients();
        net.sgd_step(&g, 1e-4, 1e-3);
        for (a, b) in net.params().zip(&before) {
            assert_eq!(*a, b - 1e-4 * (1e-3 * b));
            assert!((a - b * (1.0 - 1e-7)).abs() <= 1e-15 * b.abs());
        }
    }
}
