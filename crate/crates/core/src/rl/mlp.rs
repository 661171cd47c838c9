//! Dense multilayer perceptron with tanh hidden layers and a linear
//! output, plus analytic backpropagation. All arithmetic is f64.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One dense layer; weights are row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Xavier-uniform initialized network over the given layer sizes.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                Layer {
                    in_dim: n_in,
                    out_dim: n_out,
                    weights: (0..n_in * n_out)
                        .map(|_| rng.gen_range(-limit..limit))
                        .collect(),
                    biases: vec![0.0; n_out],
                }
            })
            .collect();
        Self { layers }
    }

    /// All-zero network of the given shape.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2);
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                in_dim: w[0],
                out_dim: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Self { layers }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].in_dim];
        sizes.extend(self.layers.iter().map(|l| l.out_dim));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| (l.in_dim + 1) * l.out_dim)
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a, l != last);
        }
        a
    }

    /// Forward pass that keeps every activation for backpropagation.
    pub fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let next = layer.apply(activations.last().unwrap(), l != last);
            activations.push(next);
        }
        ForwardTrace { activations }
    }

    /// Gradients of `output . upstream` with respect to every parameter.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &[f64]) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(trace, upstream, &mut grads);
        grads
    }

    /// Accumulating variant of [`Mlp::backward`]; adds into `grads`.
    pub fn backward_into(&self, trace: &ForwardTrace, upstream: &[f64], grads: &mut Gradients) {
        assert_eq!(upstream.len(), self.output_dim());
        assert_eq!(trace.activations.len(), self.layers.len() + 1);
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.activations[l];
            let g = &mut grads.layers[l];
            for o in 0..layer.out_dim {
                let d = delta[o];
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, &a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if l > 0 {
                // Propagate through the tanh of the previous layer:
                // tanh'(z) expressed via the stored activation a is 1 - a^2.
                let mut prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}

impl Layer {
    fn apply(&self, input: &[f64], tanh: bool) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let z: f64 = self.biases[o]
                + row
                    .iter()
                    .zip(input)
                    .map(|(w, a)| w * a)
                    .sum::<f64>();
            out.push(if tanh { z.tanh() } else { z });
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; the last entry is the output.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

/// Per-parameter gradient buffers, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.biases.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= factor);
            l.biases.iter_mut().for_each(|b| *b *= factor);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn tiny_tanh_net_at_origin_outputs_zero() {
        let mut rng = seeds::rng_from(0, "mlp");
        let net = Mlp::new(&[1, 1, 1], &mut rng);
        let out = net.forward(&[0.0]);
        // Biases start at zero, so tanh(0) = 0 flows through.
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn param_count_formula() {
        let net = Mlp::zeros(&[14, 64, 64, 125]);
        assert_eq!(net.param_count(), 15 * 64 + 65 * 64 + 65 * 125);
    }

    #[test]
    fn forward_matches_independent_matrix_chain() {
        // Straightforward re-implementation: explicit loops over a
        // transposed weight view, no shared code with Layer::apply.
        let mut rng = seeds::rng_from(3, "mlp-oracle");
        let net = Mlp::new(&[5, 7, 4, 3], &mut rng);
        let x: Vec<f64> = (0..5).map(|i| (i as f64) / 3.0 - 0.5).collect();

        let mut a = x.clone();
        for (idx, layer) in net.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.out_dim];
            for i in 0..layer.in_dim {
                for o in 0..layer.out_dim {
                    z[o] += layer.weights[o * layer.in_dim + i] * a[i];
                }
            }
            for o in 0..layer.out_dim {
                z[o] += layer.biases[o];
                if idx != net.layers.len() - 1 {
                    z[o] = z[o].tanh();
                }
            }
            a = z;
        }

        let got = net.forward(&x);
        for (g, e) in got.iter().zip(&a) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "input dimension mismatch")]
    fn forward_rejects_wrong_input_size() {
        let net = Mlp::zeros(&[3, 2]);
        net.forward(&[1.0]);
    }

    #[test]
    fn upstream_zero_contributes_nothing_and_gradients_are_linear() {
        let mut rng = seeds::rng_from(5, "mlp-lin");
        let net = Mlp::new(&[4, 8, 3], &mut rng);
        let x = [0.3, -0.1, 0.8, 0.2];
        let trace = net.forward_trace(&x);

        let zero = net.backward(&trace, &[0.0, 0.0, 0.0]);
        for l in &zero.layers {
            assert!(l.weights.iter().all(|&g| g == 0.0));
            assert!(l.biases.iter().all(|&g| g == 0.0));
        }

        let up = [0.5, -1.0, 2.0];
        let doubled: Vec<f64> = up.iter().map(|u| u * 2.0).collect();
        let g1 = net.backward(&trace, &up);
        let g2 = net.backward(&trace, &doubled);
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert!((2.0 * x - y).abs() < 1e-12);
            }
            for (x, y) in a.biases.iter().zip(&b.biases) {
                assert!((2.0 * x - y).abs() < 1e-12);
            }
        }
    }

    /// Central finite differences of `output . upstream` for one parameter.
    fn fd_gradient(
        net: &Mlp,
        x: &[f64],
        upstream: &[f64],
        layer: usize,
        weight_index: Option<usize>,
        bias_index: Option<usize>,
        h: f64,
    ) -> f64 {
        let eval = |net: &Mlp| -> f64 {
            net.forward(x)
                .iter()
                .zip(upstream)
                .map(|(y, u)| y * u)
                .sum()
        };
        let mut plus = net.clone();
        let mut minus = net.clone();
        match (weight_index, bias_index) {
            (Some(i), None) => {
                plus.layers[layer].weights[i] += h;
                minus.layers[layer].weights[i] -= h;
            }
            (None, Some(i)) => {
                plus.layers[layer].biases[i] += h;
                minus.layers[layer].biases[i] -= h;
            }
            _ => unreachable!(),
        }
        (eval(&plus) - eval(&minus)) / (2.0 * h)
    }

    #[test]
    fn backward_matches_finite_differences_on_small_nets() {
        let h = 1e-5;
        for seed in 0..3u64 {
            let mut rng = seeds::rng_from(seed, "mlp-fd");
            let net = Mlp::new(&[4, 6, 5, 3], &mut rng);
            let x: Vec<f64> = (0..4).map(|_| seeds::gaussian(&mut rng)).collect();
            let upstream: Vec<f64> = (0..3).map(|_| seeds::gaussian(&mut rng)).collect();
            let trace = net.forward_trace(&x);
            let grads = net.backward(&trace, &upstream);

            for (l, lg) in grads.layers.iter().enumerate() {
                for (i, &analytic) in lg.weights.iter().enumerate() {
                    let numeric = fd_gradient(&net, &x, &upstream, l, Some(i), None, h);
                    let rel = (analytic - numeric).abs()
                        / (analytic.abs() + numeric.abs()).max(1e-8);
                    assert!(
                        rel < 1e-6,
                        "layer {l} weight {i}: analytic {analytic} vs fd {numeric}"
                    );
                }
                for (i, &analytic) in lg.biases.iter().enumerate() {
                    let numeric = fd_gradient(&net, &x, &upstream, l, None, Some(i), h);
                    let rel = (analytic - numeric).abs()
                        / (analytic.abs() + numeric.abs()).max(1e-8);
                    assert!(rel < 1e-6, "layer {l} bias {i}");
                }
            }
        }
    }
}
