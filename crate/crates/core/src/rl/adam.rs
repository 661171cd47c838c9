//! Adam optimizer with bias-corrected first and second moments.

use super::mlp::{Gradients, Mlp};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update in place; `grads` must match the network shape.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let (gm, gv, g) = (&mut self.m.layers[l], &mut self.v.layers[l], &grads.layers[l]);
            for i in 0..layer.weights.len() {
                let grad = g.weights[i];
                gm.weights[i] = BETA1 * gm.weights[i] + (1.0 - BETA1) * grad;
                gv.weights[i] = BETA2 * gv.weights[i] + (1.0 - BETA2) * grad * grad;
                let m_hat = gm.weights[i] / bc1;
                let v_hat = gv.weights[i] / bc2;
                layer.weights[i] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
            }
            for i in 0..layer.biases.len() {
                let grad = g.biases[i];
                gm.biases[i] = BETA1 * gm.biases[i] + (1.0 - BETA1) * grad;
                gv.biases[i] = BETA2 * gv.biases[i] + (1.0 - BETA2) * grad * grad;
                let m_hat = gm.biases[i] / bc1;
                let v_hat = gv.biases[i] / bc2;
                layer.biases[i] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut rng = seeds::rng_from(1, "adam");
        let mut net = Mlp::new(&[2, 3, 1], &mut rng);
        let before = net.clone();
        let zero = Gradients::zeros_like(&net);
        let mut opt = Adam::new(&net, 0.01);
        opt.step(&mut net, &zero);
        assert_eq!(net, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // With bias correction, the very first update is lr * g / (|g| + eps),
        // which is lr * sign(g) up to eps.
        let mut net = Mlp::zeros(&[1, 1]);
        let mut opt = Adam::new(&net, 0.05);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].weights[0] = 3.7;
        grads.layers[0].biases[0] = -0.002;
        opt.step(&mut net, &grads);
        assert!((net.layers[0].weights[0] + 0.05).abs() < 1e-6);
        assert!((net.layers[0].biases[0] - 0.05).abs() < 1e-4);
    }

    #[test]
    fn updates_are_deterministic() {
        let mut rng = seeds::rng_from(2, "adam-det");
        let net0 = Mlp::new(&[3, 4, 2], &mut rng);
        let mut grads = Gradients::zeros_like(&net0);
        for (i, w) in grads.layers[0].weights.iter_mut().enumerate() {
            *w = (i as f64 - 3.0) * 0.1;
        }

        let run = || {
            let mut net = net0.clone();
            let mut opt = Adam::new(&net, 1e-3);
            for _ in 0..10 {
                opt.step(&mut net, &grads);
            }
            net
        };
        assert_eq!(run(), run());
    }
}
