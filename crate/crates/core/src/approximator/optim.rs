use serde::{Deserialize, Serialize};

use super::net::{DenseApproximator, Gradients};
use crate::error::{contract, Result};

/// Adaptive-moment optimizer state for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(net: &DenseApproximator, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    /// One descent step on `net` along `grads`.
    pub fn apply(&mut self, net: &mut DenseApproximator, grads: &Gradients) -> Result<()> {
        let shapes_match = grads.layers.len() == self.first.layers.len()
            && grads.layers.iter().zip(&self.first.layers).all(|(g, m)| {
                g.weights.len() == m.weights.len() && g.biases.len() == m.biases.len()
            })
            && net.layers().len() == grads.layers.len();
        if !shapes_match {
            return Err(contract("gradient shapes do not match optimizer state"));
        }
        self.step += 1;
        let t = self.step as i32;
        let lr_t = self.learning_rate * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let bias_c2 = (1.0 - b2.powi(t)).sqrt();
        for ((layer, g), (m, v)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.first.layers.iter_mut().zip(self.second.layers.iter_mut()))
        {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = g.weights.iter().chain(&g.biases);
            let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
            let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                // eps is applied to the bias-corrected second moment.
                *p -= lr_t * *mi / (vi.sqrt() + eps * bias_c2);
            }
        }
        Ok(())
    }
}

/// A network paired with its optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub net: DenseApproximator,
    pub opt: Adam,
}

impl Learner {
    pub fn new(net: DenseApproximator, learning_rate: f64) -> Self {
        let opt = Adam::new(&net, learning_rate);
        Self { net, opt }
    }

    pub fn step(&mut self, grads: &Gradients) -> Result<()> {
        self.opt.apply(&mut self.net, grads)
    }
}
