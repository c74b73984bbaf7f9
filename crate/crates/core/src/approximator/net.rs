use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Output transformation applied after the last affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputHead {
    /// Probability distribution over discrete actions.
    Softmax,
    /// Single real value.
    Scalar,
    /// Elementwise logistic map into `(0, 1)`.
    SigmoidMap,
}

/// One affine layer; `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.biases.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *zo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        z
    }
}

/// Fully connected network with rectified hidden layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseApproximator {
    layers: Vec<DenseLayer>,
    head: OutputHead,
}

/// A loss whose gradient [`DenseApproximator::gradients`] can produce.
#[derive(Clone, Copy, Debug)]
pub enum Loss<'a> {
    /// `-coefficient * ln π(action)`; descending it ascends `coefficient * ln π`.
    LogProb { action: usize, coefficient: f64 },
    /// `0.5 * (v - target)^2` with the target held fixed.
    Value { target: f64 },
    /// `-ln π(target)`: cross-entropy against a one-hot label.
    CrossEntropy { target: usize },
    /// `Σ |y - target|`.
    L1 { target: &'a [f64] },
    /// Caller-supplied `∂L/∂output`; the reported loss is zero.
    OutputGradient(&'a [f64]),
}

/// Parameter-shaped gradient (or moment) buffers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseApproximator) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient { weights: vec![0.0; l.weights.len()], biases: vec![0.0; l.biases.len()] })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= factor);
            l.biases.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

/// Result of a backward pass.
#[derive(Clone, Debug)]
pub struct Backward {
    pub loss: f64,
    pub grads: Gradients,
    /// `∂L/∂input`.
    pub input_grad: Vec<f64>,
}

struct Trace {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl DenseApproximator {
    /// Glorot-uniform weights, zero biases. `dims` lists every layer width,
    /// input first and output last.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], head: OutputHead, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims, head)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            layer.weights.iter_mut().for_each(|w| *w = rng.gen_range(-limit..=limit));
        }
        Ok(net)
    }

    /// All parameters zero.
    pub fn zeros(dims: &[usize], head: OutputHead) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(contract(format!("layer widths must be nonzero and at least two, got {dims:?}")));
        }
        if head == OutputHead::Scalar && dims[dims.len() - 1] != 1 {
            return Err(contract("scalar head needs an output width of 1"));
        }
        let layers = dims.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Ok(Self { layers, head })
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_width()];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(contract(format!(
                "input width {} does not match network input {}",
                input.len(),
                self.input_width()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            x = layer.affine(&x);
            if k < last {
                relu_in_place(&mut x);
            }
        }
        Ok(self.apply_head(x))
    }

    /// Scalar-head convenience.
    pub fn forward_scalar(&self, input: &[f64]) -> Result<f64> {
        Ok(self.forward(input)?[0])
    }

    /// First-layer pre-activation contributed by the leading `prefix.len()`
    /// inputs, biases included. Pair with [`Self::forward_from_prefix`] to
    /// evaluate many inputs that share a dense prefix and differ only in a
    /// sparse 0/1 suffix.
    pub fn prefix_preactivation(&self, prefix: &[f64]) -> Result<Vec<f64>> {
        let first = &self.layers[0];
        if prefix.len() > first.inputs {
            return Err(contract("prefix longer than network input"));
        }
        let mut z = first.biases.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &first.weights[o * first.inputs..o * first.inputs + prefix.len()];
            *zo += row.iter().zip(prefix).map(|(w, v)| w * v).sum::<f64>();
        }
        Ok(z)
    }

    /// Forward pass for the input `prefix ⊕ suffix`, where the suffix is zero
    /// except for ones at `suffix_ones` (indices relative to the suffix start).
    pub fn forward_from_prefix(&self, prefix_pre: &[f64], prefix_len: usize, suffix_ones: &[usize]) -> Result<Vec<f64>> {
        let first = &self.layers[0];
        let mut z = prefix_pre.to_vec();
        for &k in suffix_ones {
            let col = prefix_len + k;
            if col >= first.inputs {
                return Err(contract(format!("suffix index {k} beyond network input")));
            }
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += first.weights[o * first.inputs + col];
            }
        }
        for layer in &self.layers[1..] {
            relu_in_place(&mut z);
            z = layer.affine(&z);
        }
        Ok(self.apply_head(z))
    }

    fn apply_head(&self, z: Vec<f64>) -> Vec<f64> {
        match self.head {
            OutputHead::Scalar => z,
            OutputHead::Softmax => softmax(&z),
            OutputHead::SigmoidMap => z.into_iter().map(sigmoid).collect(),
        }
    }

    fn trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&x);
            inputs.push(x);
            x = z.clone();
            pre.push(z);
            if k < last {
                relu_in_place(&mut x);
            }
        }
        let output = self.apply_head(x);
        Ok(Trace { inputs, pre, output })
    }

    /// Loss value, parameter gradients and input gradient of `loss` at `input`.
    pub fn gradients(&self, input: &[f64], loss: Loss<'_>) -> Result<Backward> {
        let trace = self.trace(input)?;
        let logits = &trace.pre[trace.pre.len() - 1];
        let (value, delta) = self.output_delta(logits, &trace.output, loss)?;
        Ok(self.backprop(&trace, value, delta))
    }

    /// Loss and `∂L/∂(final pre-activation)`.
    fn output_delta(&self, logits: &[f64], y: &[f64], loss: Loss<'_>) -> Result<(f64, Vec<f64>)> {
        use OutputHead::*;
        match (loss, self.head) {
            (Loss::LogProb { action, coefficient }, Softmax) => {
                self.check_action(action)?;
                let lp = log_softmax(logits)[action];
                let delta = y
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| coefficient * (p - if k == action { 1.0 } else { 0.0 }))
                    .collect();
                Ok((-coefficient * lp, delta))
            }
            (Loss::CrossEntropy { target }, Softmax) => {
                self.check_action(target)?;
                let lp = log_softmax(logits)[target];
                let delta = y.iter().enumerate().map(|(k, &p)| p - if k == target { 1.0 } else { 0.0 }).collect();
                Ok((-lp, delta))
            }
            (Loss::Value { target }, Scalar) => {
                let diff = y[0] - target;
                Ok((0.5 * diff * diff, vec![diff]))
            }
            (Loss::L1 { target }, SigmoidMap) => {
                self.check_output_len(target.len())?;
                let value = y.iter().zip(target).map(|(a, b)| (a - b).abs()).sum();
                let delta = y.iter().zip(target).map(|(&a, &b)| sign(a - b) * a * (1.0 - a)).collect();
                Ok((value, delta))
            }
            (Loss::OutputGradient(g), head) => {
                self.check_output_len(g.len())?;
                let delta = match head {
                    Scalar => g.to_vec(),
                    SigmoidMap => y.iter().zip(g).map(|(&a, &gi)| gi * a * (1.0 - a)).collect(),
                    Softmax => {
                        let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                        y.iter().zip(g).map(|(&p, &gi)| p * (gi - dot)).collect()
                    }
                };
                Ok((0.0, delta))
            }
            (loss, head) => Err(contract(format!("loss {loss:?} is not defined for a {head:?} head"))),
        }
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.output_width() {
            return Err(contract(format!("action {action} out of range for {} outputs", self.output_width())));
        }
        Ok(())
    }

    fn check_output_len(&self, len: usize) -> Result<()> {
        if len != self.output_width() {
            return Err(contract(format!("target width {len} does not match output {}", self.output_width())));
        }
        Ok(())
    }

    fn backprop(&self, trace: &Trace, loss: f64, mut delta: Vec<f64>) -> Backward {
        let mut grads = Gradients::zeros_like(self);
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &trace.inputs[k];
            let g = &mut grads.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] = d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(x).for_each(|(gw, xv)| *gw = d * xv);
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
            }
            if k > 0 {
                for (p, z) in prev.iter_mut().zip(&trace.pre[k - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Backward { loss, grads, input_grad: delta }
    }

    /// Adds `step * direction` to every parameter.
    pub fn add_scaled(&mut self, direction: &Gradients, step: f64) {
        for (l, d) in self.layers.iter_mut().zip(&direction.layers) {
            l.weights.iter_mut().zip(&d.weights).for_each(|(w, g)| *w += step * g);
            l.biases.iter_mut().zip(&d.biases).for_each(|(b, g)| *b += step * g);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }
}

fn relu_in_place(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}
