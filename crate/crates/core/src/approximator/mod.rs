//! Small feed-forward function approximators with hand-written backprop.
//!
//! Three heads cover every network the agents need: a softmax policy, a
//! scalar value and an elementwise sigmoid map used to imagine a co-player's
//! observation. Gradients are exact; the test module checks them against
//! central finite differences.

mod net;
mod optim;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use net::{log_softmax, sigmoid, softmax, Backward, DenseApproximator, DenseLayer, Gradients, LayerGradient, Loss, OutputHead};
pub use optim::{Adam, Learner};

use crate::error::{LaseError, Result};

pub const CHECKPOINT_FORMAT: &str = "lase-net";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a [`Learner`]: JSON with a format tag and version.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetCheckpoint {
    format: String,
    version: u32,
    layer_dims: Vec<usize>,
    learner: Learner,
}

impl Learner {
    pub fn to_json(&self) -> Result<String> {
        let ck = NetCheckpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            layer_dims: self.net.layer_dims(),
            learner: self.clone(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: NetCheckpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(LaseError::Config(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.layer_dims != ck.learner.net.layer_dims() {
            return Err(LaseError::Config("checkpoint layer_dims disagree with stored layers".into()));
        }
        Ok(ck.learner)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn param_mut(net: &mut DenseApproximator, layer: usize, idx: usize) -> &mut f64 {
        let l = &mut net.layers_mut()[layer];
        let n_w = l.weights.len();
        if idx < n_w {
            &mut l.weights[idx]
        } else {
            &mut l.biases[idx - n_w]
        }
    }

    /// Central finite-difference oracle. Parameters whose perturbation flips
    /// a rectifier or an L1 residual sign are skipped: the loss is not
    /// differentiable across those points.
    fn fd_check(
        net: &DenseApproximator,
        input: &[f64],
        loss: Loss<'_>,
        l1_target: Option<&[f64]>,
        loss_fn: &dyn Fn(&[f64]) -> f64,
    ) -> (f64, usize) {
        let analytic = net.gradients(input, loss).unwrap().grads;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut skipped = 0;
        let mut probe = net.clone();
        let sig = |p: &DenseApproximator| {
            let mut s = signature(p, input);
            if let Some(t) = l1_target {
                let y = p.forward(input).unwrap();
                s.extend(y.iter().zip(t).map(|(a, b)| a > b));
            }
            s
        };
        for l in 0..net.layers().len() {
            let n_params = net.layers()[l].weights.len() + net.layers()[l].biases.len();
            for idx in 0..n_params {
                let orig = *param_mut(&mut probe, l, idx);
                *param_mut(&mut probe, l, idx) = orig + h;
                let (plus_sig, plus) = (sig(&probe), loss_fn(&probe.forward(input).unwrap()));
                *param_mut(&mut probe, l, idx) = orig - h;
                let (minus_sig, minus) = (sig(&probe), loss_fn(&probe.forward(input).unwrap()));
                *param_mut(&mut probe, l, idx) = orig;
                if plus_sig != minus_sig {
                    skipped += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic.iter().nth(flat_index(net, l, idx)).unwrap();
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
        (worst, skipped)
    }

    fn flat_index(net: &DenseApproximator, layer: usize, idx: usize) -> usize {
        net.layers()[..layer].iter().map(|l| l.weights.len() + l.biases.len()).sum::<usize>() + idx
    }

    /// Activation pattern of every hidden unit plus output orderings relevant
    /// to L1 kinks.
    fn signature(net: &DenseApproximator, input: &[f64]) -> Vec<bool> {
        let mut sig = Vec::new();
        let mut x = input.to_vec();
        let last = net.layers().len() - 1;
        for (k, layer) in net.layers().iter().enumerate() {
            let mut z = layer.biases.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += layer.weights[o * layer.inputs..(o + 1) * layer.inputs]
                    .iter()
                    .zip(&x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
            }
            if k < last {
                sig.extend(z.iter().map(|v| *v > 0.0));
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = z;
        }
        sig
    }

    fn random_net(rng: &mut ChaCha8Rng, head: OutputHead) -> (DenseApproximator, Vec<f64>) {
        let depth = rng.gen_range(1..=3);
        let mut dims = vec![rng.gen_range(1..=8)];
        for _ in 1..depth {
            dims.push(rng.gen_range(1..=32));
        }
        dims.push(if head == OutputHead::Scalar { 1 } else { rng.gen_range(2..=6) });
        let mut net = DenseApproximator::new(&dims, head, rng).unwrap();
        for l in net.layers_mut() {
            l.biases.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
        }
        let input = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (net, input)
    }

    #[test]
    fn gradients_match_finite_differences_for_all_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..40 {
            let (net, x) = random_net(&mut rng, OutputHead::Softmax);
            let a = rng.gen_range(0..net.output_width());
            let coef = rng.gen_range(-2.0..2.0);
            let (e, _) = fd_check(&net, &x, Loss::LogProb { action: a, coefficient: coef }, None, &|y| -coef * y[a].ln());
            worst = worst.max(e);
            let (e, _) = fd_check(&net, &x, Loss::CrossEntropy { target: a }, None, &|y| -y[a].ln());
            worst = worst.max(e);

            let (net, x) = random_net(&mut rng, OutputHead::Scalar);
            let target = rng.gen_range(-1.0..1.0);
            let (e, _) = fd_check(&net, &x, Loss::Value { target }, None, &|y| 0.5 * (y[0] - target).powi(2));
            worst = worst.max(e);

            let (net, x) = random_net(&mut rng, OutputHead::SigmoidMap);
            let t: Vec<f64> = (0..net.output_width()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let t2 = t.clone();
            let (e, _) = fd_check(&net, &x, Loss::L1 { target: &t }, Some(&t), &move |y| {
                y.iter().zip(&t2).map(|(a, b)| (a - b).abs()).sum()
            });
            worst = worst.max(e);
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (net, x) = random_net(&mut rng, OutputHead::Softmax);
        let back = net.gradients(&x, Loss::CrossEntropy { target: 0 }).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (-net.forward(&xp).unwrap()[0].ln() + net.forward(&xm).unwrap()[0].ln()) / (2.0 * h);
            assert!((fd - back.input_grad[i]).abs() < 1e-6, "{fd} vs {}", back.input_grad[i]);
        }
    }

    #[test]
    fn output_gradient_composes_with_head() {
        // Feeding ∂(-ln p_a)/∂p as an output gradient equals the cross-entropy gradient.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (net, x) = random_net(&mut rng, OutputHead::Softmax);
        let p = net.forward(&x).unwrap();
        let mut g = vec![0.0; p.len()];
        g[1] = -1.0 / p[1];
        let a = net.gradients(&x, Loss::OutputGradient(&g)).unwrap();
        let b = net.gradients(&x, Loss::CrossEntropy { target: 1 }).unwrap();
        for (u, v) in a.grads.iter().zip(b.grads.iter()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_networks() {
        let soft = DenseApproximator::zeros(&[3, 8, 4], OutputHead::Softmax).unwrap();
        assert_eq!(soft.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.25; 4]);
        let scalar = DenseApproximator::zeros(&[3, 8, 1], OutputHead::Scalar).unwrap();
        assert_eq!(scalar.forward_scalar(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let sig = DenseApproximator::zeros(&[3, 5], OutputHead::SigmoidMap).unwrap();
        assert_eq!(sig.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5; 5]);
    }

    #[test]
    fn dimension_and_loss_mismatches_are_contract_errors() {
        let soft = DenseApproximator::zeros(&[3, 4], OutputHead::Softmax).unwrap();
        assert!(matches!(soft.forward(&[1.0]), Err(LaseError::Contract(_))));
        assert!(matches!(soft.gradients(&[0.0; 3], Loss::Value { target: 1.0 }), Err(LaseError::Contract(_))));
        assert!(matches!(
            soft.gradients(&[0.0; 3], Loss::CrossEntropy { target: 9 }),
            Err(LaseError::Contract(_))
        ));
        assert!(DenseApproximator::zeros(&[3, 2], OutputHead::Scalar).is_err());
    }

    #[test]
    fn cross_entropy_of_uniform_policy_is_log_actions() {
        let soft = DenseApproximator::zeros(&[2, 6, 5], OutputHead::Softmax).unwrap();
        let b = soft.gradients(&[0.3, 0.1], Loss::CrossEntropy { target: 2 }).unwrap();
        assert!((b.loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn l1_gradient_sign_follows_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = DenseApproximator::new(&[4, 6], OutputHead::SigmoidMap, &mut rng).unwrap();
        let x = [0.2, -0.4, 0.9, 0.1];
        let y = net.forward(&x).unwrap();
        let target: Vec<f64> = y.iter().enumerate().map(|(k, v)| if k % 2 == 0 { v - 0.1 } else { v + 0.1 }).collect();
        let b = net.gradients(&x, Loss::L1 { target: &target }).unwrap();
        // With a single layer, the bias gradient equals ∂L/∂z, which shares the sign of y - t.
        for (k, g) in b.grads.layers[0].biases.iter().enumerate() {
            assert_eq!(g.signum(), (y[k] - target[k]).signum());
        }
    }

    #[test]
    fn prefix_evaluation_matches_dense_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = DenseApproximator::new(&[10, 16, 8, 1], OutputHead::Scalar, &mut rng).unwrap();
        let prefix: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pre = net.prefix_preactivation(&prefix).unwrap();
        let mut full = prefix.clone();
        full.extend([0.0, 1.0, 0.0, 1.0]);
        let a = net.forward(&full).unwrap();
        let b = net.forward_from_prefix(&pre, 6, &[1, 3]).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseApproximator::new(&[3, 4, 2], OutputHead::Softmax, &mut rng).unwrap();
        let mut learner = Learner::new(net.clone(), 1e-2);
        learner.step(&Gradients::zeros_like(&net)).unwrap();
        assert_eq!(learner.net, net);
    }

    #[test]
    fn adam_constant_gradient_moves_monotonically_at_learning_rate() {
        let net = DenseApproximator::zeros(&[1, 1], OutputHead::Scalar).unwrap();
        let mut learner = Learner::new(net, 0.01);
        let mut grads = Gradients::zeros_like(&learner.net);
        grads.layers[0].biases[0] = 3.0;
        let mut prev = learner.net.layers()[0].biases[0];
        let mut last_step = 0.0;
        for _ in 0..500 {
            learner.step(&grads).unwrap();
            let now = learner.net.layers()[0].biases[0];
            assert!(now < prev);
            last_step = prev - now;
            prev = now;
        }
        assert!((last_step - 0.01).abs() < 1e-6, "{last_step}");
    }

    #[test]
    fn adam_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = DenseApproximator::new(&[3, 4, 1], OutputHead::Scalar, &mut rng).unwrap();
        let g = net.gradients(&[0.1, 0.2, 0.3], Loss::Value { target: 1.0 }).unwrap().grads;
        let mut a = Learner::new(net.clone(), 1e-3);
        let mut b = Learner::new(net, 1e-3);
        a.step(&g).unwrap();
        b.step(&g).unwrap();
        assert_eq!(a, b);
        let mut bad = Gradients::zeros_like(&DenseApproximator::zeros(&[2, 1], OutputHead::Scalar).unwrap());
        bad.scale(1.0);
        assert!(a.step(&bad).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = DenseApproximator::new(&[5, 7, 3], OutputHead::Softmax, &mut rng).unwrap();
        let mut learner = Learner::new(net, 1e-3);
        let g = learner.net.gradients(&[0.1; 5], Loss::CrossEntropy { target: 1 }).unwrap().grads;
        learner.step(&g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        learner.save(&path).unwrap();
        let back = Learner::load(&path).unwrap();
        assert_eq!(back, learner);
        let x = [0.3, -0.1, 0.7, 0.2, 0.9];
        let a = learner.net.forward(&x).unwrap();
        let b = back.net.forward(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn checkpoint_rejects_foreign_format() {
        let net = DenseApproximator::zeros(&[2, 1], OutputHead::Scalar).unwrap();
        let text = Learner::new(net, 1e-3).to_json().unwrap().replace("lase-net", "other");
        assert!(Learner::from_json(&text).is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_normalized_positive_and_shift_invariant(
            logits in proptest::collection::vec(-30.0f64..30.0, 1..10),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v > 0.0));
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn sigmoid_map_stays_in_open_unit_interval(seed in 0u64..1000, scale in 0.1f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = DenseApproximator::new(&[4, 8, 6], OutputHead::SigmoidMap, &mut rng).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-scale..scale)).collect();
            let y = net.forward(&x).unwrap();
            prop_assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}
