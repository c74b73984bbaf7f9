//! Social relationship inference.
//!
//! Each gifting agent owns three networks: an SR policy that predicts what a
//! co-player does from that co-player's (imagined) observation, a Q network
//! over its own observation and the joint action, and an observation
//! converter that imagines a co-player's view from its own. The gift weight
//! toward `j` is the advantage of `j`'s taken action over the counterfactual
//! baseline that marginalises `j`'s action under the inferred policy,
//! normalised so that it never exceeds `1/(N-1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{DenseApproximator, Gradients, Learner, Loss, OutputHead};
use crate::error::{contract, LaseError, Result};

/// Gift weight from a row of counterfactual Q values over `j`'s actions.
///
/// `q[a]` is the gifter's Q with `j` playing `a` and everyone else fixed at
/// their taken actions. A flat row (zero normaliser) yields 0.
pub fn gift_weight_from_q(q: &[f64], taken: usize, policy: &[f64], n_agents: usize) -> f64 {
    debug_assert_eq!(q.len(), policy.len());
    let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cap = 1.0 / (n_agents - 1) as f64;
    let normaliser = (n_agents - 1) as f64 * (hi - lo);
    if !(normaliser > 0.0) || !normaliser.is_finite() {
        return 0.0;
    }
    let w = (q[taken] - counterfactual_baseline(q, policy)) / normaliser;
    if w > 0.0 {
        w.min(cap)
    } else {
        0.0
    }
}

/// Expected Q under `policy`.
pub fn counterfactual_baseline(q: &[f64], policy: &[f64]) -> f64 {
    q.iter().zip(policy).map(|(a, b)| a * b).sum()
}

pub fn uniform_policy(n_actions: usize) -> Vec<f64> {
    vec![1.0 / n_actions as f64; n_actions]
}

/// Row-stochastic `N × N` matrix; entry `(i, j)` is the share of `i`'s
/// reward handed to `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GiftMatrix {
    n: usize,
    w: Vec<f64>,
}

impl GiftMatrix {
    pub fn identity(n: usize) -> Self {
        let mut w = vec![0.0; n * n];
        (0..n).for_each(|i| w[i * n + i] = 1.0);
        Self { n, w }
    }

    /// Builds a matrix from off-diagonal weights; each diagonal entry is the
    /// complement of its row. Diagonal values in `rows` are ignored.
    pub fn from_off_diagonal(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut w = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(contract(format!("gift row {i} has {} entries, expected {n}", row.len())));
            }
            let mut given = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    w[i * n + j] = v;
                    given += v;
                }
            }
            w[i * n + i] = 1.0 - given;
        }
        let m = Self { n, w };
        m.check()?;
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    /// Entries in `[0, 1]`, off-diagonals at most `1/(N-1)`, rows summing to 1.
    pub fn check(&self) -> Result<()> {
        const TOL: f64 = 1e-12;
        let cap = 1.0 / (self.n.max(2) - 1) as f64;
        for i in 0..self.n {
            let row = self.row(i);
            if row.iter().any(|v| !v.is_finite() || *v < -TOL || *v > 1.0 + TOL) {
                return Err(contract(format!("gift row {i} has entries outside [0, 1]: {row:?}")));
            }
            if row.iter().enumerate().any(|(j, &v)| j != i && v > cap + TOL) {
                return Err(contract(format!("gift row {i} exceeds the 1/(N-1) cap: {row:?}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > TOL {
                return Err(contract(format!("gift row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n * n).filter(move |k| k / n != k % n).map(move |k| (k / n, k % n, self.w[k]))
    }
}

/// One step from a gifter's own buffer. `next_joint` is `None` at the end of
/// an episode, where the bootstrap value is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub joint: Vec<usize>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub next_joint: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SriSettings {
    /// Discount used by the SR value network.
    pub gamma_sc: f64,
    /// Weight of the reconstruction term in the conversion loss.
    pub delta: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub lr_conversion: f64,
}

/// Mean losses of one [`SrNetworks::update`] call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SriLosses {
    pub td: f64,
    pub policy: f64,
    pub conversion: f64,
}

impl SriLosses {
    pub fn is_finite(&self) -> bool {
        self.td.is_finite() && self.policy.is_finite() && self.conversion.is_finite()
    }
}

/// The inference networks of one gifting agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrNetworks {
    pub agent: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_width: usize,
    pub settings: SriSettings,
    /// Absent for the ablation that assumes a uniform co-player policy.
    pub policy: Option<Learner>,
    pub value: Learner,
    pub conversion: Option<Learner>,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

impl SrNetworks {
    /// `with_inference = false` builds the ablation: a Q network only.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        agent: usize,
        n_agents: usize,
        n_actions: usize,
        obs_width: usize,
        hidden: &[usize],
        settings: SriSettings,
        with_inference: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if agent >= n_agents || n_agents < 2 {
            return Err(LaseError::Config(format!("agent {agent} of {n_agents} cannot gift")));
        }
        let value = DenseApproximator::new(&dims(obs_width + n_agents * n_actions, hidden, 1), OutputHead::Scalar, rng)?;
        let (policy, conversion) = if with_inference {
            let p = DenseApproximator::new(&dims(obs_width, hidden, n_actions), OutputHead::Softmax, rng)?;
            let c = DenseApproximator::new(&dims(obs_width + n_agents, hidden, obs_width), OutputHead::SigmoidMap, rng)?;
            (Some(Learner::new(p, settings.lr_policy)), Some(Learner::new(c, settings.lr_conversion)))
        } else {
            (None, None)
        };
        Ok(Self {
            agent,
            n_agents,
            n_actions,
            obs_width,
            settings,
            policy,
            value: Learner::new(value, settings.lr_value),
            conversion,
        })
    }

    pub fn infers_policy(&self) -> bool {
        self.policy.is_some() && self.conversion.is_some()
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_width {
            return Err(contract(format!("observation width {} != {}", obs.len(), self.obs_width)));
        }
        Ok(())
    }

    fn check_joint(&self, joint: &[usize]) -> Result<()> {
        if joint.len() != self.n_agents || joint.iter().any(|&a| a >= self.n_actions) {
            return Err(contract(format!("malformed joint action {joint:?}")));
        }
        Ok(())
    }

    fn joint_ones(&self, joint: &[usize]) -> Vec<usize> {
        joint.iter().enumerate().map(|(k, &a)| k * self.n_actions + a).collect()
    }

    /// Input vector of the Q network: observation then per-agent one-hots.
    pub fn q_input(&self, obs: &[f64], joint: &[usize]) -> Vec<f64> {
        let mut x = obs.to_vec();
        x.resize(self.obs_width + self.n_agents * self.n_actions, 0.0);
        for k in self.joint_ones(joint) {
            x[self.obs_width + k] = 1.0;
        }
        x
    }

    fn conversion_input(&self, obs: &[f64], co_player: usize) -> Vec<f64> {
        let mut x = obs.to_vec();
        x.resize(self.obs_width + self.n_agents, 0.0);
        x[self.obs_width + co_player] = 1.0;
        x
    }

    /// The converter's guess at `co_player`'s observation, each entry in (0, 1).
    pub fn imagine_observation(&self, own_obs: &[f64], co_player: usize) -> Result<Vec<f64>> {
        self.check_obs(own_obs)?;
        if co_player == self.agent || co_player >= self.n_agents {
            return Err(contract(format!("agent {} cannot imagine co-player {co_player}", self.agent)));
        }
        let conv = self.conversion.as_ref().ok_or_else(|| contract("this agent has no observation converter"))?;
        conv.net.forward(&self.conversion_input(own_obs, co_player))
    }

    /// Predicted action distribution of whoever sees `obs`.
    pub fn infer_policy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        let policy = self.policy.as_ref().ok_or_else(|| contract("this agent has no SR policy"))?;
        policy.net.forward(obs)
    }

    pub fn q_joint(&self, own_obs: &[f64], joint: &[usize]) -> Result<f64> {
        self.check_obs(own_obs)?;
        self.check_joint(joint)?;
        self.value.net.forward_scalar(&self.q_input(own_obs, joint))
    }

    /// Q for every action of `j`, other actions held at `joint`.
    pub fn counterfactual_q(&self, own_obs: &[f64], joint: &[usize], j: usize) -> Result<Vec<f64>> {
        self.check_obs(own_obs)?;
        self.check_joint(joint)?;
        let pre = self.value.net.prefix_preactivation(own_obs)?;
        self.counterfactual_q_from(&pre, joint, j)
    }

    fn counterfactual_q_from(&self, pre: &[f64], joint: &[usize], j: usize) -> Result<Vec<f64>> {
        let mut ones = self.joint_ones(joint);
        (0..self.n_actions)
            .map(|a| {
                ones[j] = j * self.n_actions + a;
                Ok(self.value.net.forward_from_prefix(pre, self.obs_width, &ones)?[0])
            })
            .collect()
    }

    /// Baseline of `j`'s taken action under `policy`.
    pub fn counterfactual_baseline(&self, own_obs: &[f64], joint: &[usize], j: usize, policy: &[f64]) -> Result<f64> {
        if policy.len() != self.n_actions {
            return Err(contract("inferred policy has the wrong length"));
        }
        Ok(counterfactual_baseline(&self.counterfactual_q(own_obs, joint, j)?, policy))
    }

    /// Gift weight toward `j` with an explicitly supplied inferred policy.
    pub fn gift_weight_with_policy(&self, own_obs: &[f64], joint: &[usize], j: usize, policy: &[f64]) -> Result<f64> {
        if j == self.agent || j >= self.n_agents {
            return Err(contract(format!("agent {} cannot gift to {j}", self.agent)));
        }
        if policy.len() != self.n_actions {
            return Err(contract("inferred policy has the wrong length"));
        }
        let q = self.counterfactual_q(own_obs, joint, j)?;
        Ok(gift_weight_from_q(&q, joint[j], policy, self.n_agents))
    }

    /// Policy this agent attributes to `j`: inferred from the imagined view,
    /// from `j`'s true view when one is supplied, or uniform for the ablation.
    pub fn attributed_policy(&self, own_obs: &[f64], j: usize, true_obs: Option<&[f64]>) -> Result<Vec<f64>> {
        if !self.infers_policy() {
            return Ok(uniform_policy(self.n_actions));
        }
        match true_obs {
            Some(obs) => self.infer_policy(obs),
            None => self.infer_policy(&self.imagine_observation(own_obs, j)?),
        }
    }

    pub fn gift_weight(&self, own_obs: &[f64], joint: &[usize], j: usize) -> Result<f64> {
        let policy = self.attributed_policy(own_obs, j, None)?;
        self.gift_weight_with_policy(own_obs, joint, j, &policy)
    }

    /// Off-diagonal weights of this agent's row; zero toward inactive agents.
    /// `true_obs`, when given, replaces imagined co-player views.
    pub fn gift_row(
        &self,
        own_obs: &[f64],
        joint: &[usize],
        active: &[bool],
        true_obs: Option<&[Vec<f64>]>,
    ) -> Result<Vec<f64>> {
        self.check_obs(own_obs)?;
        self.check_joint(joint)?;
        let pre = self.value.net.prefix_preactivation(own_obs)?;
        let conv_pre = match (&self.conversion, true_obs) {
            (Some(c), None) => Some(c.net.prefix_preactivation(own_obs)?),
            _ => None,
        };
        let mut row = vec![0.0; self.n_agents];
        for j in (0..self.n_agents).filter(|&j| j != self.agent && active[j]) {
            let policy = match (&self.policy, &conv_pre, true_obs) {
                (Some(p), _, Some(obs)) => p.net.forward(&obs[j])?,
                (Some(p), Some(cp), None) => {
                    let conv = self.conversion.as_ref().expect("paired with conv_pre");
                    let imagined = conv.net.forward_from_prefix(cp, self.obs_width, &[j])?;
                    p.net.forward(&imagined)?
                }
                _ => uniform_policy(self.n_actions),
            };
            let q = self.counterfactual_q_from(&pre, joint, j)?;
            row[j] = gift_weight_from_q(&q, joint[j], &policy, self.n_agents);
        }
        Ok(row)
    }

    /// One gradient step of every network on `batch`.
    ///
    /// The Q network regresses on the TD target with the target fixed; the
    /// SR policy ascends `δ·∇ln π(a_i|o_i)`; the converter minimises
    /// `(1-δ)·CE(a_j, π(ô_j)) + δ·|ô_j - o_i|` with the SR policy frozen.
    pub fn update(&mut self, batch: &[Transition]) -> Result<SriLosses> {
        if batch.is_empty() {
            return Ok(SriLosses::default());
        }
        let n = batch.len() as f64;
        let s = self.settings;
        let mut value_grads = Gradients::zeros_like(&self.value.net);
        let mut policy_grads = self.policy.as_ref().map(|p| Gradients::zeros_like(&p.net));
        let mut conv_grads = self.conversion.as_ref().map(|c| Gradients::zeros_like(&c.net));
        let mut losses = SriLosses::default();

        for t in batch {
            self.check_obs(&t.obs)?;
            self.check_joint(&t.joint)?;
            let next_q = match &t.next_joint {
                Some(next) => self.q_joint(&t.next_obs, next)?,
                None => 0.0,
            };
            let target = t.reward + s.gamma_sc * next_q;
            let input = self.q_input(&t.obs, &t.joint);
            let td = target - self.value.net.forward_scalar(&input)?;
            let back = self.value.net.gradients(&input, Loss::Value { target })?;
            losses.td += back.loss / n;
            value_grads.add_assign(&back.grads);

            if let (Some(p), Some(g)) = (&self.policy, policy_grads.as_mut()) {
                let own = t.joint[self.agent];
                let b = p.net.gradients(&t.obs, Loss::LogProb { action: own, coefficient: td })?;
                losses.policy += b.loss / n;
                g.add_assign(&b.grads);
            }

            if let (Some(c), Some(p), Some(g)) = (&self.conversion, &self.policy, conv_grads.as_mut()) {
                for j in (0..self.n_agents).filter(|&j| j != self.agent) {
                    let input = self.conversion_input(&t.obs, j);
                    let imagined = c.net.forward(&input)?;
                    let mut out_grad = vec![0.0; self.obs_width];
                    let mut loss = 0.0;
                    if s.delta < 1.0 {
                        let ce = p.net.gradients(&imagined, Loss::CrossEntropy { target: t.joint[j] })?;
                        loss += (1.0 - s.delta) * ce.loss;
                        out_grad.iter_mut().zip(&ce.input_grad).for_each(|(o, gi)| *o += (1.0 - s.delta) * gi);
                    }
                    for ((o, &y), &x) in out_grad.iter_mut().zip(&imagined).zip(&t.obs) {
                        loss += s.delta * (y - x).abs();
                        *o += s.delta * sign(y - x);
                    }
                    let b = c.net.gradients(&input, Loss::OutputGradient(&out_grad))?;
                    losses.conversion += loss / n;
                    g.add_assign(&b.grads);
                }
            }
        }

        value_grads.scale(1.0 / n);
        self.value.step(&value_grads)?;
        if let (Some(p), Some(mut g)) = (self.policy.as_mut(), policy_grads) {
            g.scale(1.0 / n);
            p.step(&g)?;
        }
        if let (Some(c), Some(mut g)) = (self.conversion.as_mut(), conv_grads) {
            g.scale(1.0 / n);
            c.step(&g)?;
        }
        if !losses.is_finite() {
            return Err(LaseError::Numeric(format!("agent {} SRI losses {losses:?}", self.agent)));
        }
        Ok(losses)
    }
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
