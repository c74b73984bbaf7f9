//! Acting and learning agents: LASE, its uniform-policy ablation, plain
//! actor-critic, group-optimal learners and scripted co-players.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{DenseApproximator, Gradients, Learner, Loss, OutputHead};
use crate::envs::{
    coin_of, Cell, Env, EnvKind, GridWorld, Object, CLEAN, COOPERATE, DEFECT, DOWN, HUNT_HARE, HUNT_STAG, LEFT, PICK,
    REMOVE_DRIFT, RIGHT, STAY, UP,
};
use crate::error::{contract, LaseError, Result};
use crate::sri::{uniform_policy, SriSettings, SrNetworks};
use crate::trainer::HyperParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Lase,
    /// LASE without observation conversion; co-players are assumed uniform.
    LaseWo,
    A2c,
    /// Trained on the group's summed reward.
    Go,
    ScriptedCooperator,
    ScriptedDefector,
    ScriptedRandom,
}

impl AgentKind {
    pub const ALL: [AgentKind; 7] = [
        AgentKind::Lase,
        AgentKind::LaseWo,
        AgentKind::A2c,
        AgentKind::Go,
        AgentKind::ScriptedCooperator,
        AgentKind::ScriptedDefector,
        AgentKind::ScriptedRandom,
    ];

    pub fn gifts(self) -> bool {
        matches!(self, AgentKind::Lase | AgentKind::LaseWo)
    }

    pub fn is_scripted(self) -> bool {
        matches!(self, AgentKind::ScriptedCooperator | AgentKind::ScriptedDefector | AgentKind::ScriptedRandom)
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Lase => "lase",
            AgentKind::LaseWo => "lase-wo",
            AgentKind::A2c => "a2c",
            AgentKind::Go => "go",
            AgentKind::ScriptedCooperator => "scripted-cooperator",
            AgentKind::ScriptedDefector => "scripted-defector",
            AgentKind::ScriptedRandom => "scripted-random",
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = LaseError;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LaseError::Config(format!("unknown agent kind `{s}`")))
    }
}

/// Linear ε decay from `eps_start` to `eps_end` over `eps_div` episodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_div: usize,
}

impl ExplorationSchedule {
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.eps_div == 0 || episode >= self.eps_div {
            return self.eps_end;
        }
        let frac = episode as f64 / self.eps_div as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// `(1 - ε)·π + ε/|A|`.
pub fn mixture_policy(policy: &[f64], epsilon: f64) -> Vec<f64> {
    let floor = epsilon / policy.len() as f64;
    policy.iter().map(|p| (1.0 - epsilon) * p + floor).collect()
}

/// Inverse-CDF draw from a normalised distribution.
pub fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    dist.len() - 1
}

/// Gift weight under the ablation's uniform co-player policy.
pub fn lase_wo_gift_weight(sr: &SrNetworks, own_obs: &[f64], joint: &[usize], j: usize) -> Result<f64> {
    sr.gift_weight_with_policy(own_obs, joint, j, &uniform_policy(sr.n_actions))
}

/// Every agent receives the group total.
pub fn group_rewards(rewards: &[f64]) -> Vec<f64> {
    let total: f64 = rewards.iter().sum();
    vec![total; rewards.len()]
}

/// One actor-critic step. `next_obs` is ignored when `terminal`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyStep {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct A2cLosses {
    pub actor: f64,
    pub critic: f64,
}

/// Softmax actor with a separate state-value critic, trained on TD errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Learner,
    pub critic: Learner,
    pub gamma: f64,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_width: usize,
        n_actions: usize,
        hidden: &[usize],
        learning_rate: f64,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let dims = |out| std::iter::once(obs_width).chain(hidden.iter().copied()).chain([out]).collect::<Vec<_>>();
        let actor = DenseApproximator::new(&dims(n_actions), OutputHead::Softmax, rng)?;
        let critic = DenseApproximator::new(&dims(1), OutputHead::Scalar, rng)?;
        Ok(Self { actor: Learner::new(actor, learning_rate), critic: Learner::new(critic, learning_rate), gamma })
    }

    pub fn policy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actor.net.forward(obs)
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        Ok(sample_index(&mixture_policy(&self.policy(obs)?, epsilon), rng))
    }

    /// One batch step over a whole trajectory: the critic regresses on
    /// `r + γV(o')` and the actor ascends `δ·∇ln π(a|o)`.
    pub fn update(&mut self, steps: &[PolicyStep]) -> Result<A2cLosses> {
        if steps.is_empty() {
            return Ok(A2cLosses::default());
        }
        let n = steps.len() as f64;
        let mut actor_grads = Gradients::zeros_like(&self.actor.net);
        let mut critic_grads = Gradients::zeros_like(&self.critic.net);
        let mut losses = A2cLosses::default();
        for s in steps {
            let bootstrap = if s.terminal { 0.0 } else { self.critic.net.forward_scalar(&s.next_obs)? };
            let target = s.reward + self.gamma * bootstrap;
            let v = self.critic.net.forward_scalar(&s.obs)?;
            let td = target - v;
            let c = self.critic.net.gradients(&s.obs, Loss::Value { target })?;
            critic_grads.add_assign(&c.grads);
            losses.critic += c.loss / n;
            let a = self.actor.net.gradients(&s.obs, Loss::LogProb { action: s.action, coefficient: td })?;
            actor_grads.add_assign(&a.grads);
            losses.actor += a.loss / n;
        }
        actor_grads.scale(1.0 / n);
        critic_grads.scale(1.0 / n);
        if !(actor_grads.is_finite() && critic_grads.is_finite() && losses.actor.is_finite() && losses.critic.is_finite())
        {
            return Err(LaseError::Numeric(format!("actor-critic losses {losses:?}")));
        }
        self.actor.step(&actor_grads)?;
        self.critic.step(&critic_grads)?;
        Ok(losses)
    }
}

/// An agent in a roster: learners carry an actor-critic, gifters also carry
/// inference networks, scripted agents carry nothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub kind: AgentKind,
    pub brain: Option<ActorCritic>,
    pub sri: Option<SrNetworks>,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        id: usize,
        kind: AgentKind,
        n_agents: usize,
        n_actions: usize,
        obs_width: usize,
        hyper: &HyperParams,
        rng: &mut R,
    ) -> Result<Self> {
        let brain = if kind.is_scripted() {
            None
        } else {
            Some(ActorCritic::new(obs_width, n_actions, &hyper.hidden, hyper.lr_policy, hyper.gamma, rng)?)
        };
        let sri = if kind.gifts() {
            let settings = SriSettings {
                gamma_sc: hyper.gamma_sc,
                delta: hyper.delta,
                lr_policy: hyper.lr_sr_policy,
                lr_value: hyper.lr_sr_value,
                lr_conversion: hyper.lr_conversion,
            };
            let with_inference = kind == AgentKind::Lase;
            Some(SrNetworks::new(id, n_agents, n_actions, obs_width, &hyper.hidden, settings, with_inference, rng)?)
        } else {
            None
        };
        Ok(Self { id, kind, brain, sri })
    }

    /// Chooses an action. `cooperators` lists the roster's scripted
    /// cooperators so they can coordinate targets.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        env: &Env,
        epsilon: f64,
        cooperators: &[usize],
        rng: &mut R,
    ) -> Result<usize> {
        match &self.brain {
            Some(brain) => brain.act(obs, epsilon, rng),
            None => scripted_act(self.kind, env, self.id, cooperators, rng),
        }
    }
}

/// Rule-based behaviour of the scripted kinds.
///
/// Cooperators clean waste (Cleanup), pair up on stags (SSH), remove
/// snowdrifts (SSG), take only their own coins (Coingame) and always
/// cooperate (IPD). Defectors harvest apples, hunt hares, wait, grab any coin
/// and always defect. Random agents act uniformly.
pub fn scripted_act<R: Rng + ?Sized>(
    kind: AgentKind,
    env: &Env,
    agent: usize,
    cooperators: &[usize],
    rng: &mut R,
) -> Result<usize> {
    let n_actions = env.config().action_count();
    if kind == AgentKind::ScriptedRandom {
        return Ok(rng.gen_range(0..n_actions));
    }
    let cooperator = match kind {
        AgentKind::ScriptedCooperator => true,
        AgentKind::ScriptedDefector => false,
        other => return Err(contract(format!("{other} agents are not scripted"))),
    };
    let world = match env {
        Env::Ipd(_) => return Ok(if cooperator { COOPERATE } else { DEFECT }),
        Env::Grid(g) => g,
    };
    if !world.is_active(agent) {
        return Ok(STAY);
    }
    let here = world.positions()[agent];
    let kind = world.config().kind;
    let action = match (kind, cooperator) {
        (EnvKind::Cleanup | EnvKind::CleanupExtn, true) => {
            if world.count(Object::Waste) > 0 {
                seek(world, here, rng, &world.cells_with(Object::Waste), CLEAN)
            } else {
                harvest(world, here, rng)
            }
        }
        (EnvKind::Cleanup | EnvKind::CleanupExtn, false) => harvest(world, here, rng),
        (EnvKind::Ssh, true) => {
            let stags = world.cells_with(Object::Stag);
            let partners: Vec<usize> = cooperators.iter().copied().filter(|&k| world.is_active(k)).collect();
            match assigned_target(world, agent, &partners, &stags, 2) {
                Some(target) => seek(world, here, rng, &[target], HUNT_STAG),
                None => STAY,
            }
        }
        (EnvKind::Ssh, false) => seek(world, here, rng, &world.cells_with(Object::Hare), HUNT_HARE),
        (EnvKind::Ssg | EnvKind::SsgExtn, true) => {
            let drifts = world.cells_with(Object::Snowdrift);
            match assigned_target(world, agent, cooperators, &drifts, 1) {
                Some(target) => seek(world, here, rng, &[target], REMOVE_DRIFT),
                None => STAY,
            }
        }
        (EnvKind::Ssg | EnvKind::SsgExtn, false) => STAY,
        (EnvKind::Coingame, _) => coin_move(world, agent, cooperator, rng),
        (EnvKind::Ipd, _) => unreachable!("handled above"),
    };
    Ok(action)
}

/// Collects apples, wandering at random while there are none.
fn harvest<R: Rng + ?Sized>(world: &GridWorld, here: Cell, rng: &mut R) -> usize {
    let apples = world.cells_with(Object::Apple);
    if apples.is_empty() {
        return rng.gen_range(0..4);
    }
    seek(world, here, rng, &apples, PICK)
}

/// `on_target` when standing on one of `targets`, else a step toward the
/// nearest (ties broken by row-major order). `STAY` if there are none.
fn seek<R: Rng + ?Sized>(world: &GridWorld, here: Cell, rng: &mut R, targets: &[Cell], on_target: usize) -> usize {
    if targets.contains(&here) {
        return on_target;
    }
    match nearest(here, targets) {
        Some(t) => step_around(world, here, t, rng),
        None => STAY,
    }
}

/// Like `greedy_step`, but takes the other shortening axis when an agent
/// stands on the preferred cell, and sidesteps at random when both are
/// taken so that head-on seekers cannot deadlock.
fn step_around<R: Rng + ?Sized>(world: &GridWorld, from: Cell, to: Cell, rng: &mut R) -> usize {
    let size = world.config().map_size;
    let occupied = |c: Cell| {
        world.object_at(c) != Some(Object::Stag)
            && world.positions().iter().enumerate().any(|(k, &p)| p == c && world.is_active(k))
    };
    let vertical = if to.row < from.row { Some(UP) } else if to.row > from.row { Some(DOWN) } else { None };
    let horizontal = if to.col < from.col { Some(LEFT) } else if to.col > from.col { Some(RIGHT) } else { None };
    let options: Vec<usize> = [vertical, horizontal].into_iter().flatten().collect();
    if let Some(a) = options.iter().copied().find(|&a| !occupied(from.moved(a, size))) {
        return a;
    }
    let free: Vec<usize> = [UP, DOWN, LEFT, RIGHT]
        .into_iter()
        .filter(|&a| from.moved(a, size) != from && !occupied(from.moved(a, size)))
        .collect();
    if free.is_empty() {
        greedy_step(from, to)
    } else {
        free[rng.gen_range(0..free.len())]
    }
}

fn nearest(from: Cell, targets: &[Cell]) -> Option<Cell> {
    targets.iter().copied().min_by_key(|t| from.manhattan(*t))
}

/// Vertical first, then horizontal.
fn greedy_step(from: Cell, to: Cell) -> usize {
    if to.row < from.row {
        UP
    } else if to.row > from.row {
        DOWN
    } else if to.col < from.col {
        LEFT
    } else if to.col > from.col {
        RIGHT
    } else {
        STAY
    }
}

/// Target for `agent` when `members` share `targets` with at most `capacity`
/// per target. Members claim their nearest open target in turn; once every
/// target is full the rest go to their nearest one.
fn assigned_target(world: &GridWorld, agent: usize, members: &[usize], targets: &[Cell], capacity: usize) -> Option<Cell> {
    if targets.is_empty() {
        return None;
    }
    let mut load = vec![0usize; targets.len()];
    let mut ids: Vec<usize> = members.to_vec();
    if !ids.contains(&agent) {
        ids.push(agent);
    }
    // Agents already on a target keep it; the rest claim in id order.
    ids.sort_unstable_by_key(|&id| (!targets.contains(&world.positions()[id]), id));
    for id in ids {
        let from = world.positions()[id];
        let open = (0..targets.len()).filter(|&k| load[k] < capacity).min_by_key(|&k| from.manhattan(targets[k]));
        let pick = open.unwrap_or_else(|| {
            (0..targets.len()).min_by_key(|&k| from.manhattan(targets[k])).expect("targets non-empty")
        });
        load[pick] += 1;
        if id == agent {
            return Some(targets[pick]);
        }
    }
    None
}

/// Greedy coin chaser; cooperators chase only their own colour and step
/// randomly (never onto the coin) otherwise.
fn coin_move<R: Rng + ?Sized>(world: &GridWorld, agent: usize, cooperator: bool, rng: &mut R) -> usize {
    let here = world.positions()[agent];
    let size = world.config().map_size;
    let coin = world.all_cells().find(|&c| matches!(world.object_at(c), Some(Object::CoinRed | Object::CoinBlue)));
    let Some(coin) = coin else { return rng.gen_range(0..4) };
    let mine = world.object_at(coin) == Some(coin_of(agent));
    if mine || !cooperator {
        return match greedy_step(here, coin) {
            STAY => rng.gen_range(0..4),
            a => a,
        };
    }
    let safe: Vec<usize> = (0..4).filter(|&a| here.moved(a, size) != coin).collect();
    safe[rng.gen_range(0..safe.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chi_square_uniform(counts: &[usize]) -> f64 {
        let total: usize = counts.iter().sum();
        let expect = total as f64 / counts.len() as f64;
        counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum()
    }

    // Upper 1% points of χ² for 1..=6 degrees of freedom.
    const CHI2_99: [f64; 6] = [6.635, 9.210, 11.345, 13.277, 15.086, 16.812];

    #[test]
    fn schedule_interpolates_then_holds() {
        let s = ExplorationSchedule { eps_start: 0.5, eps_end: 0.05, eps_div: 2000 };
        assert_eq!(s.epsilon(0), 0.5);
        assert!((s.epsilon(1000) - 0.275).abs() < 1e-12);
        assert_eq!(s.epsilon(2000), 0.05);
        assert_eq!(s.epsilon(10_000), 0.05);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let peaked = [0.97, 0.01, 0.01, 0.01];
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[sample_index(&mixture_policy(&peaked, 1.0), &mut rng)] += 1;
        }
        assert!(chi_square_uniform(&counts) < CHI2_99[2], "{counts:?}");
    }

    #[test]
    fn no_exploration_follows_a_peaked_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let peaked = [0.0, 1.0, 0.0];
        assert!((0..1000).all(|_| sample_index(&mixture_policy(&peaked, 0.0), &mut rng) == 1));
    }

    #[test]
    fn half_exploration_of_uniform_stays_uniform() {
        let mixed = mixture_policy(&[0.25; 4], 0.5);
        assert!(mixed.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn actor_critic_solves_a_two_armed_bandit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ac = ActorCritic::new(1, 2, &[8], 1e-2, 0.9, &mut rng).unwrap();
        for _ in 0..2000 {
            let action = ac.act(&[1.0], 0.0, &mut rng).unwrap();
            let reward = if action == 0 { 1.0 } else { 0.0 };
            ac.update(&[PolicyStep { obs: vec![1.0], action, reward, next_obs: vec![1.0], terminal: true }])
                .unwrap();
        }
        assert!(ac.policy(&[1.0]).unwrap()[0] > 0.95);
    }

    #[test]
    fn terminal_steps_do_not_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ac = ActorCritic::new(2, 2, &[4], 1e-2, 0.9, &mut rng).unwrap();
        // A huge critic bias would leak into the target if bootstrapped.
        ac.critic.net.layers_mut().last_mut().unwrap().biases[0] = 1e6;
        let v = ac.critic.net.forward_scalar(&[1.0, 0.0]).unwrap();
        let losses = ac
            .update(&[PolicyStep { obs: vec![1.0, 0.0], action: 0, reward: 1.0, next_obs: vec![0.0, 1.0], terminal: true }])
            .unwrap();
        assert!((losses.critic - 0.5 * (v - 1.0) * (v - 1.0)).abs() < 1e-6 * v * v);
    }

    #[test]
    fn zero_rewards_with_zero_critic_leave_the_actor_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ac = ActorCritic::new(3, 4, &[5], 1e-2, 0.9, &mut rng).unwrap();
        for layer in ac.critic.net.layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        let before = ac.actor.net.clone();
        let steps: Vec<PolicyStep> = (0..5)
            .map(|t| PolicyStep { obs: vec![t as f64, 1.0, 0.0], action: t % 4, reward: 0.0, next_obs: vec![0.0; 3], terminal: t == 4 })
            .collect();
        ac.update(&steps).unwrap();
        assert_eq!(ac.actor.net, before);
    }

    #[test]
    fn group_rewards_sum() {
        assert_eq!(group_rewards(&[1.0, 0.0]), vec![1.0, 1.0]);
        assert_eq!(group_rewards(&[0.0; 3]), vec![0.0; 3]);
    }

    #[test]
    fn ablation_weight_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let settings = SriSettings { gamma_sc: 0.9, delta: 0.1, lr_policy: 0.0, lr_value: 0.0, lr_conversion: 0.0 };
        let mut sr = SrNetworks::new(0, 2, 2, 1, &[2], settings, false, &mut rng).unwrap();
        // Q = 1 when the co-player plays 0, else 0, via a linear net.
        let mut net = DenseApproximator::zeros(&[1 + 4, 1], OutputHead::Scalar).unwrap();
        net.layers_mut()[0].weights[3] = 1.0;
        sr.value = Learner::new(net, 0.0);
        assert_eq!(lase_wo_gift_weight(&sr, &[0.0], &[0, 0], 1).unwrap(), 0.5);
        assert_eq!(lase_wo_gift_weight(&sr, &[0.0], &[0, 1], 1).unwrap(), 0.0);
        sr.value = Learner::new(DenseApproximator::zeros(&[5, 1], OutputHead::Scalar).unwrap(), 0.0);
        assert_eq!(lase_wo_gift_weight(&sr, &[0.0], &[1, 0], 1).unwrap(), 0.0);
    }

    fn cleanup() -> Env {
        Env::new(EnvConfig::preset(EnvKind::Cleanup), 0).unwrap()
    }

    #[test]
    fn cooperator_cleans_waste_underfoot() {
        let mut env = cleanup();
        let Env::Grid(world) = &mut env else { unreachable!() };
        let waste = world.cells_with(Object::Waste)[0];
        world.set_position(0, waste);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(scripted_act(AgentKind::ScriptedCooperator, &env, 0, &[0], &mut rng).unwrap(), CLEAN);
    }

    #[test]
    fn cooperator_walks_to_nearest_waste() {
        let mut env = cleanup();
        let Env::Grid(world) = &mut env else { unreachable!() };
        for c in world.cells_with(Object::Waste) {
            world.set_object(c, None);
        }
        world.set_object(Cell::new(0, 5), Some(Object::Waste));
        world.set_object(Cell::new(1, 0), Some(Object::Waste));
        world.set_position(0, Cell::new(4, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(scripted_act(AgentKind::ScriptedCooperator, &env, 0, &[0], &mut rng).unwrap(), UP);
    }

    #[test]
    fn defector_without_apples_wanders_uniformly() {
        let env = cleanup();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            let a = scripted_act(AgentKind::ScriptedDefector, &env, 1, &[], &mut rng).unwrap();
            counts[a] += 1;
        }
        assert!(chi_square_uniform(&counts) < CHI2_99[2], "{counts:?}");
    }

    #[test]
    fn defector_picks_apples_underfoot() {
        let mut env = cleanup();
        let Env::Grid(world) = &mut env else { unreachable!() };
        world.set_position(2, Cell::new(6, 6));
        world.set_object(Cell::new(6, 6), Some(Object::Apple));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(scripted_act(AgentKind::ScriptedDefector, &env, 2, &[], &mut rng).unwrap(), PICK);
    }

    #[test]
    fn random_agent_is_uniform_over_actions() {
        let env = cleanup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 7];
        for _ in 0..100_000 {
            counts[scripted_act(AgentKind::ScriptedRandom, &env, 3, &[], &mut rng).unwrap()] += 1;
        }
        assert!(chi_square_uniform(&counts) < CHI2_99[5], "{counts:?}");
    }

    #[test]
    fn learners_cannot_be_scripted() {
        let env = cleanup();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(scripted_act(AgentKind::A2c, &env, 0, &[], &mut rng), Err(LaseError::Contract(_))));
    }

    #[test]
    fn ipd_scripts_are_constant() {
        let env = Env::new(EnvConfig::preset(EnvKind::Ipd), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(scripted_act(AgentKind::ScriptedCooperator, &env, 0, &[0], &mut rng).unwrap(), COOPERATE);
        assert_eq!(scripted_act(AgentKind::ScriptedDefector, &env, 1, &[], &mut rng).unwrap(), DEFECT);
    }

    #[test]
    fn stag_partners_share_a_target() {
        let env = Env::new(EnvConfig::preset(EnvKind::Ssh), 3).unwrap();
        let world = env.grid().unwrap();
        let stags = world.cells_with(Object::Stag);
        let t: Vec<Cell> = (0..4).map(|a| assigned_target(world, a, &[0, 1, 2, 3], &stags, 2).unwrap()).collect();
        for s in &stags {
            assert_eq!(t.iter().filter(|c| *c == s).count(), 2);
        }
    }

    #[test]
    fn kinds_round_trip_through_text() {
        for k in AgentKind::ALL {
            assert_eq!(k.to_string().parse::<AgentKind>().unwrap(), k);
        }
    }

    proptest! {
        #[test]
        fn mixtures_are_distributions(raw in prop::collection::vec(0.0f64..1.0, 1..10), eps in 0.0f64..=1.0) {
            let total: f64 = raw.iter().sum::<f64>() + 1e-12;
            let p: Vec<f64> = raw.iter().map(|r| (r + 1e-12 / raw.len() as f64) / total).collect();
            let m = mixture_policy(&p, eps);
            prop_assert!(m.iter().all(|&x| x >= 0.0));
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn schedule_never_increases(start in 0.0f64..=1.0, end_frac in 0.0f64..=1.0, div in 0usize..5000, e in 0usize..10_000) {
            let s = ExplorationSchedule { eps_start: start, eps_end: start * end_frac, eps_div: div };
            prop_assert!(s.epsilon(e + 1) <= s.epsilon(e) + 1e-15);
            if div > 0 { prop_assert_eq!(s.epsilon(0), start); }
            prop_assert_eq!(s.epsilon(div.max(e)), s.eps_end);
        }

        #[test]
        fn cleanup_cooperators_close_in_on_waste(seed in 0u64..1000, rng_seed in 0u64..4) {
            let env = Env::new(EnvConfig::preset(EnvKind::Cleanup), seed).unwrap();
            let world = env.grid().unwrap();
            let waste = world.cells_with(Object::Waste);
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            for agent in 0..4 {
                let here = world.positions()[agent];
                let a = scripted_act(AgentKind::ScriptedCooperator, &env, agent, &[0, 1, 2, 3], &mut rng).unwrap();
                if waste.contains(&here) {
                    prop_assert_eq!(a, CLEAN);
                    continue;
                }
                let target = *waste.iter().min_by_key(|w| here.manhattan(**w)).unwrap();
                let dist = |c: Cell| c.manhattan(target);
                let next = here.moved(a, 8);
                let blocked = [UP, DOWN, LEFT, RIGHT]
                    .into_iter()
                    .map(|m| here.moved(m, 8))
                    .filter(|&c| dist(c) < dist(here))
                    .all(|c| world.positions().contains(&c));
                prop_assert!(dist(next) < dist(here) || blocked, "agent {} at {:?} chose {}", agent, here, a);
            }
        }
    }
}
