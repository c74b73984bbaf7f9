//! Episode rollouts, zero-sum reward redistribution and the training loop.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{group_rewards, A2cLosses, Agent, AgentKind, ExplorationSchedule, PolicyStep};
use crate::envs::{Env, EnvConfig, EnvCounters, EnvKind, COOPERATE};
use crate::error::{contract, LaseError, Result};
use crate::metrics::equality;
use crate::sri::{GiftMatrix, SriLosses, Transition};

/// Largest tolerated drift between the summed total and extrinsic rewards.
pub const CONSERVATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub eps_start: f64,
    /// Episodes over which ε decays linearly.
    pub eps_div: usize,
    pub eps_end: f64,
    /// Discount of the acting policy's critic.
    pub gamma: f64,
    /// Discount of the social-relationship Q network.
    pub gamma_sc: f64,
    /// Weight of the L1 term in the conversion loss.
    pub delta: f64,
    pub lr_policy: f64,
    pub lr_sr_policy: f64,
    pub lr_sr_value: f64,
    pub lr_conversion: f64,
    /// Episodes between SRI updates.
    pub update_freq: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    /// Minibatch steps per SRI update.
    pub sri_steps: usize,
    pub buffer_capacity: usize,
}

impl HyperParams {
    /// Table values for the grid games.
    pub fn ssd() -> Self {
        Self {
            eps_start: 0.5,
            eps_div: 2000,
            eps_end: 0.05,
            gamma: 0.98,
            gamma_sc: 0.98,
            delta: 0.1,
            lr_policy: 1e-4,
            lr_sr_policy: 3e-5,
            lr_sr_value: 3e-5,
            lr_conversion: 5e-5,
            update_freq: 20,
            batch_size: 1000,
            hidden: vec![128, 64],
            sri_steps: 1,
            buffer_capacity: 50_000,
        }
    }

    /// Table values for the iterated prisoner's dilemma.
    pub fn ipd() -> Self {
        Self {
            eps_start: 0.5,
            eps_div: 1000,
            eps_end: 0.01,
            gamma: 0.95,
            gamma_sc: 0.98,
            delta: 0.1,
            lr_policy: 5e-3,
            lr_sr_policy: 1e-3,
            lr_sr_value: 1e-3,
            lr_conversion: 1e-3,
            update_freq: 20,
            batch_size: 64,
            hidden: vec![32],
            sri_steps: 1,
            buffer_capacity: 50_000,
        }
    }

    /// Grid-game settings for short runs with small flat networks: faster
    /// learning rates and schedule, more frequent SRI updates.
    pub fn desk_ssd() -> Self {
        Self {
            eps_div: 500,
            lr_policy: 1e-3,
            lr_sr_policy: 1e-3,
            lr_sr_value: 1e-3,
            lr_conversion: 1e-3,
            update_freq: 10,
            batch_size: 256,
            hidden: vec![64, 32],
            sri_steps: 2,
            ..Self::ssd()
        }
    }

    pub fn for_env(kind: EnvKind) -> Self {
        if kind == EnvKind::Ipd {
            Self::ipd()
        } else {
            Self::ssd()
        }
    }

    pub fn schedule(&self) -> ExplorationSchedule {
        ExplorationSchedule { eps_start: self.eps_start, eps_end: self.eps_end, eps_div: self.eps_div }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(LaseError::Config(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        unit("eps_start", self.eps_start)?;
        unit("eps_end", self.eps_end)?;
        unit("gamma", self.gamma)?;
        unit("gamma_sc", self.gamma_sc)?;
        unit("delta", self.delta)?;
        for (name, lr) in [
            ("lr_policy", self.lr_policy),
            ("lr_sr_policy", self.lr_sr_policy),
            ("lr_sr_value", self.lr_sr_value),
            ("lr_conversion", self.lr_conversion),
        ] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(LaseError::Config(format!("{name} = {lr} must be a nonnegative number")));
            }
        }
        for (name, v) in [
            ("update_freq", self.update_freq),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return Err(LaseError::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(LaseError::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// A buffered transition tagged with the episode that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct BufferedTransition {
    pub episode: usize,
    pub transition: Transition,
}

/// FIFO store of one agent's transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBuffer {
    capacity: usize,
    records: VecDeque<BufferedTransition>,
}

impl TrajectoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, records: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, episode: usize, transition: Transition) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(BufferedTransition { episode, transition });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &BufferedTransition> {
        self.records.iter()
    }

    /// Up to `batch` distinct records.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&BufferedTransition> {
        let amount = batch.min(self.records.len());
        index::sample(rng, self.records.len(), amount).into_iter().map(|k| &self.records[k]).collect()
    }
}

/// `rTot_i = Σ_j w^{ji}·r_j`: agent `i` keeps its diagonal share and
/// receives what every co-player hands over.
pub fn redistribute(w: &GiftMatrix, rewards: &[f64]) -> Result<Vec<f64>> {
    let n = w.size();
    if rewards.len() != n {
        return Err(contract(format!("{} rewards for a {n}-agent gift matrix", rewards.len())));
    }
    w.check()?;
    Ok((0..n).map(|i| (0..n).map(|j| w.get(j, i) * rewards[j]).sum()).collect())
}

/// Everything that happened at one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub observations: Vec<Vec<f64>>,
    /// Activity before the step.
    pub active: Vec<bool>,
    pub joint: Vec<usize>,
    pub rewards: Vec<f64>,
    pub gifts: GiftMatrix,
    pub totals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub final_observations: Vec<Vec<f64>>,
    pub final_active: Vec<bool>,
    pub counters: EnvCounters,
}

impl EpisodeRecord {
    pub fn extrinsic_returns(&self) -> Vec<f64> {
        self.sum_per_agent(|s| &s.rewards)
    }

    pub fn total_returns(&self) -> Vec<f64> {
        self.sum_per_agent(|s| &s.totals)
    }

    fn sum_per_agent(&self, pick: impl Fn(&StepRecord) -> &Vec<f64>) -> Vec<f64> {
        let n = self.final_active.len();
        let mut out = vec![0.0; n];
        for s in &self.steps {
            out.iter_mut().zip(pick(s)).for_each(|(o, r)| *o += r);
        }
        out
    }

    /// Gift matrix averaged over the episode's steps.
    pub fn mean_gifts(&self) -> Vec<Vec<f64>> {
        let n = self.final_active.len();
        let mut m = vec![vec![0.0; n]; n];
        if self.steps.is_empty() {
            (0..n).for_each(|i| m[i][i] = 1.0);
            return m;
        }
        for s in &self.steps {
            for (i, row) in m.iter_mut().enumerate() {
                row.iter_mut().zip(s.gifts.row(i)).for_each(|(a, w)| *a += w);
            }
        }
        let len = self.steps.len() as f64;
        m.iter_mut().flatten().for_each(|v| *v /= len);
        m
    }

    fn observation_after(&self, t: usize) -> &[Vec<f64>] {
        self.steps.get(t + 1).map_or(&self.final_observations, |s| &s.observations)
    }

    fn active_after(&self, t: usize) -> &[bool] {
        self.steps.get(t + 1).map_or(&self.final_active, |s| &s.active)
    }

    /// The actor-critic trajectory of `agent` under `kind`'s reward stream.
    pub fn policy_steps(&self, agent: usize, kind: AgentKind) -> Vec<PolicyStep> {
        let last = self.steps.len().saturating_sub(1);
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.active[agent])
            .map(|(t, s)| {
                let reward = match kind {
                    AgentKind::Lase | AgentKind::LaseWo => s.totals[agent],
                    AgentKind::Go => group_rewards(&s.rewards)[agent],
                    _ => s.rewards[agent],
                };
                PolicyStep {
                    obs: s.observations[agent].clone(),
                    action: s.joint[agent],
                    reward,
                    next_obs: self.observation_after(t)[agent].clone(),
                    terminal: t == last || !self.active_after(t)[agent],
                }
            })
            .collect()
    }

    /// Transitions for `agent`'s SRI buffer, with extrinsic rewards.
    pub fn transitions(&self, agent: usize) -> Vec<Transition> {
        let last = self.steps.len().saturating_sub(1);
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.active[agent])
            .map(|(t, s)| {
                let ends = t == last || !self.active_after(t)[agent];
                Transition {
                    obs: s.observations[agent].clone(),
                    joint: s.joint.clone(),
                    reward: s.rewards[agent],
                    next_obs: self.observation_after(t)[agent].clone(),
                    next_joint: (!ends).then(|| self.steps[t + 1].joint.clone()),
                }
            })
            .collect()
    }

    /// Share of cooperative moves over all agents and steps; IPD only.
    pub fn cooperation_rate(&self) -> f64 {
        let moves: Vec<usize> = self.steps.iter().flat_map(|s| s.joint.iter().copied()).collect();
        moves.iter().filter(|&&a| a == COOPERATE).count() as f64 / moves.len().max(1) as f64
    }
}

/// Plays one episode and computes every step's gift matrix afterwards from
/// the agents' current (frozen) networks. With `real_observations`, gifters
/// read co-players' true observations instead of imagining them.
pub fn run_episode<R: Rng + ?Sized>(
    env: &mut Env,
    agents: &[Agent],
    epsilon: f64,
    seed: u64,
    episode: usize,
    real_observations: bool,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let n = env.config().n_agents;
    if agents.len() != n {
        return Err(contract(format!("{} agents for a {n}-agent environment", agents.len())));
    }
    let cooperators: Vec<usize> =
        agents.iter().filter(|a| a.kind == AgentKind::ScriptedCooperator).map(|a| a.id).collect();
    let mut observations: Vec<Vec<f64>> = env.reset(seed).into_iter().map(|o| o.data).collect();
    let mut rollout = Vec::new();
    loop {
        let active: Vec<bool> = (0..n).map(|i| env.is_active(i)).collect();
        let joint = agents
            .iter()
            .map(|a| a.act(&observations[a.id], env, epsilon, &cooperators, rng))
            .collect::<Result<Vec<usize>>>()?;
        let result = env.step(&joint)?;
        let next: Vec<Vec<f64>> = result.observations.into_iter().map(|o| o.data).collect();
        rollout.push((std::mem::replace(&mut observations, next), active, joint, result.rewards));
        if result.done {
            break;
        }
    }

    let steps = rollout
        .into_par_iter()
        .map(|(obs, active, joint, rewards)| {
            let rows = (0..n)
                .map(|i| match &agents[i].sri {
                    Some(sr) if active[i] => {
                        let truth = real_observations.then_some(obs.as_slice());
                        sr.gift_row(&obs[i], &joint, &active, truth)
                    }
                    _ => Ok(vec![0.0; n]),
                })
                .collect::<Result<Vec<_>>>()?;
            let gifts = GiftMatrix::from_off_diagonal(&rows)?;
            let totals = redistribute(&gifts, &rewards)?;
            let drift = totals.iter().sum::<f64>() - rewards.iter().sum::<f64>();
            if drift.abs() > CONSERVATION_TOL {
                return Err(LaseError::Numeric(format!("redistribution changed the group reward by {drift}")));
            }
            Ok(StepRecord { observations: obs, active, joint, rewards, gifts, totals })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EpisodeRecord {
        episode,
        seed,
        steps,
        final_observations: observations,
        final_active: (0..n).map(|i| env.is_active(i)).collect(),
        counters: env.counters(),
    })
}

/// One JSON line per episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub epsilon: f64,
    pub extrinsic: Vec<f64>,
    pub total: Vec<f64>,
    pub collective: f64,
    /// Absent when the collective return is not positive.
    pub equality: Option<f64>,
    /// Row `i`, column `j`: mean share of `i`'s reward given to `j`.
    pub gifts: Vec<Vec<f64>>,
    pub counters: EnvCounters,
    pub cooperation_rate: Option<f64>,
    pub policy_losses: Vec<Option<A2cLosses>>,
    pub sri_losses: Vec<Option<SriLosses>>,
}

const STREAM_ENV: u64 = 0;
const STREAM_ACT: u64 = 1;
const STREAM_SRI: u64 = 2;
const STREAM_INIT: u64 = 3;

/// Independent generator for `(seed, episode, purpose)`; resuming at any
/// episode reproduces the same draws.
pub fn stream_rng(seed: u64, episode: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 * 4 + purpose);
    rng
}

/// Serialised agents plus the position in the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentsCheckpoint {
    pub format: String,
    pub version: u32,
    /// Number of completed episodes.
    pub episode: usize,
    pub seed: u64,
    pub agents: Vec<Agent>,
}

impl AgentsCheckpoint {
    pub const FORMAT: &'static str = "lase-agents";
    pub const VERSION: u32 = 1;

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut de = serde_json::Deserializer::from_str(&text);
        let ckpt: Self = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| LaseError::Config(format!("{}: {} at `{}`", path.display(), e.inner(), e.path())))?;
        if ckpt.format != Self::FORMAT || ckpt.version != Self::VERSION {
            return Err(LaseError::Config(format!(
                "{}: expected {} v{}, found {} v{}",
                path.display(),
                Self::FORMAT,
                Self::VERSION,
                ckpt.format,
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

/// One training replica: environment, roster and per-agent buffers.
pub struct Trainer {
    pub env_config: EnvConfig,
    pub hyper: HyperParams,
    pub agents: Vec<Agent>,
    pub buffers: Vec<TrajectoryBuffer>,
    pub seed: u64,
    /// Completed episodes.
    pub episode: usize,
    env: Env,
}

impl Trainer {
    pub fn new(env_config: EnvConfig, roster: &[AgentKind], hyper: HyperParams, seed: u64) -> Result<Self> {
        env_config.validate()?;
        hyper.validate()?;
        let n = env_config.n_agents;
        if roster.len() != n {
            return Err(LaseError::Config(format!("roster has {} agents, environment needs {n}", roster.len())));
        }
        let mut rng = stream_rng(seed, 0, STREAM_INIT);
        let agents = roster
            .iter()
            .enumerate()
            .map(|(id, &kind)| {
                Agent::new(id, kind, n, env_config.action_count(), env_config.observation_width(), &hyper, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_agents(env_config, agents, hyper, seed, 0)
    }

    /// Resumes from a checkpoint. Buffers start empty.
    pub fn from_checkpoint(env_config: EnvConfig, hyper: HyperParams, ckpt: AgentsCheckpoint) -> Result<Self> {
        Self::with_agents(env_config, ckpt.agents, hyper, ckpt.seed, ckpt.episode)
    }

    fn with_agents(env_config: EnvConfig, agents: Vec<Agent>, hyper: HyperParams, seed: u64, episode: usize) -> Result<Self> {
        if agents.len() != env_config.n_agents {
            return Err(LaseError::Config(format!(
                "{} agents for a {}-agent environment",
                agents.len(),
                env_config.n_agents
            )));
        }
        let env = Env::new(env_config, seed)?;
        let buffers = agents.iter().map(|_| TrajectoryBuffer::new(hyper.buffer_capacity)).collect();
        Ok(Self { env_config, hyper, agents, buffers, seed, episode, env })
    }

    pub fn checkpoint(&self) -> AgentsCheckpoint {
        AgentsCheckpoint {
            format: AgentsCheckpoint::FORMAT.into(),
            version: AgentsCheckpoint::VERSION,
            episode: self.episode,
            seed: self.seed,
            agents: self.agents.clone(),
        }
    }

    pub fn env_seed(&self, episode: usize) -> u64 {
        stream_rng(self.seed, episode, STREAM_ENV).gen()
    }

    /// Rolls out one episode without learning.
    pub fn evaluate(&mut self, episode: usize, epsilon: f64, real_observations: bool) -> Result<EpisodeRecord> {
        let mut rng = stream_rng(self.seed, episode, STREAM_ACT);
        let env_seed = self.env_seed(episode);
        run_episode(&mut self.env, &self.agents, epsilon, env_seed, episode, real_observations, &mut rng)
    }

    /// Rollout, redistribution, policy updates on each agent's reward stream
    /// and, every `update_freq` episodes, SRI updates from the buffers.
    pub fn train_episode(&mut self) -> Result<(EpisodeRecord, EpisodeMetrics)> {
        let episode = self.episode;
        let epsilon = self.hyper.schedule().epsilon(episode);
        let record = self.evaluate(episode, epsilon, false)?;

        let policy_losses = self
            .agents
            .par_iter_mut()
            .map(|agent| match agent.brain.as_mut() {
                Some(brain) => brain.update(&record.policy_steps(agent.id, agent.kind)).map(Some),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| self.diagnose(episode, e))?;

        for agent in self.agents.iter().filter(|a| a.sri.is_some()) {
            for t in record.transitions(agent.id) {
                self.buffers[agent.id].push(episode, t);
            }
        }

        let sri_due = (episode + 1).is_multiple_of(self.hyper.update_freq);
        let (batch, steps, seed) = (self.hyper.batch_size, self.hyper.sri_steps, self.seed);
        let sri_losses = self
            .agents
            .par_iter_mut()
            .zip(self.buffers.par_iter())
            .map(|(agent, buffer)| match agent.sri.as_mut() {
                Some(sr) if sri_due && !buffer.is_empty() => {
                    let mut rng = stream_rng(seed, episode, STREAM_SRI);
                    rng.set_word_pos(agent.id as u128 * (1 << 40));
                    let mut last = SriLosses::default();
                    for _ in 0..steps {
                        let sample: Vec<Transition> =
                            buffer.sample(batch, &mut rng).into_iter().map(|b| b.transition.clone()).collect();
                        last = sr.update(&sample)?;
                    }
                    Ok(Some(last))
                }
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| self.diagnose(episode, e))?;

        self.episode += 1;
        let extrinsic = record.extrinsic_returns();
        let collective: f64 = extrinsic.iter().sum();
        let metrics = EpisodeMetrics {
            episode,
            epsilon,
            total: record.total_returns(),
            equality: if collective > 0.0 { equality(&extrinsic).ok() } else { None },
            extrinsic,
            collective,
            gifts: record.mean_gifts(),
            counters: record.counters,
            cooperation_rate: (self.env_config.kind == EnvKind::Ipd).then(|| record.cooperation_rate()),
            policy_losses,
            sri_losses,
        };
        Ok((record, metrics))
    }

    fn diagnose(&self, episode: usize, err: LaseError) -> LaseError {
        match err {
            LaseError::Numeric(msg) => {
                let roster: Vec<String> = self.agents.iter().map(|a| format!("{}:{}", a.id, a.kind)).collect();
                LaseError::Numeric(format!(
                    "{msg} (episode {episode}, seed {}, roster [{}], buffers {:?})",
                    self.seed,
                    roster.join(", "),
                    self.buffers.iter().map(TrajectoryBuffer::len).collect::<Vec<_>>()
                ))
            }
            other => other,
        }
    }

    /// Trains until `episodes` episodes are complete, handing each episode's
    /// metrics to `sink`.
    pub fn train(&mut self, episodes: usize, mut sink: impl FnMut(&Trainer, &EpisodeMetrics) -> Result<()>) -> Result<()> {
        while self.episode < episodes {
            let (_, metrics) = self.train_episode()?;
            sink(self, &metrics)?;
        }
        Ok(())
    }
}
