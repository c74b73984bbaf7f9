//! Run configuration: named presets plus TOML files that select a preset and
//! override any subset of its fields.
//!
//! ```toml
//! preset = "ssg-selfplay"
//! episodes = 5000
//! seed = 3
//!
//! [hyper]
//! lr_policy = 1e-3
//!
//! [environment]
//! episode_len = 40
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::envs::{EnvConfig, EnvKind, EnvParams};
use crate::error::{LaseError, Result};
use crate::trainer::HyperParams;

/// A fully resolved training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub env: EnvConfig,
    pub agents: Vec<AgentKind>,
    pub hyper: HyperParams,
    pub episodes: usize,
    pub seed: u64,
    /// Episodes between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Trailing episodes summarised at the end of a run.
    pub summary_window: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.hyper.validate()?;
        if self.agents.len() != self.env.n_agents {
            return Err(LaseError::Config(format!(
                "agents: {} listed but {} needs {}",
                self.agents.len(),
                self.env.kind,
                self.env.n_agents
            )));
        }
        if self.episodes == 0 {
            return Err(LaseError::Config("episodes must be positive".into()));
        }
        if self.summary_window == 0 {
            return Err(LaseError::Config("summary_window must be positive".into()));
        }
        Ok(())
    }
}

const LEARNERS: [(&str, AgentKind); 4] =
    [("selfplay", AgentKind::Lase), ("lase-wo", AgentKind::LaseWo), ("a2c", AgentKind::A2c), ("go", AgentKind::Go)];

/// Every preset name. Self-play presets exist for each environment and
/// learner (`<env>-selfplay`, `<env>-lase-wo`, `<env>-a2c`, `<env>-go`);
/// `desk-*` presets are shortened variants sized for a desktop CPU.
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = EnvKind::ALL
        .iter()
        .flat_map(|env| LEARNERS.iter().map(move |(suffix, _)| format!("{env}-{suffix}")))
        .collect();
    names.push("cleanup-mixed-scripted".into());
    names.extend(["desk-ssg-selfplay", "desk-ssg-a2c", "desk-cleanup-mixed-scripted"].map(String::from));
    names
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let unknown = || LaseError::Config(format!("unknown preset `{name}`; known: {}", preset_names().join(", ")));
    let make = |env: EnvKind, kinds: Vec<AgentKind>, hyper: HyperParams, episodes: usize| RunConfig {
        name: name.to_string(),
        env: EnvConfig::preset(env),
        agents: kinds,
        hyper,
        episodes,
        seed: 0,
        checkpoint_every: 1000,
        summary_window: 1000,
    };
    let mixed = vec![
        AgentKind::Lase,
        AgentKind::ScriptedCooperator,
        AgentKind::ScriptedDefector,
        AgentKind::ScriptedRandom,
    ];
    match name {
        "cleanup-mixed-scripted" => return Ok(make(EnvKind::Cleanup, mixed, HyperParams::ssd(), 30_000)),
        "desk-ssg-selfplay" => {
            return Ok(make(EnvKind::Ssg, vec![AgentKind::Lase; 4], HyperParams::desk_ssd(), 4000));
        }
        "desk-ssg-a2c" => return Ok(make(EnvKind::Ssg, vec![AgentKind::A2c; 4], HyperParams::desk_ssd(), 4000)),
        "desk-cleanup-mixed-scripted" => {
            return Ok(make(EnvKind::Cleanup, mixed, HyperParams::desk_ssd(), 3000));
        }
        _ => {}
    }
    let (env, rest) = EnvKind::ALL
        .iter()
        .filter_map(|k| name.strip_prefix(&format!("{k}-")).map(|rest| (*k, rest)))
        // "cleanup-extn-…" also matches "cleanup-"; prefer the longest kind.
        .max_by_key(|(k, _)| k.to_string().len())
        .ok_or_else(unknown)?;
    let kind = LEARNERS.iter().find(|(suffix, _)| *suffix == rest).map(|(_, k)| *k).ok_or_else(unknown)?;
    let n = EnvConfig::preset(env).n_agents;
    let episodes = if env == EnvKind::Ipd { 10_000 } else { 30_000 };
    Ok(make(env, vec![kind; n], HyperParams::for_env(env), episodes))
}

/// Field-by-field overrides of [`HyperParams`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub eps_start: Option<f64>,
    pub eps_div: Option<usize>,
    pub eps_end: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_sc: Option<f64>,
    pub delta: Option<f64>,
    pub lr_policy: Option<f64>,
    pub lr_sr_policy: Option<f64>,
    pub lr_sr_value: Option<f64>,
    pub lr_conversion: Option<f64>,
    pub update_freq: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub sri_steps: Option<usize>,
    pub buffer_capacity: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    pub n_agents: Option<usize>,
    pub map_size: Option<usize>,
    pub episode_len: Option<usize>,
    pub view_size: Option<usize>,
    pub params: Option<EnvParams>,
}

/// Contents of a run file. Without `preset`, `env` and `agents` are required
/// and the environment's table defaults apply.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub env: Option<EnvKind>,
    pub agents: Option<Vec<AgentKind>>,
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoint_every: Option<usize>,
    pub summary_window: Option<usize>,
    pub hyper: Option<HyperOverrides>,
    pub environment: Option<EnvOverrides>,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            LaseError::Config(format!("at `{path}`: {}", e.into_inner().message().trim()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| LaseError::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let mut run = match (&self.preset, self.env) {
            (Some(name), _) => preset(name)?,
            (None, Some(env)) => {
                let agents = self
                    .agents
                    .clone()
                    .ok_or_else(|| LaseError::Config("at `agents`: required when no preset is given".into()))?;
                RunConfig {
                    name: env.to_string(),
                    env: EnvConfig::preset(env),
                    agents,
                    hyper: HyperParams::for_env(env),
                    episodes: if env == EnvKind::Ipd { 10_000 } else { 30_000 },
                    seed: 0,
                    checkpoint_every: 1000,
                    summary_window: 1000,
                }
            }
            (None, None) => return Err(LaseError::Config("at `preset`: either `preset` or `env` is required".into())),
        };
        if let (Some(_), Some(env)) = (&self.preset, self.env) {
            if env != run.env.kind {
                return Err(LaseError::Config(format!(
                    "at `env`: `{env}` contradicts preset environment `{}`",
                    run.env.kind
                )));
            }
        }
        if let Some(agents) = &self.agents {
            run.agents = agents.clone();
        }
        if let Some(name) = &self.name {
            run.name = name.clone();
        }
        set(&mut run.episodes, self.episodes);
        set(&mut run.seed, self.seed);
        set(&mut run.checkpoint_every, self.checkpoint_every);
        set(&mut run.summary_window, self.summary_window);
        if let Some(h) = &self.hyper {
            let p = &mut run.hyper;
            set(&mut p.eps_start, h.eps_start);
            set(&mut p.eps_div, h.eps_div);
            set(&mut p.eps_end, h.eps_end);
            set(&mut p.gamma, h.gamma);
            set(&mut p.gamma_sc, h.gamma_sc);
            set(&mut p.delta, h.delta);
            set(&mut p.lr_policy, h.lr_policy);
            set(&mut p.lr_sr_policy, h.lr_sr_policy);
            set(&mut p.lr_sr_value, h.lr_sr_value);
            set(&mut p.lr_conversion, h.lr_conversion);
            set(&mut p.update_freq, h.update_freq);
            set(&mut p.batch_size, h.batch_size);
            set(&mut p.hidden, h.hidden.clone());
            set(&mut p.sri_steps, h.sri_steps);
            set(&mut p.buffer_capacity, h.buffer_capacity);
        }
        if let Some(e) = &self.environment {
            set(&mut run.env.n_agents, e.n_agents);
            set(&mut run.env.map_size, e.map_size);
            set(&mut run.env.episode_len, e.episode_len);
            set(&mut run.env.view_size, e.view_size);
            set(&mut run.env.params, e.params);
        }
        run.validate()?;
        Ok(run)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
