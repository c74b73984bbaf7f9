//! The five games: memory-1 IPD, Coingame, Cleanup, Sequential Stag-Hunt
//! and Sequential Snowdrift, plus the 8-player Cleanup/SSG variants.
//!
//! Grid games share one state type ([`GridWorld`]); per-game rules live in
//! their own files. Actions are plain indices into each game's action list.

mod cleanup;
mod coin_game;
mod grid;
mod ipd;
mod snowdrift;
mod stag_hunt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LaseError, Result};
use crate::matrix_dynamics::GameParams;

pub use cleanup::apple_spawn_probability;
pub use coin_game::{coin_of, owner as coin_owner};
pub use grid::{Cell, GridWorld, Object};
pub use ipd::{ipd_payoff, IpdEnv, IpdState};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const STAY: usize = 4;
/// Cleanup: remove waste on the current cell.
pub const CLEAN: usize = 5;
/// Cleanup: collect the apple on the current cell.
pub const PICK: usize = 6;
pub const HUNT_HARE: usize = 5;
pub const HUNT_STAG: usize = 6;
pub const REMOVE_DRIFT: usize = 5;
pub const COOPERATE: usize = 0;
pub const DEFECT: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Ipd,
    Coingame,
    Cleanup,
    Ssh,
    Ssg,
    CleanupExtn,
    SsgExtn,
}

impl EnvKind {
    pub const ALL: [EnvKind; 7] = [
        EnvKind::Ipd,
        EnvKind::Coingame,
        EnvKind::Cleanup,
        EnvKind::Ssh,
        EnvKind::Ssg,
        EnvKind::CleanupExtn,
        EnvKind::SsgExtn,
    ];

    pub fn action_count(self) -> usize {
        match self {
            EnvKind::Ipd => 2,
            EnvKind::Coingame => 4,
            EnvKind::Cleanup | EnvKind::CleanupExtn | EnvKind::Ssh => 7,
            EnvKind::Ssg | EnvKind::SsgExtn => 6,
        }
    }

    pub fn is_cleanup(self) -> bool {
        matches!(self, EnvKind::Cleanup | EnvKind::CleanupExtn)
    }

    pub fn is_snowdrift(self) -> bool {
        matches!(self, EnvKind::Ssg | EnvKind::SsgExtn)
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EnvKind::Ipd => "ipd",
            EnvKind::Coingame => "coingame",
            EnvKind::Cleanup => "cleanup",
            EnvKind::Ssh => "ssh",
            EnvKind::Ssg => "ssg",
            EnvKind::CleanupExtn => "cleanup-extn",
            EnvKind::SsgExtn => "ssg-extn",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for EnvKind {
    type Err = LaseError;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| LaseError::Config(format!("unknown environment `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanupParams {
    pub apple_respawn_probability: f64,
    pub waste_spawn_probability: f64,
    pub threshold_depletion: f64,
    pub threshold_restoration: f64,
    pub init_waste_count: usize,
    /// Rows at the top of the map that form the river.
    pub river_rows: usize,
}

impl Default for CleanupParams {
    fn default() -> Self {
        Self {
            apple_respawn_probability: 0.4,
            waste_spawn_probability: 0.5,
            threshold_depletion: 0.5,
            threshold_restoration: 0.0,
            init_waste_count: 8,
            river_rows: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagHuntParams {
    pub n_stags: usize,
    pub n_hares: usize,
    /// Split equally among the hunters.
    pub stag_reward: f64,
    pub hare_reward: f64,
}

impl Default for StagHuntParams {
    fn default() -> Self {
        Self { n_stags: 2, n_hares: 4, stag_reward: 10.0, hare_reward: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnowdriftParams {
    pub n_snowdrifts: usize,
    /// Paid to every agent, the remover included.
    pub drift_reward: f64,
    pub removal_cost: f64,
}

impl Default for SnowdriftParams {
    fn default() -> Self {
        Self { n_snowdrifts: 6, drift_reward: 6.0, removal_cost: 4.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvParams {
    Matrix(GameParams),
    Coin,
    Cleanup(CleanupParams),
    StagHunt(StagHuntParams),
    Snowdrift(SnowdriftParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub map_size: usize,
    pub n_agents: usize,
    pub episode_len: usize,
    pub view_size: usize,
    pub params: EnvParams,
}

impl EnvConfig {
    pub fn preset(kind: EnvKind) -> Self {
        let grid = |map_size, n_agents, episode_len, view_size, params| EnvConfig {
            kind,
            map_size,
            n_agents,
            episode_len,
            view_size,
            params,
        };
        match kind {
            EnvKind::Ipd => grid(0, 2, 100, 0, EnvParams::Matrix(GameParams::ipd())),
            EnvKind::Coingame => grid(5, 2, 100, 5, EnvParams::Coin),
            EnvKind::Cleanup => grid(8, 4, 100, 5, EnvParams::Cleanup(CleanupParams::default())),
            EnvKind::Ssh => grid(8, 4, 30, 5, EnvParams::StagHunt(StagHuntParams::default())),
            EnvKind::Ssg => grid(8, 4, 50, 5, EnvParams::Snowdrift(SnowdriftParams::default())),
            EnvKind::CleanupExtn => grid(
                12,
                8,
                150,
                7,
                EnvParams::Cleanup(CleanupParams { init_waste_count: 16, ..CleanupParams::default() }),
            ),
            EnvKind::SsgExtn => grid(
                12,
                8,
                70,
                7,
                EnvParams::Snowdrift(SnowdriftParams { n_snowdrifts: 12, ..SnowdriftParams::default() }),
            ),
        }
    }

    pub fn action_count(&self) -> usize {
        self.kind.action_count()
    }

    pub fn channels(&self) -> usize {
        match self.kind {
            EnvKind::Ipd => 1,
            EnvKind::Coingame => 5,
            EnvKind::Cleanup | EnvKind::CleanupExtn | EnvKind::Ssh => self.n_agents + 3,
            EnvKind::Ssg | EnvKind::SsgExtn => self.n_agents + 2,
        }
    }

    /// Length of the flattened observation vector.
    pub fn observation_width(&self) -> usize {
        match self.kind {
            EnvKind::Ipd => IpdState::WIDTH,
            _ => self.channels() * self.view_size * self.view_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LaseError::Config(msg));
        if self.n_agents < 2 {
            return bad(format!("need at least 2 agents, got {}", self.n_agents));
        }
        if self.episode_len == 0 {
            return bad("episode_len must be positive".into());
        }
        let params_match = matches!(
            (self.kind, &self.params),
            (EnvKind::Ipd, EnvParams::Matrix(_))
                | (EnvKind::Coingame, EnvParams::Coin)
                | (EnvKind::Cleanup | EnvKind::CleanupExtn, EnvParams::Cleanup(_))
                | (EnvKind::Ssh, EnvParams::StagHunt(_))
                | (EnvKind::Ssg | EnvKind::SsgExtn, EnvParams::Snowdrift(_))
        );
        if !params_match {
            return bad(format!("parameters do not belong to environment {}", self.kind));
        }
        if self.kind == EnvKind::Ipd {
            return if self.n_agents == 2 { Ok(()) } else { bad("IPD is a two-player game".into()) };
        }
        if self.kind == EnvKind::Coingame && self.n_agents != 2 {
            return bad("Coingame is a two-player game".into());
        }
        if self.map_size == 0 || self.view_size.is_multiple_of(2) {
            return bad(format!(
                "map_size must be positive and view_size odd, got {} and {}",
                self.map_size, self.view_size
            ));
        }
        let cells = self.map_size * self.map_size;
        let objects = match self.params {
            EnvParams::Cleanup(p) => {
                if p.river_rows == 0 || p.river_rows >= self.map_size {
                    return bad(format!("river_rows {} leaves no river or no orchard", p.river_rows));
                }
                if p.init_waste_count > p.river_rows * self.map_size {
                    return bad("init_waste_count exceeds river capacity".into());
                }
                for (name, v) in [
                    ("apple_respawn_probability", p.apple_respawn_probability),
                    ("waste_spawn_probability", p.waste_spawn_probability),
                ] {
                    if !(0.0..=1.0).contains(&v) {
                        return bad(format!("{name} must be a probability, got {v}"));
                    }
                }
                if !(p.threshold_depletion > p.threshold_restoration && p.threshold_restoration >= 0.0) {
                    return bad("need threshold_depletion > threshold_restoration >= 0".into());
                }
                p.init_waste_count
            }
            EnvParams::StagHunt(p) => p.n_stags + p.n_hares,
            EnvParams::Snowdrift(p) => p.n_snowdrifts,
            _ => 1,
        };
        if self.n_agents + objects > cells {
            return bad(format!("{} agents and {objects} objects do not fit on {cells} cells", self.n_agents));
        }
        Ok(())
    }
}

/// A flattened `channels × height × width` binary view.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Observation {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[channel * plane..(channel + 1) * plane]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// Event counts accumulated over an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvCounters {
    pub waste_cleaned: usize,
    pub apples_picked: usize,
    pub stags_hunted: usize,
    pub hares_hunted: usize,
    pub drifts_removed: usize,
    pub coins_own: usize,
    pub coins_other: usize,
}

/// Either game family behind one interface.
#[derive(Clone, Debug)]
pub enum Env {
    Ipd(IpdEnv),
    Grid(GridWorld),
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(match config.kind {
            EnvKind::Ipd => Env::Ipd(IpdEnv::new(config)?),
            _ => Env::Grid(GridWorld::new(config, seed)?),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        match self {
            Env::Ipd(e) => e.config(),
            Env::Grid(g) => g.config(),
        }
    }

    pub fn reset(&mut self, seed: u64) -> Vec<Observation> {
        match self {
            Env::Ipd(e) => e.reset(),
            Env::Grid(g) => g.reset(seed),
        }
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        match self {
            Env::Ipd(e) => e.step(actions),
            Env::Grid(g) => g.step(actions),
        }
    }

    pub fn observe(&self, agent: usize) -> Observation {
        match self {
            Env::Ipd(e) => e.observe(),
            Env::Grid(g) => g.observe(agent),
        }
    }

    pub fn is_active(&self, agent: usize) -> bool {
        match self {
            Env::Ipd(_) => true,
            Env::Grid(g) => g.is_active(agent),
        }
    }

    pub fn counters(&self) -> EnvCounters {
        match self {
            Env::Ipd(_) => EnvCounters::default(),
            Env::Grid(g) => g.counters(),
        }
    }

    pub fn grid(&self) -> Option<&GridWorld> {
        match self {
            Env::Grid(g) => Some(g),
            Env::Ipd(_) => None,
        }
    }
}

#[cfg(test)]
mod tests;
