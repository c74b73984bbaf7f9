use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cleanup, coin_game, snowdrift, stag_hunt};
use super::{EnvConfig, EnvCounters, EnvKind, Observation, StepResult, DOWN, LEFT, RIGHT, UP};
use crate::error::{contract, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    /// Neighbour in direction `action`; moves off the map leave the cell unchanged.
    pub fn moved(self, action: usize, size: usize) -> Cell {
        match action {
            UP if self.row > 0 => Cell::new(self.row - 1, self.col),
            DOWN if self.row + 1 < size => Cell::new(self.row + 1, self.col),
            LEFT if self.col > 0 => Cell::new(self.row, self.col - 1),
            RIGHT if self.col + 1 < size => Cell::new(self.row, self.col + 1),
            _ => self,
        }
    }
}

/// Items that can sit on a cell. A cell holds at most one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Object {
    Apple,
    Waste,
    CoinRed,
    CoinBlue,
    Hare,
    Stag,
    Snowdrift,
}

/// Full state of a grid game.
#[derive(Clone, Debug)]
pub struct GridWorld {
    pub(super) config: EnvConfig,
    pub(super) positions: Vec<Cell>,
    pub(super) active: Vec<bool>,
    pub(super) objects: Vec<Option<Object>>,
    pub(super) timestep: usize,
    pub(super) rng: ChaCha8Rng,
    pub(super) counters: EnvCounters,
}

impl GridWorld {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.kind == EnvKind::Ipd {
            return Err(contract("the IPD has no grid"));
        }
        let size = config.map_size;
        let mut world = Self {
            config,
            positions: Vec::new(),
            active: Vec::new(),
            objects: vec![None; size * size],
            timestep: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counters: EnvCounters::default(),
        };
        world.reset(seed);
        Ok(world)
    }

    /// Re-seeds and lays out a fresh episode: objects first, then agents on
    /// cells left empty.
    pub fn reset(&mut self, seed: u64) -> Vec<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.objects.iter_mut().for_each(|o| *o = None);
        self.timestep = 0;
        self.counters = EnvCounters::default();
        match self.config.kind {
            EnvKind::Coingame => coin_game::place_initial(self),
            EnvKind::Cleanup | EnvKind::CleanupExtn => cleanup::place_initial(self),
            EnvKind::Ssh => stag_hunt::place_initial(self),
            EnvKind::Ssg | EnvKind::SsgExtn => snowdrift::place_initial(self),
            EnvKind::Ipd => unreachable!("rejected in new"),
        }
        let mut free: Vec<Cell> = self.all_cells().filter(|&c| self.object_at(c).is_none()).collect();
        free.shuffle(&mut self.rng);
        self.positions = free[..self.config.n_agents].to_vec();
        self.active = vec![true; self.config.n_agents];
        self.observe_all()
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let n = self.config.n_agents;
        if actions.len() != n {
            return Err(contract(format!("expected {n} actions, got {}", actions.len())));
        }
        let n_actions = self.config.action_count();
        if let Some(&bad) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(contract(format!("action {bad} outside 0..{n_actions}")));
        }
        if self.is_done() {
            return Err(contract("step called on a finished episode"));
        }
        let intended: Vec<Cell> = (0..n)
            .map(|i| {
                if self.active[i] {
                    self.positions[i].moved(actions[i], self.config.map_size)
                } else {
                    self.positions[i]
                }
            })
            .collect();
        self.positions = self.resolve_moves(intended);

        let mut rewards = vec![0.0; n];
        match self.config.kind {
            EnvKind::Coingame => coin_game::apply(self, &mut rewards),
            EnvKind::Cleanup | EnvKind::CleanupExtn => cleanup::apply(self, actions, &mut rewards),
            EnvKind::Ssh => stag_hunt::apply(self, actions, &mut rewards),
            EnvKind::Ssg | EnvKind::SsgExtn => snowdrift::apply(self, actions, &mut rewards),
            EnvKind::Ipd => unreachable!(),
        }
        self.timestep += 1;
        Ok(StepResult { observations: self.observe_all(), rewards, done: self.is_done() })
    }

    /// Simultaneous movement. Contested cells go to an agent already standing
    /// there, else to a uniformly drawn claimant; losers stay put. Swaps are
    /// blocked. Cells holding a stag accept any number of agents.
    fn resolve_moves(&mut self, mut targets: Vec<Cell>) -> Vec<Cell> {
        let n = targets.len();
        loop {
            let mut changed = false;
            let mut claims: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
            for i in (0..n).filter(|&i| self.active[i]) {
                claims.entry(targets[i]).or_default().push(i);
            }
            for (cell, ids) in claims {
                if ids.len() < 2 || self.object_at(cell) == Some(Object::Stag) {
                    continue;
                }
                let movers: Vec<usize> = ids.iter().copied().filter(|&i| targets[i] != self.positions[i]).collect();
                if movers.is_empty() {
                    continue;
                }
                let winner = if movers.len() == ids.len() { Some(movers[self.rng.gen_range(0..movers.len())]) } else { None };
                for &i in &movers {
                    if Some(i) != winner {
                        targets[i] = self.positions[i];
                        changed = true;
                    }
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    let moving = targets[i] != self.positions[i];
                    if moving
                        && self.active[i]
                        && self.active[j]
                        && targets[i] == self.positions[j]
                        && targets[j] == self.positions[i]
                    {
                        targets[i] = self.positions[i];
                        targets[j] = self.positions[j];
                        changed = true;
                    }
                }
            }
            if !changed {
                return targets;
            }
        }
    }

    /// Egocentric window centred on `agent`. Off-map cells are 1 in the mask
    /// channel only. Removed agents see nothing but mask.
    pub fn observe(&self, agent: usize) -> Observation {
        let v = self.config.view_size;
        let channels = self.config.channels();
        let mask = channels - 1;
        let mut obs = Observation::zeros(channels, v, v);
        if !self.active[agent] {
            obs.data[mask * v * v..].iter_mut().for_each(|x| *x = 1.0);
            return obs;
        }
        let half = (v / 2) as isize;
        let centre = self.positions[agent];
        let size = self.config.map_size as isize;
        let to_map = |i: usize, j: usize| {
            let r = centre.row as isize + i as isize - half;
            let c = centre.col as isize + j as isize - half;
            (r >= 0 && r < size && c >= 0 && c < size).then(|| Cell::new(r as usize, c as usize))
        };
        for i in 0..v {
            for j in 0..v {
                match to_map(i, j) {
                    None => obs.set(mask, i, j, 1.0),
                    Some(cell) => {
                        if let Some(ch) = self.object_at(cell).and_then(|o| self.object_channel(o)) {
                            obs.set(ch, i, j, 1.0);
                        }
                    }
                }
            }
        }
        for other in (0..self.config.n_agents).filter(|&k| self.active[k]) {
            let p = self.positions[other];
            let (i, j) = (p.row as isize - centre.row as isize + half, p.col as isize - centre.col as isize + half);
            if (0..v as isize).contains(&i) && (0..v as isize).contains(&j) {
                obs.set(self.agent_channel(other), i as usize, j as usize, 1.0);
            }
        }
        obs
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        (0..self.config.n_agents).map(|i| self.observe(i)).collect()
    }

    fn agent_channel(&self, agent: usize) -> usize {
        match self.config.kind {
            // Blue agent first, then red.
            EnvKind::Coingame => 1 - agent,
            _ => agent,
        }
    }

    fn object_channel(&self, object: Object) -> Option<usize> {
        let n = self.config.n_agents;
        match (self.config.kind, object) {
            (EnvKind::Coingame, Object::CoinBlue) => Some(2),
            (EnvKind::Coingame, Object::CoinRed) => Some(3),
            (_, Object::Waste) | (_, Object::Hare) | (_, Object::Snowdrift) => Some(n),
            (_, Object::Apple) | (_, Object::Stag) => Some(n + 1),
            _ => None,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    pub fn is_done(&self) -> bool {
        self.timestep >= self.config.episode_len || self.active.iter().all(|a| !a)
    }

    pub fn positions(&self) -> &[Cell] {
        &self.positions
    }

    pub fn is_active(&self, agent: usize) -> bool {
        self.active[agent]
    }

    pub fn counters(&self) -> EnvCounters {
        self.counters
    }

    pub fn all_cells(&self) -> impl Iterator<Item = Cell> {
        let size = self.config.map_size;
        (0..size * size).map(move |k| Cell::new(k / size, k % size))
    }

    pub fn object_at(&self, cell: Cell) -> Option<Object> {
        self.objects[cell.row * self.config.map_size + cell.col]
    }

    /// Cells holding `object`, in row-major order.
    pub fn cells_with(&self, object: Object) -> Vec<Cell> {
        self.all_cells().filter(|&c| self.object_at(c) == Some(object)).collect()
    }

    pub fn count(&self, object: Object) -> usize {
        self.objects.iter().filter(|&&o| o == Some(object)).count()
    }

    /// Overwrites one cell; meant for building fixtures.
    pub fn set_object(&mut self, cell: Cell, object: Option<Object>) {
        let size = self.config.map_size;
        self.objects[cell.row * size + cell.col] = object;
    }

    /// Teleports an agent; meant for building fixtures.
    pub fn set_position(&mut self, agent: usize, cell: Cell) {
        self.positions[agent] = cell;
    }

    pub(super) fn random_cell_where(&mut self, keep: impl Fn(&GridWorld, Cell) -> bool) -> Option<Cell> {
        let candidates: Vec<Cell> = self.all_cells().filter(|&c| keep(self, c)).collect();
        candidates.choose(&mut self.rng).copied()
    }

    /// Drops `count` copies of `object` on distinct empty cells accepted by `keep`.
    pub(super) fn scatter(&mut self, object: Object, count: usize, keep: impl Fn(Cell) -> bool) {
        let mut candidates: Vec<Cell> = self.all_cells().filter(|&c| self.object_at(c).is_none() && keep(c)).collect();
        candidates.shuffle(&mut self.rng);
        for &cell in candidates.iter().take(count) {
            self.set_object(cell, Some(object));
        }
    }
}
