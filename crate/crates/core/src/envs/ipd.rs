//! Memory-1 iterated prisoner's dilemma. Both players observe the previous
//! joint action as a one-hot over `[CC, CD, DC, DD, s0]`.

use super::{EnvConfig, EnvParams, Observation, StepResult, COOPERATE, DEFECT};
use crate::error::{contract, Result};
use crate::matrix_dynamics::{GameParams, Move};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpdState {
    Start,
    /// Previous joint action, indexed `CC, CD, DC, DD` from agent 1's side.
    Played(usize),
}

impl IpdState {
    pub const WIDTH: usize = 5;

    pub fn index(self) -> usize {
        match self {
            IpdState::Played(k) => k,
            IpdState::Start => 4,
        }
    }

    pub fn one_hot(self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[self.index()] = 1.0;
        v
    }
}

fn to_move(action: usize) -> Result<Move> {
    match action {
        COOPERATE => Ok(Move::Cooperate),
        DEFECT => Ok(Move::Defect),
        other => Err(contract(format!("IPD action {other} is neither 0 (C) nor 1 (D)"))),
    }
}

/// Payoffs `(r1, r2)` for actions `(a1, a2)` with 0 = cooperate, 1 = defect.
pub fn ipd_payoff(params: &GameParams, a1: usize, a2: usize) -> Result<(f64, f64)> {
    let (m1, m2) = (to_move(a1)?, to_move(a2)?);
    Ok((params.payoff(m1, m2), params.payoff(m2, m1)))
}

#[derive(Clone, Debug)]
pub struct IpdEnv {
    config: EnvConfig,
    game: GameParams,
    state: IpdState,
    timestep: usize,
}

impl IpdEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let EnvParams::Matrix(game) = config.params else {
            return Err(contract("IPD needs matrix-game parameters"));
        };
        Ok(Self { config, game, state: IpdState::Start, timestep: 0 })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> IpdState {
        self.state
    }

    pub fn reset(&mut self) -> Vec<Observation> {
        self.state = IpdState::Start;
        self.timestep = 0;
        vec![self.observe(), self.observe()]
    }

    pub fn observe(&self) -> Observation {
        Observation { channels: 1, height: 1, width: IpdState::WIDTH, data: self.state.one_hot().to_vec() }
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if actions.len() != 2 {
            return Err(contract(format!("expected 2 actions, got {}", actions.len())));
        }
        if self.timestep >= self.config.episode_len {
            return Err(contract("step called on a finished episode"));
        }
        let (r1, r2) = ipd_payoff(&self.game, actions[0], actions[1])?;
        self.state = IpdState::Played(2 * actions[0] + actions[1]);
        self.timestep += 1;
        let obs = self.observe();
        Ok(StepResult {
            observations: vec![obs.clone(), obs],
            rewards: vec![r1, r2],
            done: self.timestep >= self.config.episode_len,
        })
    }
}
