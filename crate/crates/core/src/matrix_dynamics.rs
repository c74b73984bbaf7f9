//! Closed-form learning dynamics of two gifting agents in an iterated 2x2
//! matrix game.
//!
//! Both agents are assumed to hold fully trained relationship estimators, so
//! the gift weight of each outcome reduces to a function of the predicted
//! cooperation probability of the co-player. Each agent then follows the
//! exact policy gradient of its post-gift value.
//!
//! Outcomes are always indexed `[CC, CD, DC, DD]` with agent 1's move first.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LaseError, Result};

/// The `(R, S, T, P)` payoff quadruple of a symmetric 2x2 game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// Mutual cooperation payoff `R`.
    pub reward: f64,
    /// Payoff of a cooperator facing a defector, `S`.
    pub sucker: f64,
    /// Payoff of a defector facing a cooperator, `T`.
    pub temptation: f64,
    /// Mutual defection payoff `P`.
    pub punishment: f64,
}

impl GameParams {
    /// Game with `R = 1` and `P = 0`.
    pub fn normalized(temptation: f64, sucker: f64) -> Self {
        Self { reward: 1.0, sucker, temptation, punishment: 0.0 }
    }

    /// The prisoner's dilemma used throughout the experiments: `[R,S,T,P] = [1,-0.2,1.2,0]`.
    pub fn ipd() -> Self {
        Self::normalized(1.2, -0.2)
    }

    /// Payoff to a player choosing `own` against `other`.
    pub fn payoff(&self, own: Move, other: Move) -> f64 {
        match (own, other) {
            (Move::Cooperate, Move::Cooperate) => self.reward,
            (Move::Cooperate, Move::Defect) => self.sucker,
            (Move::Defect, Move::Cooperate) => self.temptation,
            (Move::Defect, Move::Defect) => self.punishment,
        }
    }

    /// Agent 1's payoff for each outcome `[CC, CD, DC, DD]`.
    pub fn row_player_payoffs(&self) -> [f64; 4] {
        [self.reward, self.sucker, self.temptation, self.punishment]
    }

    /// Agent 2's payoff for each outcome `[CC, CD, DC, DD]`.
    pub fn column_player_payoffs(&self) -> [f64; 4] {
        [self.reward, self.temptation, self.sucker, self.punishment]
    }

    fn check_normalized_range(&self) -> Result<()> {
        if self.reward != 1.0 || self.punishment != 0.0 {
            return Err(LaseError::Range(format!(
                "expected R = 1 and P = 0, got R = {}, P = {}",
                self.reward, self.punishment
            )));
        }
        if !(0.0..=2.0).contains(&self.temptation) {
            return Err(LaseError::Range(format!("T = {} outside [0, 2]", self.temptation)));
        }
        if !(-1.0..=1.0).contains(&self.sucker) {
            return Err(LaseError::Range(format!("S = {} outside [-1, 1]", self.sucker)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Cooperate,
    Defect,
}

/// Joint outcome seen from the gifter: `(own move, co-player move)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JointOutcome {
    CC,
    CD,
    DC,
    DD,
}

impl JointOutcome {
    pub const ALL: [JointOutcome; 4] = [Self::CC, Self::CD, Self::DC, Self::DD];

    pub fn moves(self) -> (Move, Move) {
        use Move::*;
        match self {
            Self::CC => (Cooperate, Cooperate),
            Self::CD => (Cooperate, Defect),
            Self::DC => (Defect, Cooperate),
            Self::DD => (Defect, Defect),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Social-dilemma class of a normalized game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DilemmaClass {
    Harmony,
    Snowdrift,
    StagHunt,
    PrisonersDilemma,
}

impl fmt::Display for DilemmaClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Harmony => "Harmony",
            Self::Snowdrift => "SG",
            Self::StagHunt => "SH",
            Self::PrisonersDilemma => "PD",
        };
        f.write_str(s)
    }
}

/// Classifies a normalized game. Cells on a boundary (`T == 1` or `S == 0`)
/// satisfy none of the strict inequalities and fall into `Harmony`.
pub fn classify_game(params: &GameParams) -> Result<DilemmaClass> {
    params.check_normalized_range()?;
    let (t, s) = (params.temptation, params.sucker);
    let class = if t > 1.0 && 1.0 > s && s > 0.0 {
        DilemmaClass::Snowdrift
    } else if 1.0 > t && t > 0.0 && 0.0 > s {
        DilemmaClass::StagHunt
    } else if t > 1.0 && 0.0 > s && 2.0 > t + s {
        DilemmaClass::PrisonersDilemma
    } else {
        DilemmaClass::Harmony
    };
    Ok(class)
}

/// Cooperation probabilities of both agents and their predictions of each other.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyPoint {
    pub theta1: f64,
    pub theta2: f64,
    /// Agent 2's prediction of agent 1.
    pub theta_hat1: f64,
    /// Agent 1's prediction of agent 2.
    pub theta_hat2: f64,
}

impl PolicyPoint {
    /// A point whose predictions equal the true policies.
    pub fn accurate(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2, theta_hat1: theta1, theta_hat2: theta2 }
    }

    pub fn synced(self) -> Self {
        Self::accurate(self.theta1, self.theta2)
    }

    fn clamped(self) -> Self {
        Self {
            theta1: self.theta1.clamp(0.0, 1.0),
            theta2: self.theta2.clamp(0.0, 1.0),
            theta_hat1: self.theta_hat1.clamp(0.0, 1.0),
            theta_hat2: self.theta_hat2.clamp(0.0, 1.0),
        }
    }

    /// Mean cooperation probability of the two agents.
    pub fn mean_cooperation(&self) -> f64 {
        0.5 * (self.theta1 + self.theta2)
    }
}

/// Probability of each outcome `[CC, CD, DC, DD]` under independent play.
pub fn outcome_distribution(theta1: f64, theta2: f64) -> [f64; 4] {
    [
        theta1 * theta2,
        theta1 * (1.0 - theta2),
        (1.0 - theta1) * theta2,
        (1.0 - theta1) * (1.0 - theta2),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop once `max |Δθ|` of a step falls below this.
    pub convergence_tol: f64,
    pub rng_seed: u64,
    /// Keep `θ̂ = θ` throughout.
    pub accurate_prediction: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            gamma: 0.99,
            max_iters: 1_000_000,
            convergence_tol: 1e-8,
            rng_seed: 0,
            accurate_prediction: true,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(LaseError::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        check_gamma(self.gamma)?;
        if !(self.convergence_tol > 0.0) {
            return Err(LaseError::Config("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(LaseError::Config(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// Gift weight of a fully trained relationship estimator in a two-player game.
///
/// The co-player's cooperation earns `1 - θ̂`; its defection produces the
/// negative raw weight `-θ̂`, which is clamped to zero.
pub fn closed_form_gift_weight(outcome: JointOutcome, theta_hat_other: f64) -> f64 {
    let raw = match outcome.moves().1 {
        Move::Cooperate => 1.0 - theta_hat_other,
        Move::Defect => -theta_hat_other,
    };
    raw.clamp(0.0, 1.0)
}

/// Post-gift reward of both agents for each outcome `[CC, CD, DC, DD]`.
///
/// Agent 1 keeps `θ̂²` of its own payoff after cooperating co-players and
/// receives `(1 - θ̂¹)` of agent 2's payoff when it cooperated itself.
pub fn total_reward_vectors(params: &GameParams, theta_hat1: f64, theta_hat2: f64) -> ([f64; 4], [f64; 4]) {
    let GameParams { reward: r, sucker: s, temptation: t, punishment: p } = *params;
    let r1 = [
        theta_hat2 * r + (1.0 - theta_hat1) * r,
        s + (1.0 - theta_hat1) * t,
        theta_hat2 * t,
        p,
    ];
    let r2 = [
        theta_hat1 * r + (1.0 - theta_hat2) * r,
        theta_hat1 * t,
        s + (1.0 - theta_hat2) * t,
        p,
    ];
    (r1, r2)
}

/// Discounted value of the post-gift reward stream for both agents.
pub fn value(params: &GameParams, point: &PolicyPoint, gamma: f64) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    let p = outcome_distribution(point.theta1, point.theta2);
    let (r1, r2) = total_reward_vectors(params, point.theta_hat1, point.theta_hat2);
    let scale = 1.0 / (1.0 - gamma);
    let dot = |r: &[f64; 4]| p.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
    Ok((scale * dot(&r1), scale * dot(&r2)))
}

/// `∂V¹/∂θ¹` and `∂V²/∂θ²` with the predictions held fixed.
fn value_gradients(params: &GameParams, point: &PolicyPoint, gamma: f64) -> (f64, f64) {
    let GameParams { reward: r, sucker: s, temptation: t, punishment: p } = *params;
    let PolicyPoint { theta1, theta2, theta_hat1, theta_hat2 } = *point;
    let scale = 1.0 / (1.0 - gamma);
    let g2 = (theta_hat1 * r + (1.0 - theta_hat2) * r - theta_hat1 * t) * theta1
        + (s + (1.0 - theta_hat2) * t - p) * (1.0 - theta1);
    let g1 = (theta_hat2 * r + (1.0 - theta_hat1) * r - theta_hat2 * t) * theta2
        + (s + (1.0 - theta_hat1) * t - p) * (1.0 - theta2);
    (scale * g1, scale * g2)
}

/// One simultaneous gradient-ascent step for both agents.
pub fn update_step(params: &GameParams, point: &PolicyPoint, config: &DynamicsConfig) -> PolicyPoint {
    let start = if config.accurate_prediction { point.synced() } else { *point };
    let (g1, g2) = value_gradients(params, &start, config.gamma);
    let next = PolicyPoint {
        theta1: start.theta1 + config.alpha * g1,
        theta2: start.theta2 + config.alpha * g2,
        ..start
    }
    .clamped();
    if config.accurate_prediction {
        next.synced()
    } else {
        next
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Convergence {
    pub point: PolicyPoint,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates [`update_step`] until the largest policy change drops below the
/// tolerance or the iteration budget runs out.
pub fn simulate_to_convergence(
    params: &GameParams,
    init: PolicyPoint,
    config: &DynamicsConfig,
) -> Result<Convergence> {
    config.validate()?;
    for (name, v) in [("theta1", init.theta1), ("theta2", init.theta2)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(LaseError::Range(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let mut point = if config.accurate_prediction { init.synced() } else { init };
    for iter in 1..=config.max_iters {
        let next = update_step(params, &point, config);
        let change = (next.theta1 - point.theta1).abs().max((next.theta2 - point.theta2).abs());
        point = next;
        if change < config.convergence_tol {
            return Ok(Convergence { point, iterations: iter, converged: true });
        }
    }
    Ok(Convergence { point, iterations: config.max_iters, converged: false })
}

/// Inclusive, evenly spaced grid `min, min + step, ..., max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.max >= self.min) {
            return Err(LaseError::Range(format!("invalid grid {self:?}")));
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        // Round away accumulated representation error so CSV headers stay clean.
        Ok((0..n).map(|k| ((self.min + k as f64 * self.step) * 1e10).round() / 1e10).collect())
    }
}

/// Draws a uniform initial policy in `(0.05, 0.95)²`.
pub fn random_init<R: Rng + ?Sized>(rng: &mut R) -> PolicyPoint {
    PolicyPoint::accurate(rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub temptation: f64,
    pub sucker: f64,
    /// Final mean cooperation `(θ¹ + θ²) / 2` of each random init.
    pub finals: Vec<f64>,
    pub all_converged: bool,
}

impl SweepCell {
    pub fn mean(&self) -> f64 {
        self.finals.iter().sum::<f64>() / self.finals.len() as f64
    }

    pub fn median(&self) -> f64 {
        let mut v = self.finals.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Converged cooperation over a `(T, S)` grid. Rows follow `S`, columns `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub t_values: Vec<f64>,
    pub s_values: Vec<f64>,
    pub cells: Vec<Vec<SweepCell>>,
}

impl Heatmap {
    pub fn mean_matrix(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|row| row.iter().map(SweepCell::mean).collect()).collect()
    }

    pub fn cell(&self, temptation: f64, sucker: f64) -> Option<&SweepCell> {
        let col = self.t_values.iter().position(|t| (t - temptation).abs() < 1e-9)?;
        let row = self.s_values.iter().position(|s| (s - sucker).abs() < 1e-9)?;
        Some(&self.cells[row][col])
    }

    /// Row-major CSV: a header row of `T` values, then one row per `S` value
    /// whose first field is `S`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("S\\T");
        for t in &self.t_values {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        for (s, row) in self.s_values.iter().zip(self.mean_matrix()) {
            out.push_str(&s.to_string());
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs [`simulate_to_convergence`] from `seeds_per_cell` random inits in
/// every grid cell. Cells are independent and evaluated in parallel; each
/// cell draws its inits from its own stream so results do not depend on
/// scheduling.
pub fn sweep_heatmap(
    t_grid: &GridSpec,
    s_grid: &GridSpec,
    seeds_per_cell: usize,
    config: &DynamicsConfig,
) -> Result<Heatmap> {
    config.validate()?;
    if seeds_per_cell == 0 {
        return Err(LaseError::Range("seeds_per_cell must be at least 1".into()));
    }
    let t_values = t_grid.values()?;
    let s_values = s_grid.values()?;
    let width = t_values.len();
    let flat: Vec<Result<SweepCell>> = (0..s_values.len() * width)
        .into_par_iter()
        .map(|idx| {
            let (row, col) = (idx / width, idx % width);
            let params = GameParams::normalized(t_values[col], s_values[row]);
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            rng.set_stream(idx as u64);
            let mut finals = Vec::with_capacity(seeds_per_cell);
            let mut all_converged = true;
            for _ in 0..seeds_per_cell {
                let run = simulate_to_convergence(&params, random_init(&mut rng), config)?;
                all_converged &= run.converged;
                finals.push(run.point.mean_cooperation());
            }
            Ok(SweepCell { temptation: t_values[col], sucker: s_values[row], finals, all_converged })
        })
        .collect();
    let mut cells = Vec::with_capacity(s_values.len());
    let mut it = flat.into_iter();
    for _ in 0..s_values.len() {
        cells.push(it.by_ref().take(width).collect::<Result<Vec<_>>>()?);
    }
    Ok(Heatmap { t_values, s_values, cells })
}
