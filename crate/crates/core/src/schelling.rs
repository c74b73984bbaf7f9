//! Schelling diagrams estimated from scripted cooperator/defector groups,
//! and the payoff conditions that make a game a sequential social dilemma.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentKind};
use crate::envs::{Env, EnvConfig, EnvKind};
use crate::error::{LaseError, Result};
use crate::trainer::run_episode;

/// Mean payoff of one role at one cooperator count, with its standard error
/// over episodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchellingPoint {
    pub cooperators: usize,
    /// Absent with no cooperators.
    pub rc: Option<PayoffEstimate>,
    /// Absent with no defectors.
    pub rd: Option<PayoffEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchellingCurve {
    pub env: EnvKind,
    pub n_agents: usize,
    pub episodes_per_point: usize,
    pub seed: u64,
    /// Indexed by cooperator count `l = 0..=N`.
    pub points: Vec<SchellingPoint>,
}

impl SchellingCurve {
    pub fn rc(&self, l: usize) -> Option<f64> {
        self.points.get(l)?.rc.map(|e| e.mean)
    }

    pub fn rd(&self, l: usize) -> Option<f64> {
        self.points.get(l)?.rd.map(|e| e.mean)
    }

    pub fn to_csv(&self) -> String {
        let cell = |e: Option<PayoffEstimate>| match e {
            Some(e) => (e.mean.to_string(), e.std_error.to_string()),
            None => (String::new(), String::new()),
        };
        let mut out = String::from("cooperators,rc,rc_se,rd,rd_se\n");
        for p in &self.points {
            let (rc, rc_se) = cell(p.rc);
            let (rd, rd_se) = cell(p.rd);
            out.push_str(&format!("{},{rc},{rc_se},{rd},{rd_se}\n", p.cooperators));
        }
        out
    }
}

fn estimate(samples: &[f64]) -> Option<PayoffEstimate> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some(PayoffEstimate { mean, std_error: (var / n).sqrt() })
}

/// Rolls out `episodes_per_point` scripted episodes for every cooperator
/// count. Which agent slots hold cooperators rotates across episodes so no
/// role is tied to a spawn order or coin colour.
pub fn schelling_diagram(env: EnvKind, episodes_per_point: usize, seed: u64) -> Result<SchellingCurve> {
    if env == EnvKind::Ipd {
        return Err(LaseError::Config("Schelling diagrams are defined for the grid games only".into()));
    }
    if episodes_per_point == 0 {
        return Err(LaseError::Config("episodes per point must be positive".into()));
    }
    let config = EnvConfig::preset(env);
    let n = config.n_agents;
    let points = (0..=n)
        .into_par_iter()
        .map(|l| {
            let results = (0..episodes_per_point)
                .into_par_iter()
                .map(|e| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((l * episodes_per_point + e) as u64);
                    let cooperating: Vec<bool> = (0..n).map(|i| (i + n - e % n) % n < l).collect();
                    let agents: Vec<Agent> = cooperating
                        .iter()
                        .enumerate()
                        .map(|(id, &c)| Agent {
                            id,
                            kind: if c { AgentKind::ScriptedCooperator } else { AgentKind::ScriptedDefector },
                            brain: None,
                            sri: None,
                        })
                        .collect();
                    let env_seed = rng.gen();
                    let mut world = Env::new(config, env_seed)?;
                    let record = run_episode(&mut world, &agents, 0.0, env_seed, e, false, &mut rng)?;
                    let returns = record.extrinsic_returns();
                    let role_mean = |want: bool| {
                        let picked: Vec<f64> =
                            (0..n).filter(|&i| cooperating[i] == want).map(|i| returns[i]).collect();
                        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
                    };
                    Ok((role_mean(true), role_mean(false)))
                })
                .collect::<Result<Vec<_>>>()?;
            let rc: Vec<f64> = results.iter().filter_map(|r| r.0).collect();
            let rd: Vec<f64> = results.iter().filter_map(|r| r.1).collect();
            Ok(SchellingPoint { cooperators: l, rc: estimate(&rc), rd: estimate(&rd) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SchellingCurve { env, n_agents: n, episodes_per_point, seed, points })
}

/// Which payoff conditions a curve satisfies. Comparisons pair `Rc(l+1)`
/// with `Rd(l)`: the cooperator who joins `l` others against the defector
/// facing those same `l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsdReport {
    /// `Rc(N) > Rd(0)`.
    pub mutual_cooperation_preferred: bool,
    /// `Rc(N) > Rc(1)`: full cooperation beats being the lone cooperator.
    pub cooperation_beats_exploitation: bool,
    /// `Rd(0) > Rc(1)`.
    pub fear: bool,
    /// `Rd(N-1) > Rc(N)`.
    pub greed: bool,
}

impl SsdReport {
    pub fn is_social_dilemma(&self) -> bool {
        self.mutual_cooperation_preferred && self.cooperation_beats_exploitation && (self.fear || self.greed)
    }
}

pub fn verify_ssd(curve: &SchellingCurve) -> Result<SsdReport> {
    let n = curve.n_agents;
    let get = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| LaseError::Domain(format!("Schelling curve is missing {what}")))
    };
    let rc_n = get(curve.rc(n), "Rc(N)")?;
    let rc_1 = get(curve.rc(1), "Rc(1)")?;
    let rd_0 = get(curve.rd(0), "Rd(0)")?;
    let rd_last = get(curve.rd(n - 1), "Rd(N-1)")?;
    Ok(SsdReport {
        mutual_cooperation_preferred: rc_n > rd_0,
        cooperation_beats_exploitation: rc_n > rc_1,
        fear: rd_0 > rc_1,
        greed: rd_last > rc_n,
    })
}
