//! Run directories: training with metrics and checkpoints on disk, and
//! evaluation of saved agents.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.json            resolved RunConfig
//! metrics.jsonl          one EpisodeMetrics object per line
//! checkpoints/agents-<episode>.json
//! agents.json            final agents
//! summary.json           RunSummary over the trailing window
//! failure.json           written only when training aborts
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::envs::EnvKind;
use crate::error::{LaseError, Result};
use crate::metrics::{gift_weight_mean, trailing_equality, GiftSummary};
use crate::trainer::{AgentsCheckpoint, EpisodeMetrics, Trainer};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const AGENTS_FILE: &str = "agents.json";
pub const FAILURE_FILE: &str = "failure.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// End-of-run statistics over the trailing `window` episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub episodes: usize,
    pub window: usize,
    pub mean_extrinsic: Vec<f64>,
    pub mean_total: Vec<f64>,
    pub mean_collective: f64,
    /// Equality of the window-averaged returns; absent if they sum to ≤ 0.
    pub equality: Option<f64>,
    pub gifts: GiftSummary,
    pub cooperation_rate: Option<f64>,
}

pub fn summarize(name: &str, history: &[EpisodeMetrics], window: usize) -> Result<RunSummary> {
    if history.is_empty() {
        return Err(LaseError::Domain("cannot summarise an empty run".into()));
    }
    let window = window.min(history.len());
    let tail = &history[history.len() - window..];
    let mean_of = |pick: &dyn Fn(&EpisodeMetrics) -> &Vec<f64>| {
        let n = pick(&tail[0]).len();
        (0..n).map(|i| tail.iter().map(|m| pick(m)[i]).sum::<f64>() / window as f64).collect::<Vec<f64>>()
    };
    let extrinsic: Vec<Vec<f64>> = history.iter().map(|m| m.extrinsic.clone()).collect();
    let gifts: Vec<Vec<Vec<f64>>> = history.iter().map(|m| m.gifts.clone()).collect();
    let rates: Vec<f64> = tail.iter().filter_map(|m| m.cooperation_rate).collect();
    Ok(RunSummary {
        name: name.to_string(),
        episodes: history.len(),
        window,
        mean_extrinsic: mean_of(&|m| &m.extrinsic),
        mean_total: mean_of(&|m| &m.total),
        mean_collective: tail.iter().map(|m| m.collective).sum::<f64>() / window as f64,
        equality: trailing_equality(&extrinsic, window).ok(),
        gifts: gift_weight_mean(&gifts, window, &[])?,
        cooperation_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
    })
}

/// Trains `config` into `dir`, which must not already hold a run.
pub fn run_training(config: &RunConfig, dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    if dir.join(CONFIG_FILE).exists() {
        return Err(LaseError::Config(format!("{} already holds a run", dir.display())));
    }
    fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(config)?)?;
    let mut trainer = Trainer::new(config.env, &config.agents, config.hyper.clone(), config.seed)?;
    let mut writer = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
    let mut history = Vec::with_capacity(config.episodes);
    let every = config.checkpoint_every;
    let outcome = trainer.train(config.episodes, |t, m| {
        serde_json::to_writer(&mut writer, m)?;
        writer.write_all(b"\n")?;
        history.push(m.clone());
        if every > 0 && t.episode % every == 0 {
            writer.flush()?;
            t.checkpoint().save(&checkpoint_path(dir, t.episode))?;
        }
        Ok(())
    });
    writer.flush()?;
    if let Err(err) = outcome {
        let failure = serde_json::json!({
            "episode": trainer.episode,
            "error": err.to_string(),
            "last_metrics": history.last(),
        });
        fs::write(dir.join(FAILURE_FILE), serde_json::to_string_pretty(&failure)?)?;
        return Err(err);
    }
    trainer.checkpoint().save(&dir.join(AGENTS_FILE))?;
    let summary = summarize(&config.name, &history, config.summary_window)?;
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

pub fn checkpoint_path(dir: &Path, episode: usize) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("agents-{episode}.json"))
}

pub fn load_run_config(dir: &Path) -> Result<RunConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de)
        .map_err(|e| LaseError::Config(format!("{}: {} at `{}`", path.display(), e.inner(), e.path())))
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(LaseError::from))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub episodes: usize,
    /// Exploration during evaluation.
    pub epsilon: f64,
    /// Gifters read co-players' true observations instead of imagining them.
    pub real_observations: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint_episode: usize,
    pub options: EvalOptions,
    pub summary: RunSummary,
}

/// Offset separating evaluation episodes from training ones in the seed
/// streams.
const EVAL_EPISODE_OFFSET: usize = 1 << 40;

/// Plays `options.episodes` episodes with frozen agents from `checkpoint`
/// (default: the run's final agents).
pub fn evaluate_run(dir: &Path, checkpoint: Option<&Path>, options: &EvalOptions) -> Result<EvalReport> {
    if options.episodes == 0 {
        return Err(LaseError::Config("evaluation needs at least one episode".into()));
    }
    let config = load_run_config(dir)?;
    let path = checkpoint.map_or_else(|| dir.join(AGENTS_FILE), Path::to_path_buf);
    let ckpt = AgentsCheckpoint::load(&path)?;
    let checkpoint_episode = ckpt.episode;
    let mut trainer = Trainer::from_checkpoint(config.env, config.hyper.clone(), ckpt)?;
    let history = (0..options.episodes)
        .map(|k| {
            let record = trainer.evaluate(EVAL_EPISODE_OFFSET + k, options.epsilon, options.real_observations)?;
            let extrinsic = record.extrinsic_returns();
            let collective = extrinsic.iter().sum();
            Ok(EpisodeMetrics {
                episode: k,
                epsilon: options.epsilon,
                total: record.total_returns(),
                equality: None,
                extrinsic,
                collective,
                gifts: record.mean_gifts(),
                counters: record.counters,
                cooperation_rate: (config.env.kind == EnvKind::Ipd).then(|| record.cooperation_rate()),
                policy_losses: vec![None; config.agents.len()],
                sri_losses: vec![None; config.agents.len()],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&config.name, &history, options.episodes)?;
    Ok(EvalReport { checkpoint_episode, options: options.clone(), summary })
}
