//! Environments × modes × seeds batches with per-mode aggregation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControllerConfig, ControllerMode};
use crate::error::{NgscError, Result};
use crate::geometry::Environment;
use crate::rng::derive_seed;
use crate::sim::episode::{run_episode, EpisodeSettings};
use crate::sim::log::{EndReason, EpisodeLog};
use crate::sim::metrics::{compute_metrics, Metrics};
use crate::sim::user::{ScriptedUser, UserProfile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub environments: Vec<Environment>,
    pub modes: Vec<ControllerMode>,
    pub seeds: Vec<u64>,
    pub controller: ControllerConfig,
    pub user: UserProfile,
    pub max_ticks: u64,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.environments.is_empty() {
            return Err(NgscError::EmptyBatch("environments"));
        }
        if self.modes.is_empty() {
            return Err(NgscError::EmptyBatch("modes"));
        }
        if self.seeds.is_empty() {
            return Err(NgscError::EmptyBatch("seeds"));
        }
        self.controller.validate()?;
        self.user.validate()
    }

    /// Episode and user seeds depend on the environment index and seed only,
    /// so every mode sees the same operator noise.
    pub fn episode_seed(env_index: usize, seed: u64) -> u64 {
        derive_seed(seed, &[env_index as u64, 0])
    }

    pub fn user_seed(env_index: usize, seed: u64) -> u64 {
        derive_seed(seed, &[env_index as u64, 1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub env_index: usize,
    pub mode: ControllerMode,
    pub seed: u64,
    pub success: bool,
    pub end_reason: Option<EndReason>,
    pub ticks: u64,
    pub collision_ticks: u64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: ControllerMode,
    pub episodes: usize,
    pub duration_s: f64,
    pub duration_sd: f64,
    pub travel_cm: f64,
    pub travel_sd: f64,
    pub min_prox_cm: f64,
    pub min_prox_sd: f64,
    pub cosine_dist: f64,
    pub cosine_sd: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub episodes: Vec<EpisodeResult>,
    pub summary: Vec<ModeSummary>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(mode: ControllerMode, results: &[&EpisodeResult]) -> ModeSummary {
    let metrics: Vec<Metrics> = results.iter().filter_map(|r| r.metrics).collect();
    let col = |f: fn(&Metrics) -> f64| mean_sd(&metrics.iter().map(f).collect::<Vec<_>>());
    let (duration_s, duration_sd) = col(|m| m.duration_s);
    let (travel_cm, travel_sd) = col(|m| m.travel_cm);
    let (min_prox_cm, min_prox_sd) = col(|m| m.min_proximity_cm);
    let (cosine_dist, cosine_sd) = col(|m| m.mean_cosine_distance);
    let successes = results.iter().filter(|r| r.success).count();
    ModeSummary {
        mode,
        episodes: results.len(),
        duration_s,
        duration_sd,
        travel_cm,
        travel_sd,
        min_prox_cm,
        min_prox_sd,
        cosine_dist,
        cosine_sd,
        success_rate: successes as f64 / results.len().max(1) as f64,
    }
}

fn run_cell(
    spec: &BatchSpec,
    env_index: usize,
    mode: ControllerMode,
    seed: u64,
) -> (EpisodeResult, Option<EpisodeLog>) {
    let settings = EpisodeSettings {
        mode,
        controller: spec.controller,
        max_ticks: spec.max_ticks,
        seed: BatchSpec::episode_seed(env_index, seed),
        user: Some(spec.user),
    };
    let run = ScriptedUser::new(spec.user, BatchSpec::user_seed(env_index, seed))
        .and_then(|mut user| run_episode(&spec.environments[env_index], &settings, &mut user))
        .and_then(|log| compute_metrics(&log).map(|m| (log, m)));
    match run {
        Ok((log, metrics)) => (
            EpisodeResult {
                env_index,
                mode,
                seed,
                success: log.outcome.success,
                end_reason: Some(log.outcome.end_reason),
                ticks: log.outcome.ticks,
                collision_ticks: log.outcome.collision_ticks,
                metrics: Some(metrics),
                error: None,
            },
            Some(log),
        ),
        Err(e) => (
            EpisodeResult {
                env_index,
                mode,
                seed,
                success: false,
                end_reason: None,
                ticks: 0,
                collision_ticks: 0,
                metrics: None,
                error: Some(e.to_string()),
            },
            None,
        ),
    }
}

pub fn run_batch(spec: &BatchSpec) -> Result<BatchReport> {
    run_batch_with(spec, |_, _| Ok(()))
}

/// Runs every cell in parallel and hands each finished log to `sink`.
/// Results are ordered by environment, then mode, then seed.
pub fn run_batch_with<S>(spec: &BatchSpec, sink: S) -> Result<BatchReport>
where
    S: Fn(&EpisodeResult, &EpisodeLog) -> Result<()> + Sync,
{
    spec.validate()?;
    let cells: Vec<(usize, ControllerMode, u64)> = (0..spec.environments.len())
        .flat_map(|e| spec.modes.iter().flat_map(move |&m| spec.seeds.iter().map(move |&s| (e, m, s))))
        .collect();
    let episodes = cells
        .into_par_iter()
        .map(|(e, m, s)| {
            let (result, log) = run_cell(spec, e, m, s);
            if let Some(log) = log {
                sink(&result, &log)?;
            }
            Ok(result)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = spec
        .modes
        .iter()
        .map(|&mode| summarize(mode, &episodes.iter().filter(|r| r.mode == mode).collect::<Vec<_>>()))
        .collect();
    Ok(BatchReport { episodes, summary })
}

fn csv_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

impl BatchReport {
    pub fn summary_for(&self, mode: ControllerMode) -> Option<&ModeSummary> {
        self.summary.iter().find(|s| s.mode == mode)
    }

    /// One row per mode: means and sample standard deviations.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.summary {
            w.serialize(s).map_err(csv_error)?;
        }
        w.flush()
    }

    pub fn write_episodes_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            env: usize,
            mode: ControllerMode,
            seed: u64,
            success: bool,
            end_reason: Option<EndReason>,
            ticks: u64,
            collision_ticks: u64,
            duration_s: Option<f64>,
            travel_cm: Option<f64>,
            min_prox_cm: Option<f64>,
            cosine_dist: Option<f64>,
            error: Option<&'a str>,
        }
        let mut w = csv::Writer::from_writer(out);
        for r in &self.episodes {
            w.serialize(Row {
                env: r.env_index,
                mode: r.mode,
                seed: r.seed,
                success: r.success,
                end_reason: r.end_reason,
                ticks: r.ticks,
                collision_ticks: r.collision_ticks,
                duration_s: r.metrics.map(|m| m.duration_s),
                travel_cm: r.metrics.map(|m| m.travel_cm),
                min_prox_cm: r.metrics.map(|m| m.min_proximity_cm),
                cosine_dist: r.metrics.map(|m| m.mean_cosine_distance),
                error: r.error.as_deref(),
            })
            .map_err(csv_error)?;
        }
        w.flush()
    }
}
