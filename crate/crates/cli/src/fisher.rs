//! `fisher-field`: ellipse grids of the belief-weighted inverse Fisher.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use ngsc_core::control::goal_candidates;
use ngsc_core::fisher_field::{fisher_field, BeliefMode, EllipseRow, FisherFieldSpec};
use ngsc_core::geometry::sample_environment;
use ngsc_core::rng::seeded;
use ngsc_core::{ControllerConfig, Environment, GoalId, Phase, Point2, SamplingConfig};

use crate::config::{load_environments, RunConfig};

#[derive(Clone, Debug)]
pub enum EnvChoice {
    Config(PathBuf),
    File(PathBuf),
    Seed(u64),
}

#[derive(Clone, Debug)]
pub struct FisherFieldOptions {
    pub env: EnvChoice,
    /// `pick` (all objects), `place`, or a comma list of `object:<id>` and `place`.
    pub goals: String,
    pub resolution: usize,
    /// `distance`, `uniform`, `one-hot:nearest` or `one-hot:<goal>`.
    pub beliefs: String,
    pub seed: u64,
}

pub fn parse_goal(s: &str) -> anyhow::Result<GoalId> {
    match s.trim() {
        "place" => Ok(GoalId::Place),
        other => {
            let id = other
                .strip_prefix("object:")
                .ok_or_else(|| anyhow!("goal '{other}' is neither 'place' nor 'object:<id>'"))?;
            Ok(GoalId::Object(id.parse().with_context(|| format!("object id in '{other}'"))?))
        }
    }
}

fn goal_set(env: &Environment, spec: &str) -> anyhow::Result<Vec<(GoalId, Point2)>> {
    match spec.trim() {
        "pick" => Ok(goal_candidates(env, Phase::Pick)),
        list => list
            .split(',')
            .map(|g| {
                let id = parse_goal(g)?;
                let p = match id {
                    GoalId::Place => env.place_target,
                    GoalId::Object(k) => {
                        env.object(ngsc_core::ObjectId(k))
                            .ok_or_else(|| anyhow!("no object {k} in the environment"))?
                            .center
                    }
                };
                Ok((id, p))
            })
            .collect(),
    }
}

pub fn parse_beliefs(s: &str) -> anyhow::Result<BeliefMode> {
    match s.trim() {
        "distance" => Ok(BeliefMode::Distance),
        "uniform" => Ok(BeliefMode::Uniform),
        "one-hot:nearest" => Ok(BeliefMode::Nearest),
        other => match other.strip_prefix("one-hot:") {
            Some(g) => Ok(BeliefMode::OneHot(parse_goal(g)?)),
            None => {
                bail!("beliefs must be 'distance', 'uniform', 'one-hot:nearest' or 'one-hot:<goal>', got '{other}'")
            }
        },
    }
}

pub fn fisher_field_rows(opts: &FisherFieldOptions) -> anyhow::Result<(Environment, Vec<EllipseRow>)> {
    let (env, controller) = match &opts.env {
        EnvChoice::Config(p) => {
            let cfg = RunConfig::load(p)?;
            (cfg.environments()?.remove(0), cfg.controller)
        }
        EnvChoice::File(p) => {
            let mut envs = load_environments(p)?;
            if envs.is_empty() {
                bail!("{} holds no environments", p.display());
            }
            (envs.remove(0), ControllerConfig::default())
        }
        EnvChoice::Seed(s) => {
            (sample_environment(&mut seeded(*s), &SamplingConfig::default())?, ControllerConfig::default())
        }
    };
    let spec = FisherFieldSpec {
        resolution: opts.resolution,
        goals: goal_set(&env, &opts.goals)?,
        beliefs: parse_beliefs(&opts.beliefs)?,
        belief_temperature: controller.belief_temperature,
        fisher: controller.fisher,
        gains: controller.gains,
        seed: opts.seed,
    };
    let rows = fisher_field(&env, &spec)?;
    Ok((env, rows))
}
