//! Run configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ngsc_core::geometry::sample_environment;
use ngsc_core::rng::{derive_seed, seeded};
use ngsc_core::sim::batch::BatchSpec;
use ngsc_core::{ControllerConfig, ControllerMode, Environment, SamplingConfig, UserProfile};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_TICKS: u64 = 1800;

/// Where environments come from. Exactly one source per config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSource {
    Inline(Vec<Environment>),
    /// JSON file holding one environment or an array of them, relative to
    /// the config file.
    File(PathBuf),
    Sampler {
        seed: u64,
        #[serde(default = "one")]
        count: usize,
        #[serde(default)]
        config: SamplingConfig,
    },
}

fn one() -> usize {
    1
}

fn all_modes() -> Vec<ControllerMode> {
    ControllerMode::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_max_ticks() -> u64 {
    DEFAULT_MAX_TICKS
}

fn default_out() -> PathBuf {
    PathBuf::from("ngsc-out")
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub logs: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out(), logs: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvironmentSource,
    #[serde(default = "all_modes")]
    pub modes: Vec<ControllerMode>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub user: UserProfile,
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses a config file; relative paths inside it resolve against its
    /// directory. Parse errors carry line and column.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let EnvironmentSource::File(p) = &mut cfg.environment {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                bail!("environment file {} does not exist", p.display());
            }
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn environments(&self) -> anyhow::Result<Vec<Environment>> {
        let envs = match &self.environment {
            EnvironmentSource::Inline(envs) => envs.clone(),
            EnvironmentSource::File(p) => load_environments(p)?,
            EnvironmentSource::Sampler { seed, count, config } => (0..*count as u64)
                .map(|k| sample_environment(&mut seeded(derive_seed(*seed, &[k])), config))
                .collect::<ngsc_core::Result<_>>()?,
        };
        if envs.is_empty() {
            bail!("the environment source yields no environments");
        }
        for (i, e) in envs.iter().enumerate() {
            e.validate().with_context(|| format!("environment {i}"))?;
        }
        Ok(envs)
    }

    pub fn batch_spec(&self) -> anyhow::Result<BatchSpec> {
        let spec = BatchSpec {
            environments: self.environments()?,
            modes: self.modes.clone(),
            seeds: self.seeds.clone(),
            controller: self.controller,
            user: self.user,
            max_ticks: self.max_ticks,
        };
        spec.validate()?;
        if spec.max_ticks == 0 {
            bail!("max_ticks must be positive");
        }
        Ok(spec)
    }
}

/// Reads a JSON file holding one environment or an array of them.
pub fn load_environments(path: &Path) -> anyhow::Result<Vec<Environment>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Box<Environment>),
        Many(Vec<Environment>),
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: OneOrMany =
        serde_json::from_str(&text).with_context(|| format!("parsing environment file {}", path.display()))?;
    Ok(match parsed {
        OneOrMany::One(e) => vec![*e],
        OneOrMany::Many(v) => v,
    })
}
