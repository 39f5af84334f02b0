//! Command-line front end and live session server.

pub mod config;
pub mod fisher;
pub mod replay;
pub mod serve;
pub mod simulate;

use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ngsc_core::fisher_field::write_ellipse_csv;
use ngsc_core::ControllerMode;

#[derive(Debug, Parser)]
#[command(name = "ngsc", version, about = "Natural-gradient shared control simulator and teleoperation server")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the episodes described by a config file and write logs and CSVs.
    Simulate(SimulateArgs),
    /// Evaluate inverse-Fisher ellipses on a workspace grid.
    FisherField(FisherFieldArgs),
    /// Serve live teleoperation sessions over WebSocket.
    Serve(ServeArgs),
    /// Re-emit a logged episode as protocol messages on stdout.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Replace the config's seed list with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run only this controller (DC, NG, LB or OA).
    #[arg(long)]
    pub mode: Option<ControllerMode>,
    /// Output directory; overrides the config's `output.dir`.
    #[arg(long, env = "NGSC_LOG_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FisherFieldArgs {
    /// Take the environment and controller settings from a run config.
    #[arg(long, conflicts_with_all = ["env", "seed"])]
    pub config: Option<PathBuf>,
    /// Environment JSON file (the first environment is used).
    #[arg(long, conflicts_with = "seed")]
    pub env: Option<PathBuf>,
    /// Sample the environment from this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `pick`, `place`, or a comma list such as `object:0,object:1`.
    #[arg(long, default_value = "pick")]
    pub goals: String,
    #[arg(long, default_value_t = 20)]
    pub resolution: usize,
    /// `distance`, `uniform`, `one-hot:nearest` or `one-hot:<goal>`.
    #[arg(long, default_value = "distance")]
    pub beliefs: String,
    /// Seed for the local policy samples.
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub bind: String,
    /// Run config supplying controller, sampler and tick limit.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for session logs.
    #[arg(long, env = "NGSC_LOG_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Episode log (JSON lines).
    pub log: PathBuf,
    /// Playback speed relative to the logged tick rate.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let opts = simulate::SimulateOptions { seed: a.seed, mode: a.mode, out: a.out };
            let out = simulate::simulate(&a.config, &opts)?;
            print!("{}", simulate::format_summary(&out.report));
            println!("wrote {}", out.out_dir.display());
            Ok(())
        }
        Command::FisherField(a) => {
            let env = match (a.config, a.env, a.seed) {
                (Some(c), _, _) => fisher::EnvChoice::Config(c),
                (_, Some(e), _) => fisher::EnvChoice::File(e),
                (_, _, s) => fisher::EnvChoice::Seed(s.unwrap_or(0)),
            };
            let opts = fisher::FisherFieldOptions {
                env,
                goals: a.goals,
                resolution: a.resolution,
                beliefs: a.beliefs,
                seed: a.sample_seed,
            };
            let (_, rows) = fisher::fisher_field_rows(&opts)?;
            match a.out {
                Some(path) => {
                    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_ellipse_csv(&rows, std::io::BufWriter::new(file))?;
                }
                None => write_ellipse_csv(&rows, std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Serve(a) => {
            let mut opts = serve::ServeOptions::default();
            if let Some(path) = &a.config {
                let cfg = config::RunConfig::load(path)?;
                opts.controller = cfg.controller;
                opts.max_ticks = cfg.max_ticks;
                opts.log_dir = cfg.output.dir.join("sessions");
                if let config::EnvironmentSource::Sampler { config, .. } = cfg.environment {
                    opts.sampling = config;
                }
            }
            if let Some(out) = a.out {
                opts.log_dir = out;
            }
            opts.controller.validate()?;
            std::fs::create_dir_all(&opts.log_dir).with_context(|| format!("creating {}", opts.log_dir.display()))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener =
                    tokio::net::TcpListener::bind(&a.bind).await.with_context(|| format!("binding {}", a.bind))?;
                serve::run_server(listener, opts).await
            })
        }
        Command::Replay(a) => {
            let log = ngsc_core::EpisodeLog::read_file(&a.log)?;
            let stdout = std::io::stdout().lock();
            let mut out = std::io::LineWriter::new(stdout);
            replay::replay_to(&log, a.speed, &mut out)?;
            out.flush()?;
            Ok(())
        }
    }
}
