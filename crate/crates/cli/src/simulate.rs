//! `simulate`: batch runs from a config file.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ngsc_core::sim::batch::{run_batch_with, BatchReport};
use ngsc_core::ControllerMode;

use crate::config::RunConfig;

#[derive(Clone, Debug, Default)]
pub struct SimulateOptions {
    pub seed: Option<u64>,
    pub mode: Option<ControllerMode>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct SimulateOutput {
    pub report: BatchReport,
    pub out_dir: PathBuf,
}

pub fn log_file_name(env_index: usize, mode: ControllerMode, seed: u64) -> String {
    format!("env{env_index:03}_{mode}_seed{seed}.jsonl")
}

/// Loads and validates everything before touching the output directory, so
/// a bad config leaves no partial outputs.
pub fn simulate(config_path: &Path, opts: &SimulateOptions) -> anyhow::Result<SimulateOutput> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(mode) = opts.mode {
        cfg.modes = vec![mode];
    }
    if let Some(out) = &opts.out {
        cfg.output.dir = out.clone();
    }
    let spec = cfg.batch_spec()?;

    let out_dir = cfg.output.dir.clone();
    let log_dir = out_dir.join("logs");
    fs::create_dir_all(if cfg.output.logs { &log_dir } else { &out_dir })
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let write_logs = cfg.output.logs;
    let report = run_batch_with(&spec, |result, log| {
        if write_logs {
            let path = log_dir.join(log_file_name(result.env_index, result.mode, result.seed));
            let file = File::create(&path)
                .map_err(|e| ngsc_core::NgscError::InvalidConfig(format!("{}: {e}", path.display())))?;
            log.write_jsonl(BufWriter::new(file))
                .map_err(|e| ngsc_core::NgscError::InvalidConfig(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    })?;

    report.write_episodes_csv(BufWriter::new(File::create(out_dir.join("metrics.csv"))?))?;
    report.write_summary_csv(BufWriter::new(File::create(out_dir.join("summary.csv"))?))?;

    let failed: Vec<_> = report.episodes.iter().filter(|r| r.error.is_some()).collect();
    if let Some(first) = failed.first() {
        bail!(
            "{} episode(s) failed; first: env {} {} seed {}: {}",
            failed.len(),
            first.env_index,
            first.mode,
            first.seed,
            first.error.as_deref().unwrap_or_default()
        );
    }
    Ok(SimulateOutput { report, out_dir })
}

/// Per-mode summary table for the terminal.
pub fn format_summary(report: &BatchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<4} {:>8} {:>16} {:>18} {:>16} {:>18} {:>8}",
        "mode", "episodes", "duration (s)", "travel (cm)", "min prox (cm)", "cosine (1e-2)", "success"
    );
    for m in &report.summary {
        let _ = writeln!(
            s,
            "{:<4} {:>8} {:>8.2} ± {:<5.2} {:>9.1} ± {:<6.1} {:>7.2} ± {:<6.2} {:>8.2} ± {:<7.2} {:>8.2}",
            m.mode.code(),
            m.episodes,
            m.duration_s,
            m.duration_sd,
            m.travel_cm,
            m.travel_sd,
            m.min_prox_cm,
            m.min_prox_sd,
            100.0 * m.cosine_dist,
            100.0 * m.cosine_sd,
            m.success_rate
        );
    }
    s
}
