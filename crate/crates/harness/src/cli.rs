//! `offeval` subcommands. Exit codes: 0 success, 1 runtime error, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use offeval_core::bias::BIAS_CSV_HEADER;
use serde_json::{json, Value};

use crate::checks::run_checks;
use crate::config::{merge, ExperimentConfig};
use crate::output::{emit_csv, summary_lines};
use crate::runner::{run_bias_vs_n, run_reduction_comparison, ResultRow};
use crate::HarnessError;

pub const JOBS_ENV: &str = "OFFEVAL_JOBS";

#[derive(Debug, Parser)]
#[command(name = "offeval", version, about = "Reusing-bias sweeps for offline policy evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config; keys not given keep their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path (overrides the config).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads; falls back to OFFEVAL_JOBS, then to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Bias decomposition over the N grid for one estimator variant.
    BiasSweep,
    /// PI−−, PI+−, PI−+, DR−− (or the configured variants) over the ν grid.
    ReductionCompare,
    /// Closed-form checks of the bias estimators.
    OracleCheck,
    /// Small bias sweep that finishes in seconds.
    Demo,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::BiasSweep => "bias-sweep",
            Command::ReductionCompare => "reduction-compare",
            Command::OracleCheck => "oracle-check",
            Command::Demo => "demo",
        }
    }

    fn defaults(self) -> Value {
        let base = ExperimentConfig { name: self.name().into(), ..Default::default() }.to_value();
        match self {
            Command::Demo => merge(
                merge(base, crate::presets::winners_curse()),
                json!({"name": "demo", "bootstrap": true, "n_grid": [32, 64, 128, 256], "repeats": 3}),
            ),
            _ => base,
        }
    }
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<HarnessError>() {
                Some(HarnessError::Config(_)) => 2,
                _ => 1,
            }
        }
    }
}

fn jobs(cli: &Cli) -> Result<Option<usize>> {
    let jobs = match cli.jobs {
        Some(j) => Some(j),
        None => match std::env::var(JOBS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| HarnessError::Config(format!("{JOBS_ENV}={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if jobs == Some(0) {
        return Err(HarnessError::Config("--jobs must be at least 1".into()).into());
    }
    Ok(jobs)
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let base = cli.command.defaults();
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, base)?,
        None => ExperimentConfig::from_value(base)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs(cli)? {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().context("starting worker threads")?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", cli.command.name())));
    pool.install(|| match cli.command {
        Command::BiasSweep | Command::Demo => write_rows(&run_bias_vs_n(&cfg)?, &out),
        Command::ReductionCompare => write_rows(&run_reduction_comparison(&cfg)?, &out),
        Command::OracleCheck => oracle_check(&cfg, &out),
    })
}

fn write_rows(rows: &[ResultRow], out: &Path) -> Result<()> {
    emit_csv(rows, out)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("wrote {} rows ({failed} failed) to {}", rows.len(), out.display());
    for line in summary_lines(rows) {
        println!("{line}");
    }
    Ok(())
}

fn oracle_check(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let outcomes = run_checks(cfg.seed, 4000)?;
    let mut text = format!("{BIAS_CSV_HEADER}\n");
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        for r in &o.reports {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
    }
    for o in &outcomes {
        text.push_str(&format!("# {} {}\n", if o.passed { "pass" } else { "fail" }, o.name));
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        anyhow::bail!("{failed} oracle checks failed");
    }
    Ok(())
}
