use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use stepforge_cli::analyze::{self, AnalyzeArgs};
use stepforge_cli::bench::{self, BenchArgs};
use stepforge_cli::config::RunConfig;
use stepforge_cli::simulate::{self, SimulateArgs};
use stepforge_cli::steps::{self, StepsArgs};
use stepforge_cli::{Outcome, EXIT_FATAL};

#[derive(Debug, Parser)]
#[command(name = "stepforge", version, about = "Step counting, activity summaries and mortality analysis")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, env = "STEPFORGE_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for cross-validation and simulation.
    #[arg(long, global = true, env = "STEPFORGE_SEED")]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, env = "STEPFORGE_JOBS")]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "STEPFORGE_OUT")]
    out: Option<PathBuf>,
    /// Configuration override `key=value`; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Raw recordings to per-minute steps, AC and MIMS.
    Steps {
        raw_dir: PathBuf,
        /// Minute files whose wear labels and quality flags are merged in.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Ignore and do not write the binary sample cache.
        #[arg(long)]
        no_cache: bool,
    },
    /// Minute files, covariates and mortality to report tables.
    Analyze {
        minute_dir: PathBuf,
        #[arg(long)]
        covariates: PathBuf,
        #[arg(long)]
        mortality: Option<PathBuf>,
        /// External step series `name=path`; may be repeated.
        #[arg(long = "import", value_name = "NAME=PATH")]
        imports: Vec<String>,
    },
    /// Detector timing on synthetic recordings.
    Bench {
        #[arg(long, default_value_t = 10)]
        subjects: usize,
        #[arg(long, default_value_t = 7)]
        days: u32,
        #[arg(long, default_value_t = 80.0)]
        rate: f64,
        /// Comma-separated detectors; defaults to the configured set.
        #[arg(long)]
        detectors: Option<String>,
    },
    /// Synthetic minute files, covariates, mortality and raw recordings.
    Simulate {
        #[arg(long, default_value_t = 200)]
        subjects: usize,
        #[arg(long, default_value_t = 7)]
        days: u32,
        #[arg(long, default_value_t = 0)]
        raw_subjects: usize,
        #[arg(long, default_value_t = 1)]
        raw_days: u32,
        #[arg(long, default_value_t = 80.0)]
        rate: f64,
    },
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| anyhow!("expected KEY=VALUE, got `{s}`"))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env(std::env::vars())?;
    for s in &cli.set {
        let (k, v) = split_pair(s)?;
        cfg.set(k, v).with_context(|| format!("--set {s}"))?;
    }
    if let Some(seed) = cli.seed {
        cfg.analysis.rng_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(outcome: &Outcome) -> ExitCode {
    if outcome.failures.is_empty() {
        log::info!("{} subjects processed", outcome.succeeded);
    } else {
        log::warn!("{} subjects processed, {} failed", outcome.succeeded, outcome.failures.len());
        for f in &outcome.failures {
            eprintln!("failed: {f}");
        }
    }
    ExitCode::from(outcome.exit_code() as u8)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = load_config(&cli)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let out = cli.out.clone().ok_or_else(|| anyhow!("--out is required"))?;
    match cli.command {
        Command::Steps {
            raw_dir,
            labels,
            no_cache,
        } => {
            let args = StepsArgs {
                raw_dir,
                out,
                labels,
                use_cache: !no_cache,
            };
            Ok(report(&steps::run(&args, &cfg)?))
        }
        Command::Analyze {
            minute_dir,
            covariates,
            mortality,
            imports,
        } => {
            let imports = imports
                .iter()
                .map(|s| split_pair(s).map(|(k, v)| (k.to_string(), PathBuf::from(v))))
                .collect::<Result<_>>()?;
            let args = AnalyzeArgs {
                minute_dir,
                covariates,
                mortality,
                imports,
                out,
            };
            Ok(report(&analyze::run(&args, &cfg)?))
        }
        Command::Bench {
            subjects,
            days,
            rate,
            detectors,
        } => {
            if let Some(list) = detectors {
                cfg.set("detectors", &list)?;
            }
            let args = BenchArgs {
                subjects,
                days,
                rate_hz: rate,
                out,
            };
            for row in bench::run(&args, &cfg)? {
                println!(
                    "{}: {:.3} min per 10 subjects ({:.0} of {:.0} steps)",
                    row.detector,
                    row.minutes_per_10(subjects),
                    row.steps,
                    row.true_steps
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            subjects,
            days,
            raw_subjects,
            raw_days,
            rate,
        } => {
            let args = SimulateArgs {
                out,
                subjects,
                days,
                raw_subjects,
                raw_days,
                rate_hz: rate,
            };
            simulate::run(&args, &cfg)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STEPFORGE_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FATAL as u8)
        }
    }
}
