//! Detector timing on synthetic day-long recordings.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use stepforge::dsp::vector_magnitude;
use stepforge::ingest::{fmt_f64, write_table, Table};
use stepforge::simulate::{daily_gait_recipe, gen_gait};

use crate::config::RunConfig;

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub subjects: usize,
    pub days: u32,
    pub rate_hz: f64,
    pub out: PathBuf,
}

/// Subjects per row of the reference timing table.
pub const REFERENCE_SUBJECTS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub detector: String,
    pub elapsed: Duration,
    pub steps: f64,
    pub true_steps: f64,
}

impl BenchRow {
    /// Wall time scaled to `REFERENCE_SUBJECTS` subjects, in minutes.
    pub fn minutes_per_10(&self, subjects: usize) -> f64 {
        self.elapsed.as_secs_f64() / 60.0 * REFERENCE_SUBJECTS / subjects as f64
    }
}

/// Times vector magnitude plus detection for every enabled detector, one
/// synthetic day at a time.
pub fn measure(args: &BenchArgs, cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let registry = cfg.detectors.registry()?;
    if registry.is_empty() {
        bail!("no detectors enabled");
    }
    if args.subjects == 0 || args.days == 0 {
        bail!("bench needs at least one subject and one day");
    }
    let seed = cfg.analysis.rng_seed;
    let mut rows: BTreeMap<String, BenchRow> = registry
        .names()
        .into_iter()
        .map(|n| {
            let row = BenchRow {
                detector: n.clone(),
                elapsed: Duration::ZERO,
                steps: 0.0,
                true_steps: 0.0,
            };
            (n, row)
        })
        .collect();
    for subject in 0..args.subjects {
        for day in 0..args.days {
            let day_seed = seed ^ ((subject as u64) << 32 | u64::from(day));
            let gait = gen_gait(&daily_gait_recipe(1, day_seed), args.rate_hz, day_seed)
                .context("generating synthetic recording")?;
            let truth = gait.total_steps();
            for det in registry.iter() {
                let started = Instant::now();
                let vm = vector_magnitude(&gait.recording);
                let series = det.detect(&vm);
                let elapsed = started.elapsed();
                let row = rows.get_mut(det.name()).expect("registered");
                row.elapsed += elapsed;
                row.steps += series.total();
                row.true_steps += truth;
            }
            log::info!("bench: subject {} day {} done", subject + 1, day + 1);
        }
    }
    Ok(registry.names().into_iter().filter_map(|n| rows.remove(&n)).collect())
}

pub fn run(args: &BenchArgs, cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let rows = measure(args, cfg)?;
    let mut t = Table::new([
        "detector",
        "subjects",
        "days",
        "rate_hz",
        "seconds",
        "minutes_per_10_subjects",
        "steps",
        "true_steps",
    ]);
    for r in &rows {
        t.push(vec![
            r.detector.clone(),
            args.subjects.to_string(),
            args.days.to_string(),
            fmt_f64(args.rate_hz),
            format!("{:.3}", r.elapsed.as_secs_f64()),
            format!("{:.3}", r.minutes_per_10(args.subjects)),
            fmt_f64(r.steps.round()),
            fmt_f64(r.true_steps.round()),
        ]);
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join("bench_timing.csv");
    write_table(&t, &path)?;
    log::info!("wrote {}", path.display());
    Ok(rows)
}
