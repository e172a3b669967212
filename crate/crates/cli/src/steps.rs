//! Raw recordings to minute-level step, AC and MIMS files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use stepforge::ingest::{open_recording, read_minute_file, subject_id_from_path, write_minute_file};
use stepforge::model::MinuteRecord;
use stepforge::summaries::{summarize_block, DayBlocker};

use crate::config::RunConfig;
use crate::{list_inputs, Outcome};

/// Suffix of per-subject minute files.
pub const MINUTE_SUFFIX: &str = ".minutes.csv";

#[derive(Debug, Clone)]
pub struct StepsArgs {
    pub raw_dir: PathBuf,
    pub out: PathBuf,
    /// Directory of minute files whose wear labels and quality flags are merged in.
    pub labels: Option<PathBuf>,
    pub use_cache: bool,
}

struct SubjectResult {
    subject: String,
    from_cache: bool,
    timings: BTreeMap<String, Duration>,
    elapsed: Duration,
}

pub fn cache_path(out: &Path, subject: &str) -> PathBuf {
    out.join(".cache").join(format!("{subject}.sfg"))
}

fn merge_labels(records: &mut [MinuteRecord], labels: &[MinuteRecord]) -> usize {
    let by_key: BTreeMap<(u32, u16), &MinuteRecord> = labels.iter().map(|m| ((m.day_index, m.minute_of_day), m)).collect();
    let mut merged = 0;
    for r in records.iter_mut() {
        if let Some(l) = by_key.get(&(r.day_index, r.minute_of_day)) {
            r.wear = l.wear;
            r.quality_flagged = l.quality_flagged;
            merged += 1;
        }
    }
    merged
}

fn process_subject(path: &Path, cfg: &RunConfig, args: &StepsArgs) -> Result<SubjectResult> {
    let started = Instant::now();
    let subject = subject_id_from_path(path);
    let registry = cfg.detectors.registry()?;
    let cache = args.use_cache.then(|| cache_path(&args.out, &subject));
    let chunks = open_recording(path, &cfg.raw, cache.as_deref())?;
    let from_cache = chunks.from_cache();
    let mut blocker: Option<DayBlocker> = None;
    let mut records = Vec::new();
    let mut timings: BTreeMap<String, Duration> = BTreeMap::new();
    let mut handle = |block: &stepforge::summaries::DayBlock| -> Result<()> {
        let (minutes, run) = summarize_block(block, &registry, &cfg.ac, &cfg.mims)?;
        if let Some((name, err)) = run.errors.iter().next() {
            bail!("detector {name} failed on day {}: {err}", block.day_index);
        }
        for (name, t) in run.timings {
            *timings.entry(name).or_default() += t;
        }
        records.extend(minutes);
        Ok(())
    };
    for chunk in chunks {
        let chunk = chunk?;
        let b = blocker.get_or_insert_with(|| DayBlocker::new(chunk.start(), chunk.sample_rate_hz()));
        for block in b.push(&chunk)? {
            handle(&block)?;
        }
    }
    let Some(b) = blocker else {
        bail!("{} contains no samples", path.display());
    };
    if let Some(block) = b.finish() {
        handle(&block)?;
    }
    if let Some(dir) = &args.labels {
        let label_path = dir.join(format!("{subject}{MINUTE_SUFFIX}"));
        if label_path.exists() {
            let labels = read_minute_file(&label_path)?;
            let n = merge_labels(&mut records, &labels);
            log::info!("{subject}: merged wear labels for {n} of {} minutes", records.len());
        } else {
            log::warn!("{subject}: no wear labels at {}", label_path.display());
        }
    }
    write_minute_file(&records, &args.out.join(format!("{subject}{MINUTE_SUFFIX}")))?;
    Ok(SubjectResult {
        subject,
        from_cache,
        timings,
        elapsed: started.elapsed(),
    })
}

pub fn run(args: &StepsArgs, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let registry = cfg.detectors.registry()?;
    if registry.is_empty() {
        bail!("no detectors enabled");
    }
    let inputs = list_inputs(&args.raw_dir, |_| true)?;
    if inputs.is_empty() {
        bail!("no subjects: {} has no raw files", args.raw_dir.display());
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    if args.use_cache {
        std::fs::create_dir_all(args.out.join(".cache"))?;
    }
    log::info!("steps: {} subjects, detectors [{}]", inputs.len(), registry.names().join(", "));
    let results: Vec<(PathBuf, Result<SubjectResult>)> = inputs
        .par_iter()
        .map(|p| (p.clone(), process_subject(p, cfg, args)))
        .collect();

    let mut outcome = Outcome::default();
    for (path, r) in results {
        match r {
            Ok(s) => {
                log::info!(
                    "{}: done in {:.1} s{}",
                    s.subject,
                    s.elapsed.as_secs_f64(),
                    if s.from_cache { " (cache)" } else { "" }
                );
                let per_detector: Vec<String> = s
                    .timings
                    .iter()
                    .map(|(name, t)| format!("{name} {:.2} s", t.as_secs_f64()))
                    .collect();
                log::info!("{}: detector time {}", s.subject, per_detector.join(", "));
                outcome.succeeded += 1;
            }
            Err(e) => {
                log::error!("{}: {e:#}", path.display());
                outcome.failures.push(format!("{}: {e:#}", path.display()));
            }
        }
    }
    Ok(outcome)
}
