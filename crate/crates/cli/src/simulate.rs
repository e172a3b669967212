//! Synthetic study inputs in the formats `steps` and `analyze` read.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use stepforge::ingest::write_raw_recording;
use stepforge::model::TriaxialRecording;
use stepforge::simulate::{daily_gait_recipe, default_start, gen_gait, gen_study, StudySpec};

use crate::config::RunConfig;

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub out: PathBuf,
    pub subjects: usize,
    pub days: u32,
    /// Number of subjects that also get a raw gzip recording.
    pub raw_subjects: usize,
    pub raw_days: u32,
    pub rate_hz: f64,
}

/// Writes `minutes/`, `covariates.csv`, `mortality.csv` and, when requested,
/// `raw/<subject>.csv.gz` recordings without timestamps.
pub fn run(args: &SimulateArgs, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if args.subjects == 0 || args.days == 0 {
        bail!("simulate needs at least one subject and one day");
    }
    if args.raw_subjects > args.subjects {
        bail!("raw subjects ({}) exceed subjects ({})", args.raw_subjects, args.subjects);
    }
    let spec = StudySpec {
        n_subjects: args.subjects,
        days: args.days,
        ..StudySpec::default()
    };
    let seed = cfg.analysis.rng_seed;
    let study = gen_study(&spec, seed)?;
    study.write(&args.out)?;
    log::info!("wrote {} subjects to {}", args.subjects, args.out.display());
    if args.raw_subjects == 0 {
        return Ok(());
    }
    let raw_dir = args.out.join("raw");
    std::fs::create_dir_all(&raw_dir).with_context(|| format!("creating {}", raw_dir.display()))?;
    for (i, s) in study.subjects.iter().take(args.raw_subjects).enumerate() {
        let id = &s.covariates.subject_id;
        let raw_seed = seed.wrapping_add(i as u64 + 1);
        let gait = gen_gait(&daily_gait_recipe(args.raw_days, raw_seed), args.rate_hz, raw_seed)?;
        let [x, y, z] = gait.recording.axes();
        let rec = TriaxialRecording::new(id.clone(), default_start(), args.rate_hz, x.to_vec(), y.to_vec(), z.to_vec())?;
        let path = raw_dir.join(format!("{id}.csv.gz"));
        write_raw_recording(&rec, &path, false)?;
        log::info!("wrote {} ({} true steps)", path.display(), gait.total_steps().round());
    }
    Ok(())
}
