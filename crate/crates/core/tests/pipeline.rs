use stepforge::detectors::DetectorConfig;
use stepforge::ingest::{
    open_recording, read_covariates, read_minute_file, read_mortality, write_minute_file, write_raw_recording,
    RawFileSchema,
};
use stepforge::model::{AnalysisConfig, MinuteDataset};
use stepforge::simulate::{gen_gait, gen_study, GaitSegment, StudySpec};
use stepforge::summaries::{summarize_block, AcParams, DayBlocker, MimsParams};
use stepforge::survival::{assemble_dataset, hazard_ratio_table, model_suite};
use stepforge::validity::{steps_var, summarize_dataset, VAR_MIMS};

#[test]
fn raw_recording_to_minutes_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let segs = [GaitSegment::rest(90.0, 0.01), GaitSegment::walk(150.0, 2.0, 0.5, 0.02)];
    let gait = gen_gait(&segs, 80.0, 4).unwrap();
    let raw = dir.path().join("P7.csv.gz");
    write_raw_recording(&gait.recording, &raw, false).unwrap();

    let registry = DetectorConfig::default().registry().unwrap();
    let mut schema = RawFileSchema::default();
    schema.chunk_seconds = 37.0;
    let mut blocker = None;
    let mut records = Vec::new();
    for chunk in open_recording(&raw, &schema, None).unwrap() {
        let chunk = chunk.unwrap();
        let b = blocker.get_or_insert_with(|| DayBlocker::new(chunk.start(), chunk.sample_rate_hz()));
        for block in b.push(&chunk).unwrap() {
            records.extend(summarize_block(&block, &registry, &AcParams::default(), &MimsParams::default()).unwrap().0);
        }
    }
    if let Some(block) = blocker.unwrap().finish() {
        records.extend(summarize_block(&block, &registry, &AcParams::default(), &MimsParams::default()).unwrap().0);
    }
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.subject_id == "P7" && r.steps.len() == 4));
    let spectral: f64 = records.iter().map(|r| r.steps["spectral"]).sum();
    assert!((spectral - 300.0).abs() <= 30.0, "{spectral}");
    assert_eq!(records[0].steps["peak_original"], 0.0);

    let path = dir.path().join("P7.minutes.csv");
    write_minute_file(&records, &path).unwrap();
    assert_eq!(read_minute_file(&path).unwrap(), records);
}

#[test]
fn study_files_feed_the_survival_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StudySpec {
        n_subjects: 120,
        days: 7,
        ..StudySpec::default()
    };
    let study = gen_study(&spec, 8).unwrap();
    study.write(dir.path()).unwrap();
    let covariates = read_covariates(&dir.path().join("covariates.csv")).unwrap();
    assert_eq!(covariates, study.covariates());
    let mortality = read_mortality(&dir.path().join("mortality.csv")).unwrap();
    assert_eq!(mortality.records, study.mortality());

    let mut minutes = Vec::new();
    for c in &covariates {
        minutes.extend(read_minute_file(&dir.path().join("minutes").join(format!("{}.minutes.csv", c.subject_id))).unwrap());
    }
    let mut cfg = AnalysisConfig::default();
    cfg.cv_repeats = 2;
    cfg.age_range = (40.0, 85.0);
    let (days, subjects) = summarize_dataset(&MinuteDataset::new(minutes).unwrap(), &cfg);
    assert_eq!(days.len(), 120 * 7);
    assert_eq!(subjects.len(), 120);
    let included = subjects.iter().filter(|s| s.included).count();
    assert!(included > 90, "{included}");

    let steps: Vec<String> = ["peak_original", "template"].iter().map(|d| steps_var(d)).collect();
    let mut activity = steps.clone();
    activity.push(VAR_MIMS.to_string());
    let (data, design, report) = assemble_dataset(&subjects, &covariates, &mortality.records, &activity, &cfg).unwrap();
    assert_eq!(
        report.analysed + report.not_included + report.incomplete_covariates + report.outside_age_range,
        120
    );
    assert_eq!(data.len(), report.analysed);
    let suite = model_suite(&data, &design.names, &steps[0], VAR_MIMS, &cfg).unwrap();
    assert_eq!(suite.rows.len(), 4);
    assert!(suite.rows.iter().all(|r| (0.0..=1.0).contains(&r.cvc)));
    let hrs = hazard_ratio_table(&data, &design.names, &steps, &cfg).unwrap();
    assert!(hrs.iter().all(|h| h.raw.hr.is_finite() && h.raw.hr > 0.0));
    // Both columns are near-linear rescalings of the same latent activity,
    // so their per-SD hazard ratios agree.
    let per_sd: Vec<f64> = hrs.iter().map(|h| h.scaled.hr.ln()).collect();
    assert!((per_sd[0] - per_sd[1]).abs() < 0.05, "{per_sd:?}");
}
