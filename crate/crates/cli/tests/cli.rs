use std::path::Path;
use std::process::{Command, Output};

use stepforge::ingest::{read_minute_file, write_raw_recording};
use stepforge::simulate::{gen_gait, GaitSegment};

fn stepforge(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stepforge"));
    cmd.args(args).env("STEPFORGE_LOG", "warn");
    for key in ["STEPFORGE_CONFIG", "STEPFORGE_SEED", "STEPFORGE_JOBS", "STEPFORGE_OUT", "STEPFORGE_MIN_VALID_DAYS"] {
        cmd.env_remove(key);
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn write_raw(dir: &Path, subject: &str, seed: u64) {
    let segs = [
        GaitSegment::rest(120.0, 0.01),
        GaitSegment::walk(180.0, 1.8, 0.5, 0.02),
        GaitSegment::rest(60.0, 0.01),
    ];
    let gait = gen_gait(&segs, 80.0, seed).unwrap();
    write_raw_recording(&gait.recording, &dir.join(format!("{subject}.csv.gz")), false).unwrap();
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| !n.starts_with('.'))
        .collect();
    names.sort();
    names
}

#[test]
fn steps_writes_one_file_per_subject_and_reuses_cache() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir(&raw).unwrap();
    write_raw(&raw, "A1", 1);
    write_raw(&raw, "B2", 2);
    let out = dir.path().join("out");
    let first = stepforge(&["steps", &s(&raw), "--out", &s(&out)], &[]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(files(&out), vec!["A1.minutes.csv", "B2.minutes.csv"]);
    let minutes = read_minute_file(&out.join("A1.minutes.csv")).unwrap();
    assert_eq!(minutes.len(), 6);
    assert_eq!(minutes[0].steps.len(), 4);
    let walking: f64 = minutes.iter().map(|m| m.steps["peak_original"]).sum();
    assert!((walking - 324.0).abs() <= 0.1 * 324.0, "{walking}");
    assert!(out.join(".cache").join("A1.sfg").exists());

    let before = std::fs::read(out.join("A1.minutes.csv")).unwrap();
    let second = stepforge(&["steps", &s(&raw), "--out", &s(&out)], &[]);
    assert!(second.status.success());
    assert_eq!(std::fs::read(out.join("A1.minutes.csv")).unwrap(), before);
    let fresh = dir.path().join("fresh");
    let third = stepforge(&["steps", &s(&raw), "--out", &s(&fresh), "--no-cache"], &[]);
    assert!(third.status.success());
    assert_eq!(std::fs::read(fresh.join("A1.minutes.csv")).unwrap(), before);
    assert!(!fresh.join(".cache").exists());
}

#[test]
fn steps_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir(&raw).unwrap();
    let empty = stepforge(&["steps", &s(&raw), "--out", &s(&dir.path().join("o"))], &[]);
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&empty.stderr).contains("no subjects"));

    write_raw(&raw, "good", 3);
    std::fs::write(raw.join("bad.csv"), "x,y,z\n0,0,1\n0,zero,1\n").unwrap();
    let partial = stepforge(&["steps", &s(&raw), "--out", &s(&dir.path().join("p"))], &[]);
    assert_eq!(partial.status.code(), Some(1));
    assert!(dir.path().join("p").join("good.minutes.csv").exists());

    let none = stepforge(&["steps", &s(&raw), "--out", &s(&dir.path().join("n")), "--set", "detectors="], &[]);
    assert_eq!(none.status.code(), Some(2));
    let bad_key = stepforge(&["steps", &s(&raw), "--out", &s(&dir.path().join("n")), "--set", "nope=1"], &[]);
    assert_eq!(bad_key.status.code(), Some(2));
}

fn simulate(dir: &Path, subjects: &str) -> std::path::PathBuf {
    let sim = dir.join("sim");
    let out = stepforge(&["simulate", "--subjects", subjects, "--days", "7", "--seed", "3", "--out", &s(&sim)], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    sim
}

#[test]
fn analyze_outputs_and_sensitivity_suffix() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "150");
    let minutes = s(&sim.join("minutes"));
    let covs = s(&sim.join("covariates.csv"));
    let morts = s(&sim.join("mortality.csv"));
    let fast = ["--set", "cv_repeats=2", "--set", "age_range=40,85"];

    let out = dir.path().join("full");
    let mut args = vec!["analyze", &minutes, "--covariates", &covs, "--mortality", &morts, "--out"];
    let out_s = s(&out);
    args.push(&out_s);
    args.extend(fast);
    let r = stepforge(&args, &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        files(&out),
        vec![
            "fig1_curves.csv",
            "fig2_correlations.csv",
            "join_report.csv",
            "subject_summaries.csv",
            "table3_means.csv",
            "table3_wave_differences.csv",
            "table4_models.csv",
            "table5_hazard_ratios.csv",
            "univariate_concordance.csv",
            "unknown_transitions.csv",
            "validity_report.csv",
        ]
    );
    let summaries = stepforge::ingest::read_table(&out.join("subject_summaries.csv")).unwrap();
    let validity = stepforge::ingest::read_table(&out.join("validity_report.csv")).unwrap();
    assert_eq!(summaries.rows.len(), 150);
    assert_eq!(validity.rows.len(), 150);
    let models = stepforge::ingest::read_table(&out.join("table4_models.csv")).unwrap();
    assert_eq!(models.rows.len(), 4);
    let hrs = stepforge::ingest::read_table(&out.join("table5_hazard_ratios.csv")).unwrap();
    assert_eq!(hrs.rows.len(), 4);
    let corr = stepforge::ingest::read_table(&out.join("fig2_correlations.csv")).unwrap();
    let n_vars = summaries.columns.len() - 3;
    assert_eq!(corr.rows.len(), n_vars * n_vars);

    let partial = dir.path().join("partial");
    let mut args = vec!["analyze", &minutes, "--covariates", &covs, "--out"];
    let partial_s = s(&partial);
    args.push(&partial_s);
    args.extend(fast);
    let r = stepforge(&args, &[("STEPFORGE_MIN_VALID_DAYS", "1")]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let names = files(&partial);
    assert!(names.contains(&"subject_summaries_min1days.csv".to_string()), "{names:?}");
    assert!(names.iter().all(|n| n.ends_with("_min1days.csv")));
    assert!(!names.iter().any(|n| n.starts_with("table4") || n.starts_with("table5")));
}

#[test]
fn configuration_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "30");
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# sensitivity\nmin_valid_days = 2\n").unwrap();
    let run = |out: &str, set: Option<&str>, env: &[(&str, &str)]| {
        let out = dir.path().join(out);
        let mut args = vec![
            "analyze".to_string(),
            s(&sim.join("minutes")),
            "--covariates".into(),
            s(&sim.join("covariates.csv")),
            "--config".into(),
            s(&conf),
            "--out".into(),
            s(&out),
        ];
        if let Some(kv) = set {
            args.push("--set".into());
            args.push(kv.into());
        }
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let r = stepforge(&args, env);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        files(&out)
    };
    assert!(run("file", None, &[])[0].ends_with("_min2days.csv"));
    assert!(run("env", None, &[("STEPFORGE_MIN_VALID_DAYS", "1")])[0].ends_with("_min1days.csv"));
    assert!(run("set", Some("min_valid_days=4"), &[("STEPFORGE_MIN_VALID_DAYS", "1")])[0].ends_with("_min4days.csv"));
}

#[test]
fn bench_requires_detectors() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let none = stepforge(&["bench", "--detectors", "", "--out", &out], &[]);
    assert_eq!(none.status.code(), Some(2));
    let ok = stepforge(
        &["bench", "--subjects", "1", "--days", "1", "--rate", "40", "--detectors", "peak_original,spectral", "--out", &out],
        &[],
    );
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let t = stepforge::ingest::read_table(&dir.path().join("bench_timing.csv")).unwrap();
    let names: Vec<&str> = t.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, vec!["peak_original", "spectral"]);
}
