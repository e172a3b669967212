//! Minute files, covariates and mortality to descriptive and survival tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use stepforge::ingest::{
    fmt_f64, fmt_opt, import_external_steps, read_covariates, read_minute_file, read_mortality, subject_summary_table,
    write_table, ExternalStepSeries, Table,
};
use stepforge::model::{AnalysisConfig, DaySummary, MinuteDataset, SubjectCovariates, SubjectSummary};
use stepforge::stats::{
    between_wave_percent_diff, correlation_matrix, local_weighted_smooth, percent_change_by_age, weighted_mean_se,
    weighted_means_by_age, weighted_sd, SurveyDesign,
};
use stepforge::survival::{
    assemble_dataset, hazard_ratio_table, model_suite, univariate_concordance, CvOptions, JoinReport, PredictorBlock,
};
use stepforge::validity::{summarize_dataset, unknown_bout_transition_matrix, validity_report, TransitionMatrix, VAR_MIMS};

use crate::config::RunConfig;
use crate::{list_inputs, output_name, Outcome};

/// Default number of valid days; other values mark a sensitivity run.
const PRIMARY_MIN_VALID_DAYS: u32 = 3;

/// Age groups of the descriptive means table: label and inclusive lower bound.
pub const AGE_GROUPS: [(&str, f64); 2] = [("18+", 18.0), ("50+", 50.0)];

/// Label for subjects whose covariate row has no wave.
const NO_WAVE: &str = "NA";

#[derive(Debug, Clone)]
pub struct AnalyzeArgs {
    pub minute_dir: PathBuf,
    pub covariates: PathBuf,
    pub mortality: Option<PathBuf>,
    /// Externally computed step series as `(detector name, path)`.
    pub imports: Vec<(String, PathBuf)>,
    pub out: PathBuf,
}

struct SubjectData {
    days: Vec<DaySummary>,
    summary: SubjectSummary,
    transitions: TransitionMatrix,
}

fn is_minute_file(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".minutes.csv") || n.ends_with(".minutes.csv.gz"))
}

fn load_subject(path: &Path, imports: &[ExternalStepSeries], cfg: &AnalysisConfig) -> Result<SubjectData> {
    let mut records = read_minute_file(path)?;
    let ids: BTreeSet<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
    if ids.len() != 1 {
        bail!("expected one subject per file, found {}", ids.len());
    }
    for series in imports {
        let n = series.merge_into(&mut records)?;
        if n == 0 {
            log::warn!("{}: no minutes matched imported series {}", path.display(), series.detector_name);
        }
    }
    let transitions = unknown_bout_transition_matrix(&records);
    let (days, mut subjects) = summarize_dataset(&MinuteDataset::new(records)?, cfg);
    let summary = subjects.pop().context("no minutes")?;
    Ok(SubjectData {
        days,
        summary,
        transitions,
    })
}

/// Included subjects paired with their covariate rows.
fn joined<'a>(
    subjects: &'a [SubjectSummary],
    covs: &'a BTreeMap<&str, &SubjectCovariates>,
) -> Vec<(&'a SubjectSummary, &'a SubjectCovariates)> {
    subjects
        .iter()
        .filter(|s| s.included)
        .filter_map(|s| covs.get(s.subject_id.as_str()).map(|&c| (s, c)))
        .collect()
}

fn variables(subjects: &[SubjectSummary]) -> Vec<String> {
    let set: BTreeSet<&String> = subjects.iter().flat_map(|s| s.means.keys()).collect();
    set.into_iter().cloned().collect()
}

fn design_of<'a>(strata: &'a [String], psus: &'a [String]) -> Option<SurveyDesign<'a>> {
    let complete = strata.iter().chain(psus).all(|s| !s.is_empty());
    complete.then_some(SurveyDesign { strata, psus })
}

struct Group {
    values: Vec<f64>,
    weights: Vec<f64>,
    strata: Vec<String>,
    psus: Vec<String>,
}

fn collect_group<'a>(rows: impl Iterator<Item = (&'a SubjectSummary, &'a SubjectCovariates)>, var: &str) -> Group {
    let mut g = Group {
        values: Vec::new(),
        weights: Vec::new(),
        strata: Vec::new(),
        psus: Vec::new(),
    };
    for (s, c) in rows {
        if let Some(&v) = s.means.get(var) {
            g.values.push(v);
            g.weights.push(c.survey_weight);
            g.strata.push(c.stratum_id.clone());
            g.psus.push(c.psu_id.clone());
        }
    }
    g
}

/// Weighted mean, SD and SE by wave and age group, plus between-wave
/// percent differences of the means.
fn means_tables(rows: &[(&SubjectSummary, &SubjectCovariates)], vars: &[String]) -> (Table, Table) {
    let wave_of = |c: &SubjectCovariates| c.wave.clone().unwrap_or_else(|| NO_WAVE.to_string());
    let waves: BTreeSet<String> = rows.iter().map(|(_, c)| wave_of(c)).collect();
    let mut means = Table::new(["variable", "wave", "age_group", "n", "mean", "sd", "se"]);
    let mut diffs = Table::new(["variable", "age_group", "wave_a", "wave_b", "mean_a", "mean_b", "percent_diff"]);
    for var in vars {
        for (group, lower) in AGE_GROUPS {
            let mut by_wave: BTreeMap<&str, f64> = BTreeMap::new();
            for wave in &waves {
                let g = collect_group(
                    rows.iter().copied().filter(|(_, c)| c.age_years >= lower && &wave_of(c) == wave),
                    var,
                );
                if g.values.is_empty() {
                    continue;
                }
                let Ok(est) = weighted_mean_se(&g.values, &g.weights, design_of(&g.strata, &g.psus)) else {
                    continue;
                };
                let sd = weighted_sd(&g.values, &g.weights).unwrap_or(f64::NAN);
                means.push(vec![
                    var.clone(),
                    wave.clone(),
                    group.to_string(),
                    g.values.len().to_string(),
                    fmt_f64(est.mean),
                    fmt_f64(sd),
                    fmt_f64(est.se),
                ]);
                by_wave.insert(wave, est.mean);
            }
            let present: Vec<(&&str, &f64)> = by_wave.iter().collect();
            for (i, (wa, ma)) in present.iter().enumerate() {
                for (wb, mb) in &present[i + 1..] {
                    let diff = between_wave_percent_diff(**ma, **mb).ok();
                    diffs.push(vec![
                        var.clone(),
                        group.to_string(),
                        wa.to_string(),
                        wb.to_string(),
                        fmt_f64(**ma),
                        fmt_f64(**mb),
                        fmt_opt(diff),
                    ]);
                }
            }
        }
    }
    (means, diffs)
}

/// Weighted means by year of age with the smoothed curve and year-on-year
/// percent change of the smoothed values.
fn curves_table(rows: &[(&SubjectSummary, &SubjectCovariates)], vars: &[String], span: f64) -> Table {
    let mut t = Table::new([
        "variable",
        "age",
        "n",
        "mean",
        "se",
        "smoothed",
        "smoothed_se",
        "lo",
        "hi",
        "percent_change",
    ]);
    for var in vars {
        let mut ages = Vec::new();
        let mut values = Vec::new();
        let mut weights = Vec::new();
        let mut strata = Vec::new();
        let mut psus = Vec::new();
        for (s, c) in rows {
            if let Some(&v) = s.means.get(var) {
                ages.push(c.age_years);
                values.push(v);
                weights.push(c.survey_weight);
                strata.push(c.stratum_id.clone());
                psus.push(c.psu_id.clone());
            }
        }
        let points = match weighted_means_by_age(&ages, &values, &weights, design_of(&strata, &psus)) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("age curve for {var} skipped: {e}");
                continue;
            }
        };
        let xs: Vec<f64> = points.iter().map(|p| p.age).collect();
        let ms: Vec<f64> = points.iter().map(|p| p.mean).collect();
        let ss: Vec<f64> = points.iter().map(|p| p.se).collect();
        let curve = match local_weighted_smooth(&xs, &ms, &ss, span) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("age curve for {var} skipped: {e}");
                continue;
            }
        };
        let change: BTreeMap<i64, f64> = percent_change_by_age(&curve)
            .map(|v| v.into_iter().collect())
            .unwrap_or_default();
        let observed: BTreeMap<i64, _> = points.iter().map(|p| (p.age as i64, p)).collect();
        for c in &curve {
            let obs = observed.get(&c.age);
            t.push(vec![
                var.clone(),
                c.age.to_string(),
                obs.map(|p| p.n).unwrap_or(0).to_string(),
                fmt_opt(obs.map(|p| p.mean)),
                fmt_opt(obs.map(|p| p.se)),
                fmt_f64(c.estimate),
                fmt_f64(c.se),
                fmt_f64(c.lo),
                fmt_f64(c.hi),
                fmt_opt(change.get(&c.age).copied()),
            ]);
        }
    }
    t
}

fn correlations_table(subjects: &[SubjectSummary], vars: &[String]) -> Table {
    let included: Vec<SubjectSummary> = subjects.iter().filter(|s| s.included).cloned().collect();
    let m = correlation_matrix(&included, vars);
    let mut t = Table::new(["variable_a", "variable_b", "n", "spearman", "pearson"]);
    for (i, a) in m.variables.iter().enumerate() {
        for (j, b) in m.variables.iter().enumerate() {
            let cell = &m.cells[i][j];
            t.push(vec![
                a.clone(),
                b.clone(),
                cell.n.to_string(),
                fmt_opt(cell.spearman),
                fmt_opt(cell.pearson),
            ]);
        }
    }
    t
}

fn join_table(report: &JoinReport, covariates_without_minutes: usize) -> Table {
    let mut t = Table::new(["stage", "subjects"]);
    for (stage, n) in [
        ("covariates_without_minutes", covariates_without_minutes),
        ("not_included", report.not_included),
        ("no_covariates", report.no_covariates),
        ("outside_age_range", report.outside_age_range),
        ("incomplete_covariates", report.incomplete_covariates),
        ("no_mortality", report.no_mortality),
        ("missing_activity", report.missing_activity),
        ("analysed", report.analysed),
    ] {
        t.push(vec![stage.to_string(), n.to_string()]);
    }
    t
}

struct Writer<'a> {
    out: &'a Path,
    suffix: String,
}

impl Writer<'_> {
    fn write(&self, stem: &str, table: &Table) -> Result<()> {
        let path = self.out.join(output_name(stem, &self.suffix));
        write_table(table, &path)?;
        log::info!("wrote {} ({} rows)", path.display(), table.rows.len());
        Ok(())
    }
}

fn survival_tables(
    w: &Writer,
    subjects: &[SubjectSummary],
    covariates: &[SubjectCovariates],
    mortality_path: &Path,
    covariates_without_minutes: usize,
    cfg: &AnalysisConfig,
) -> Result<()> {
    let mortality = read_mortality(mortality_path)?;
    if !mortality.unlinked.is_empty() {
        log::info!("{} subjects have no mortality linkage", mortality.unlinked.len());
    }
    let included: Vec<&SubjectSummary> = subjects.iter().filter(|s| s.included).collect();
    let vars = variables(subjects);
    let steps_vars: Vec<String> = vars.iter().filter(|v| v.starts_with("steps_")).cloned().collect();
    let mut activity = steps_vars.clone();
    if vars.iter().any(|v| v == VAR_MIMS) {
        activity.push(VAR_MIMS.to_string());
    }
    if included.is_empty() || activity.is_empty() {
        log::warn!("survival tables skipped: no included subjects with activity variables");
        return Ok(());
    }
    let (data, design, report) = match assemble_dataset(subjects, covariates, &mortality.records, &activity, cfg) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("survival tables skipped: {e}");
            return Ok(());
        }
    };
    w.write("join_report", &join_table(&report, covariates_without_minutes))?;
    log::info!("mortality sample: {} subjects, {} deaths", data.len(), data.n_events());

    let options = CvOptions::from(cfg);
    let mut blocks: Vec<PredictorBlock> = design.blocks.clone();
    blocks.extend(activity.iter().map(|v| PredictorBlock {
        name: v.clone(),
        columns: vec![v.clone()],
    }));
    let univariate = univariate_concordance(&data, &blocks, &options)?;
    let mut t = Table::new(["predictor", "kind", "cvc"]);
    for row in &univariate {
        let kind = if activity.contains(&row.predictor) { "activity" } else { "traditional" };
        t.push(vec![row.predictor.clone(), kind.to_string(), fmt_f64(row.cvc)]);
    }
    w.write("univariate_concordance", &t)?;

    if steps_vars.is_empty() {
        log::warn!("model and hazard ratio tables skipped: no step columns");
        return Ok(());
    }
    let best = univariate
        .iter()
        .filter(|r| steps_vars.contains(&r.predictor))
        .fold(None::<&stepforge::survival::UnivariateRow>, |best, r| match best {
            Some(b) if b.cvc >= r.cvc => Some(b),
            _ => Some(r),
        })
        .map(|r| r.predictor.clone())
        .unwrap_or_else(|| steps_vars[0].clone());
    if activity.iter().any(|v| v == VAR_MIMS) {
        let suite = model_suite(&data, &design.names, &best, VAR_MIMS, cfg)?;
        let mut t = Table::new([
            "model",
            "n_columns",
            "cvc",
            "steps_variable",
            "steps_hr",
            "steps_hr_lo",
            "steps_hr_hi",
            "steps_p",
        ]);
        for row in &suite.rows {
            t.push(vec![
                row.model.clone(),
                row.columns.len().to_string(),
                fmt_f64(row.cvc),
                suite.steps_variable.clone(),
                fmt_opt(row.steps_hr.map(|h| h.hr)),
                fmt_opt(row.steps_hr.map(|h| h.lo)),
                fmt_opt(row.steps_hr.map(|h| h.hi)),
                fmt_opt(row.steps_p),
            ]);
        }
        w.write("table4_models", &t)?;
    } else {
        log::warn!("model table skipped: no MIMS column");
    }

    let hrs = hazard_ratio_table(&data, &design.names, &steps_vars, cfg)?;
    let mut t = Table::new([
        "variable",
        "increment",
        "hr",
        "hr_lo",
        "hr_hi",
        "sd",
        "hr_per_sd",
        "hr_per_sd_lo",
        "hr_per_sd_hi",
    ]);
    for row in &hrs {
        t.push(vec![
            row.variable.clone(),
            fmt_f64(cfg.hr_step_increment),
            fmt_f64(row.raw.hr),
            fmt_f64(row.raw.lo),
            fmt_f64(row.raw.hi),
            fmt_f64(row.sd),
            fmt_f64(row.scaled.hr),
            fmt_f64(row.scaled.lo),
            fmt_f64(row.scaled.hi),
        ]);
    }
    w.write("table5_hazard_ratios", &t)
}

pub fn run(args: &AnalyzeArgs, run_cfg: &RunConfig) -> Result<Outcome> {
    run_cfg.validate()?;
    let cfg = &run_cfg.analysis;
    let inputs = list_inputs(&args.minute_dir, is_minute_file)?;
    if inputs.is_empty() {
        bail!("no subjects: {} has no minute files", args.minute_dir.display());
    }
    let imports: Vec<ExternalStepSeries> = args
        .imports
        .iter()
        .map(|(name, path)| import_external_steps(path, name).with_context(|| format!("importing {}", path.display())))
        .collect::<Result<_>>()?;
    let covariates = read_covariates(&args.covariates)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    log::info!("analyze: {} minute files, {} covariate rows", inputs.len(), covariates.len());

    let loaded: Vec<(PathBuf, Result<SubjectData>)> = inputs
        .par_iter()
        .map(|p| (p.clone(), load_subject(p, &imports, cfg)))
        .collect();
    let mut outcome = Outcome::default();
    let mut per_subject: BTreeMap<String, SubjectData> = BTreeMap::new();
    for (path, r) in loaded {
        match r {
            Ok(d) => {
                let id = d.summary.subject_id.clone();
                if per_subject.contains_key(&id) {
                    outcome.failures.push(format!("{}: duplicate subject {id}", path.display()));
                    continue;
                }
                per_subject.insert(id, d);
                outcome.succeeded += 1;
            }
            Err(e) => {
                log::error!("{}: {e:#}", path.display());
                outcome.failures.push(format!("{}: {e:#}", path.display()));
            }
        }
    }
    if per_subject.is_empty() {
        bail!("no subjects could be read from {}", args.minute_dir.display());
    }

    let mut days = Vec::new();
    let mut subjects = Vec::new();
    let mut transitions = TransitionMatrix::default();
    for d in per_subject.into_values() {
        days.extend(d.days);
        subjects.push(d.summary);
        transitions.merge(&d.transitions);
    }

    let suffix = if cfg.min_valid_days == PRIMARY_MIN_VALID_DAYS {
        String::new()
    } else {
        format!("_min{}days", cfg.min_valid_days)
    };
    let w = Writer { out: &args.out, suffix };
    w.write("validity_report", &validity_report(&days, &subjects, cfg))?;
    w.write("subject_summaries", &subject_summary_table(&subjects))?;
    w.write("unknown_transitions", &transitions.to_table())?;

    let cov_map: BTreeMap<&str, &SubjectCovariates> = covariates.iter().map(|c| (c.subject_id.as_str(), c)).collect();
    let with_minutes: BTreeSet<&str> = subjects.iter().map(|s| s.subject_id.as_str()).collect();
    let covariates_without_minutes = cov_map.keys().filter(|k| !with_minutes.contains(*k)).count();
    let missing_covariates = subjects.iter().filter(|s| !cov_map.contains_key(s.subject_id.as_str())).count();
    if missing_covariates > 0 {
        log::warn!("{missing_covariates} subjects with minute data have no covariate row");
    }
    let rows = joined(&subjects, &cov_map);
    let vars = variables(&subjects);
    let (means, diffs) = means_tables(&rows, &vars);
    w.write("table3_means", &means)?;
    w.write("table3_wave_differences", &diffs)?;
    w.write("fig1_curves", &curves_table(&rows, &vars, cfg.loess_span))?;
    w.write("fig2_correlations", &correlations_table(&subjects, &vars))?;

    match &args.mortality {
        Some(path) => survival_tables(&w, &subjects, &covariates, path, covariates_without_minutes, cfg)?,
        None => log::warn!("no mortality file given; survival tables skipped"),
    }
    Ok(outcome)
}
