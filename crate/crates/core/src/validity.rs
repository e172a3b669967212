//! Wear imputation, valid minute/day/subject rules, day totals and subject
//! means, and the unknown-bout transition matrix.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::dsp::CompensatedSum;
use crate::ingest::Table;
use crate::model::{AnalysisConfig, DaySummary, MinuteDataset, MinuteRecord, SubjectSummary, WearState};

pub const VAR_MIMS: &str = "mims";
pub const VAR_AC: &str = "ac";
pub const VAR_LOG10_MIMS: &str = "log10_mims";
pub const VAR_LOG10_AC: &str = "log10_ac";

/// Summary variable name for a detector's steps.
pub fn steps_var(detector: &str) -> String {
    format!("steps_{detector}")
}

/// A minute with its wear state kept and the effective-wear decision attached.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedMinute {
    pub record: MinuteRecord,
    pub effective_wear: bool,
}

/// Unknown minutes count as wear; the original state is preserved.
pub fn impute_unknown_as_wear(minutes: Vec<MinuteRecord>) -> Vec<ImputedMinute> {
    minutes
        .into_iter()
        .map(|record| ImputedMinute {
            effective_wear: record.wear.is_effective_wear(),
            record,
        })
        .collect()
}

/// Row/column order of the transition matrix.
pub const TRANSITION_ORDER: [WearState; 4] = [
    WearState::Unknown,
    WearState::NonWear,
    WearState::SleepWear,
    WearState::WakeWear,
];

fn state_index(s: WearState) -> usize {
    TRANSITION_ORDER.iter().position(|&t| t == s).expect("all states ordered")
}

/// Joint proportions of (preceding, following) states around unknown bouts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionMatrix {
    /// `counts[preceding][following]`.
    pub counts: [[u64; 4]; 4],
    pub n_bouts: u64,
    /// All maximal unknown bouts, including those at day edges.
    pub all_bouts: u64,
    /// Mean length of all maximal unknown bouts.
    pub mean_bout_minutes: f64,
}

impl TransitionMatrix {
    /// Pools counts and bout lengths with another matrix.
    pub fn merge(&mut self, other: &TransitionMatrix) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
        let total = self.all_bouts + other.all_bouts;
        if total > 0 {
            self.mean_bout_minutes = (self.mean_bout_minutes * self.all_bouts as f64
                + other.mean_bout_minutes * other.all_bouts as f64)
                / total as f64;
        }
        self.n_bouts += other.n_bouts;
        self.all_bouts = total;
    }

    pub fn proportion(&self, preceding: WearState, following: WearState) -> f64 {
        if self.n_bouts == 0 {
            return 0.0;
        }
        self.counts[state_index(preceding)][state_index(following)] as f64 / self.n_bouts as f64
    }

    /// Long-format table with one row per (preceding, following) cell.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["preceding", "following", "n_bouts", "proportion"]);
        for &p in &TRANSITION_ORDER {
            for &f in &TRANSITION_ORDER {
                t.push(vec![
                    p.label().to_string(),
                    f.label().to_string(),
                    self.counts[state_index(p)][state_index(f)].to_string(),
                    crate::ingest::fmt_f64(self.proportion(p, f)),
                ]);
            }
        }
        t
    }
}

/// Bouts are taken within each subject-day in minute order; bouts touching
/// the first or last minute of a day have no neighbour and are skipped.
pub fn unknown_bout_transition_matrix(minutes: &[MinuteRecord]) -> TransitionMatrix {
    let mut groups: BTreeMap<(&str, u32), Vec<&MinuteRecord>> = BTreeMap::new();
    for m in minutes {
        groups.entry((m.subject_id.as_str(), m.day_index)).or_default().push(m);
    }
    let mut out = TransitionMatrix::default();
    let (mut bouts_all, mut bout_minutes) = (0u64, 0u64);
    for day in groups.values_mut() {
        day.sort_by_key(|m| m.minute_of_day);
        let mut i = 0;
        while i < day.len() {
            if day[i].wear != WearState::Unknown {
                i += 1;
                continue;
            }
            let start = i;
            while i < day.len() && day[i].wear == WearState::Unknown {
                i += 1;
            }
            bouts_all += 1;
            bout_minutes += (i - start) as u64;
            if start == 0 || i == day.len() {
                continue;
            }
            let (p, f) = (day[start - 1].wear, day[i].wear);
            out.counts[state_index(p)][state_index(f)] += 1;
            out.n_bouts += 1;
        }
    }
    out.all_bouts = bouts_all;
    if bouts_all > 0 {
        out.mean_bout_minutes = bout_minutes as f64 / bouts_all as f64;
    }
    out
}

/// No quality flag and classified as wake, sleep or unknown.
pub fn is_valid_minute(m: &MinuteRecord) -> bool {
    !m.quality_flagged && m.wear.is_effective_wear()
}

/// Day totals and the three-condition validity decision for one subject-day.
pub fn is_valid_day(day: &[MinuteRecord], cfg: &AnalysisConfig) -> DaySummary {
    let (subject_id, day_index) = day
        .first()
        .map(|m| (m.subject_id.clone(), m.day_index))
        .unwrap_or_default();
    let mut n_valid = 0u32;
    let mut n_wake = 0u32;
    let mut n_nonzero = 0u32;
    let mut sums: BTreeMap<String, CompensatedSum> = BTreeMap::new();
    let detectors: BTreeSet<&String> = day.iter().flat_map(|m| m.steps.keys()).collect();
    let has_ac = day.iter().any(|m| m.ac.is_some());
    for name in &detectors {
        sums.insert(steps_var(name), CompensatedSum::new());
    }
    for v in [VAR_MIMS, VAR_LOG10_MIMS] {
        sums.insert(v.to_string(), CompensatedSum::new());
    }
    if has_ac {
        for v in [VAR_AC, VAR_LOG10_AC] {
            sums.insert(v.to_string(), CompensatedSum::new());
        }
    }
    let mut add = |key: &str, v: f64| sums.get_mut(key).expect("initialised").add(v);
    let mut step_key = String::new();
    for m in day {
        let valid = is_valid_minute(m);
        if m.wear == WearState::WakeWear {
            n_wake += 1;
        }
        if m.has_nonzero_mims() && (valid || !cfg.nonzero_mims_among_valid_only) {
            n_nonzero += 1;
        }
        if !valid {
            continue;
        }
        n_valid += 1;
        add(VAR_MIMS, m.mims_value());
        add(VAR_LOG10_MIMS, m.log10_mims());
        if has_ac {
            add(VAR_AC, m.ac.unwrap_or(0) as f64);
            add(VAR_LOG10_AC, m.log10_ac().unwrap_or(0.0));
        }
        for (name, &steps) in &m.steps {
            step_key.clear();
            step_key.push_str("steps_");
            step_key.push_str(name);
            add(&step_key, steps);
        }
    }
    let valid = n_valid >= cfg.min_valid_minutes && n_wake >= cfg.min_wake_minutes && n_nonzero >= cfg.min_nonzero_mims_minutes;
    DaySummary {
        subject_id,
        day_index,
        n_valid_minutes: n_valid,
        n_wake_minutes: n_wake,
        n_nonzero_mims_minutes: n_nonzero,
        valid,
        totals: sums.into_iter().map(|(k, s)| (k, s.value())).collect(),
    }
}

/// Means of day totals over valid days. The summation order is fixed by
/// sorting values, so the result does not depend on the order of days.
pub fn summarize_subject(days: &[DaySummary], cfg: &AnalysisConfig) -> SubjectSummary {
    let subject_id = days.first().map(|d| d.subject_id.clone()).unwrap_or_default();
    let valid: Vec<&DaySummary> = days.iter().filter(|d| d.valid).collect();
    let n = valid.len() as u32;
    let mut means = BTreeMap::new();
    if n > 0 {
        let vars: BTreeSet<&String> = valid.iter().flat_map(|d| d.totals.keys()).collect();
        for var in vars {
            let mut values: Vec<f64> = valid.iter().map(|d| d.totals.get(var).copied().unwrap_or(0.0)).collect();
            values.sort_by(f64::total_cmp);
            let mut s = CompensatedSum::new();
            values.iter().for_each(|&v| s.add(v));
            means.insert(var.clone(), s.value() / n as f64);
        }
    }
    SubjectSummary {
        subject_id,
        n_valid_days: n,
        included: n >= cfg.min_valid_days,
        means,
    }
}

/// Day summaries and subject summaries for a whole dataset, in subject order.
pub fn summarize_dataset(data: &MinuteDataset, cfg: &AnalysisConfig) -> (Vec<DaySummary>, Vec<SubjectSummary>) {
    let groups: Vec<(&str, Vec<&MinuteRecord>)> = data.by_subject().into_iter().collect();
    let per_subject: Vec<(Vec<DaySummary>, SubjectSummary)> = groups
        .par_iter()
        .map(|(_, minutes)| {
            let mut days = Vec::new();
            let mut i = 0;
            while i < minutes.len() {
                let d = minutes[i].day_index;
                let mut day = Vec::new();
                while i < minutes.len() && minutes[i].day_index == d {
                    day.push(minutes[i].clone());
                    i += 1;
                }
                days.push(is_valid_day(&day, cfg));
            }
            let summary = summarize_subject(&days, cfg);
            (days, summary)
        })
        .collect();
    let mut days = Vec::new();
    let mut subjects = Vec::new();
    for (d, s) in per_subject {
        days.extend(d);
        subjects.push(s);
    }
    (days, subjects)
}

/// Why a subject is excluded, or `None` when included.
pub fn exclusion_reason(s: &SubjectSummary, cfg: &AnalysisConfig) -> Option<String> {
    (!s.included).then(|| format!("{} valid days < {}", s.n_valid_days, cfg.min_valid_days))
}

/// Per-subject table: subject, n_days, n_valid_days, included, exclusion reason.
pub fn validity_report(days: &[DaySummary], subjects: &[SubjectSummary], cfg: &AnalysisConfig) -> Table {
    let mut n_days: BTreeMap<&str, usize> = BTreeMap::new();
    for d in days {
        *n_days.entry(d.subject_id.as_str()).or_default() += 1;
    }
    let mut t = Table::new(["subject", "n_days", "n_valid_days", "included", "exclusion_reason"]);
    for s in subjects {
        t.push(vec![
            s.subject_id.clone(),
            n_days.get(s.subject_id.as_str()).copied().unwrap_or(0).to_string(),
            s.n_valid_days.to_string(),
            u8::from(s.included).to_string(),
            exclusion_reason(s, cfg).unwrap_or_default(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn minute(m: u16, wear: WearState, flag: bool, mims: f64) -> MinuteRecord {
        MinuteRecord::new("s", 1, m, wear, flag, mims).unwrap()
    }

    fn day_with(valid: u16, wake: u16) -> Vec<MinuteRecord> {
        (0..1440)
            .map(|m| {
                let wear = if m < wake { WearState::WakeWear } else { WearState::SleepWear };
                minute(m, wear, m >= valid, 1.0)
            })
            .collect()
    }

    #[test]
    fn imputation_flags() {
        let out = impute_unknown_as_wear(vec![
            minute(0, WearState::Unknown, false, 0.0),
            minute(1, WearState::NonWear, false, 0.0),
            minute(2, WearState::WakeWear, false, 0.0),
        ]);
        assert_eq!(out.iter().map(|m| m.effective_wear).collect::<Vec<_>>(), vec![true, false, true]);
        assert_eq!(out[0].record.wear, WearState::Unknown);
    }

    #[test]
    fn valid_minute_rules() {
        assert!(!is_valid_minute(&minute(0, WearState::WakeWear, true, 1.0)));
        assert!(is_valid_minute(&minute(0, WearState::Unknown, false, 1.0)));
        assert!(!is_valid_minute(&minute(0, WearState::NonWear, false, 1.0)));
    }

    #[test]
    fn day_boundaries() {
        let cfg = AnalysisConfig::default();
        assert!(is_valid_day(&day_with(1440, 1440), &cfg).valid);
        assert!(!is_valid_day(&day_with(1367, 600), &cfg).valid);
        assert!(is_valid_day(&day_with(1368, 600), &cfg).valid);
        assert!(!is_valid_day(&day_with(1368, 419), &cfg).valid);
        assert!(is_valid_day(&day_with(1368, 420), &cfg).valid);
    }

    #[test]
    fn sentinel_never_counts_as_activity() {
        let cfg = AnalysisConfig::default();
        let day: Vec<_> = (0..1440).map(|m| minute(m, WearState::WakeWear, false, -0.01)).collect();
        let s = is_valid_day(&day, &cfg);
        assert_eq!(s.n_nonzero_mims_minutes, 0);
        assert!(!s.valid);
        assert_eq!(s.totals[VAR_MIMS], 0.0);
    }

    #[test]
    fn totals_use_valid_minutes_only() {
        let cfg = AnalysisConfig::default();
        let mut day = day_with(1400, 800);
        for (i, m) in day.iter_mut().enumerate() {
            m.steps.insert("spectral".into(), 2.0);
            m.ac = Some(i as u64 % 3);
        }
        let s = is_valid_day(&day, &cfg);
        assert_eq!(s.totals["steps_spectral"], 2800.0);
        assert_eq!(s.totals[VAR_MIMS], 1400.0);
        assert!((s.totals[VAR_LOG10_MIMS] - 1400.0 * 2f64.log10()).abs() < 1e-9);
        assert!(s.totals.contains_key(VAR_LOG10_AC));
    }

    fn day_summary(total: f64, valid: bool) -> DaySummary {
        DaySummary {
            subject_id: "s".into(),
            day_index: 1,
            n_valid_minutes: 0,
            n_wake_minutes: 0,
            n_nonzero_mims_minutes: 0,
            valid,
            totals: [("steps_x".to_string(), total)].into_iter().collect(),
        }
    }

    #[test]
    fn subject_means() {
        let cfg = AnalysisConfig::default();
        let days = vec![day_summary(8000.0, true), day_summary(9000.0, true), day_summary(10000.0, true), day_summary(1.0, false)];
        let s = summarize_subject(&days, &cfg);
        assert_eq!(s.means["steps_x"], 9000.0);
        assert!(s.included);
        assert!(!summarize_subject(&days[..2], &cfg).included);
        let one = AnalysisConfig { min_valid_days: 1, ..Default::default() };
        assert!(summarize_subject(&days[..1], &one).included);
        assert!(summarize_subject(&days[3..], &one).means.is_empty());
    }

    fn states(seq: &[WearState]) -> Vec<MinuteRecord> {
        seq.iter().enumerate().map(|(i, &w)| minute(i as u16, w, false, 1.0)).collect()
    }

    #[test]
    fn transition_examples() {
        use WearState::*;
        let t = unknown_bout_transition_matrix(&states(&[WakeWear, Unknown, WakeWear]));
        assert_eq!(t.proportion(WakeWear, WakeWear), 1.0);
        let t = unknown_bout_transition_matrix(&states(&[WakeWear, Unknown, SleepWear, Unknown, Unknown, WakeWear]));
        assert_eq!(t.proportion(WakeWear, SleepWear), 0.5);
        assert_eq!(t.proportion(SleepWear, WakeWear), 0.5);
        let t = unknown_bout_transition_matrix(&states(&[Unknown, WakeWear, Unknown]));
        assert_eq!(t.n_bouts, 0);
        assert_eq!(t.mean_bout_minutes, 1.0);
        let sum: f64 = TRANSITION_ORDER
            .iter()
            .flat_map(|&p| TRANSITION_ORDER.iter().map(move |&f| (p, f)))
            .map(|(p, f)| unknown_bout_transition_matrix(&states(&[SleepWear, Unknown, WakeWear, Unknown, NonWear])).proportion(p, f))
            .sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn merged_matrices_pool_counts() {
        use WearState::*;
        let a = states(&[WakeWear, Unknown, Unknown, SleepWear, Unknown]);
        let mut b = states(&[NonWear, Unknown, WakeWear, Unknown, Unknown, Unknown, WakeWear]);
        b.iter_mut().for_each(|m| m.day_index = 2);
        let mut merged = unknown_bout_transition_matrix(&a);
        merged.merge(&unknown_bout_transition_matrix(&b));
        let all: Vec<MinuteRecord> = a.into_iter().chain(b).collect();
        let whole = unknown_bout_transition_matrix(&all);
        assert_eq!(merged.counts, whole.counts);
        assert_eq!((merged.n_bouts, merged.all_bouts), (whole.n_bouts, whole.all_bouts));
        assert!((merged.mean_bout_minutes - whole.mean_bout_minutes).abs() < 1e-12);
    }

    /// Recount straight from the rule text.
    fn brute_force(day: &[MinuteRecord], cfg: &AnalysisConfig) -> bool {
        let mut valid = 0;
        let mut wake = 0;
        let mut active = 0;
        for m in day {
            let ok = !m.quality_flagged && matches!(m.wear, WearState::WakeWear | WearState::SleepWear | WearState::Unknown);
            if ok {
                valid += 1;
            }
            if m.wear == WearState::WakeWear {
                wake += 1;
            }
            if m.mims > 0.0 && (ok || !cfg.nonzero_mims_among_valid_only) {
                active += 1;
            }
        }
        valid >= cfg.min_valid_minutes && wake >= cfg.min_wake_minutes && active >= cfg.min_nonzero_mims_minutes
    }

    fn arb_day() -> impl Strategy<Value = Vec<MinuteRecord>> {
        (0.0f64..0.1, 0.0f64..0.1, 0.0f64..0.8, 0.0f64..0.5, any::<u64>()).prop_map(|(p_flag, p_nonwear, p_wake, p_zero, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..1440)
                .map(|m| {
                    let r: f64 = rng.gen();
                    let wear = if r < p_nonwear {
                        WearState::NonWear
                    } else if r < p_nonwear + p_wake {
                        WearState::WakeWear
                    } else if rng.gen_bool(0.1) {
                        WearState::Unknown
                    } else {
                        WearState::SleepWear
                    };
                    let mims = if rng.gen_bool(p_zero) { if rng.gen_bool(0.5) { 0.0 } else { -0.01 } } else { rng.gen_range(0.01..40.0) };
                    minute(m, wear, rng.gen_bool(p_flag), mims)
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force(day in arb_day(), among_valid in any::<bool>()) {
            let cfg = AnalysisConfig { nonzero_mims_among_valid_only: among_valid, ..Default::default() };
            prop_assert_eq!(is_valid_day(&day, &cfg).valid, brute_force(&day, &cfg));
        }

        #[test]
        fn raising_thresholds_never_validates(day in arb_day(), dv in 0u32..50, dw in 0u32..50, dn in 0u32..50) {
            let base = AnalysisConfig::default();
            let strict = AnalysisConfig {
                min_valid_minutes: base.min_valid_minutes + dv,
                min_wake_minutes: base.min_wake_minutes + dw,
                min_nonzero_mims_minutes: base.min_nonzero_mims_minutes + dn,
                ..Default::default()
            };
            prop_assert!(!is_valid_day(&day, &strict).valid || is_valid_day(&day, &base).valid);
        }

        #[test]
        fn means_ignore_day_order(totals in proptest::collection::vec((0.0f64..1e5, any::<bool>()), 1..10), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let cfg = AnalysisConfig::default();
            let days: Vec<_> = totals.iter().map(|&(t, v)| day_summary(t, v)).collect();
            let mut shuffled = days.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(summarize_subject(&days, &cfg), summarize_subject(&shuffled, &cfg));
        }
    }
}
