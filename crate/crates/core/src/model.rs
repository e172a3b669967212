//! Domain types shared by the whole pipeline.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};

/// Marker stored in `mims` for minutes where the summary could not be computed.
pub const MIMS_SENTINEL: f64 = -0.01;

/// Default device sampling rate.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 80.0;

pub const MINUTES_PER_DAY: u16 = 1440;

/// Raw triaxial acceleration in g.
///
/// Samples are held as `f32`: that is the resolution of the binary cache, so a
/// recording read from text and the same recording read back from the cache
/// are bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct TriaxialRecording {
    subject_id: String,
    start: NaiveDateTime,
    sample_rate_hz: f64,
    x: Vec<f32>,
    y: Vec<f32>,
    z: Vec<f32>,
}

impl TriaxialRecording {
    pub fn new(
        subject_id: impl Into<String>,
        start: NaiveDateTime,
        sample_rate_hz: f64,
        x: Vec<f32>,
        y: Vec<f32>,
        z: Vec<f32>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::invalid(
                "sample_rate_hz",
                format!("must be positive, got {sample_rate_hz}"),
            ));
        }
        if x.len() != y.len() || x.len() != z.len() {
            return Err(Error::InvalidInput(format!(
                "axis lengths differ: x={} y={} z={}",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        for (axis, values) in [("x", &x), ("y", &y), ("z", &z)] {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite sample on axis {axis} at index {i}"
                )));
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            start,
            sample_rate_hz,
            x,
            y,
            z,
        })
    }

    pub fn empty(subject_id: impl Into<String>, start: NaiveDateTime, sample_rate_hz: f64) -> Self {
        Self {
            subject_id: subject_id.into(),
            start,
            sample_rate_hz,
            x: Vec::new(),
            y: Vec::new(),
            z: Vec::new(),
        }
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn x(&self) -> &[f32] {
        &self.x
    }

    pub fn y(&self) -> &[f32] {
        &self.y
    }

    pub fn z(&self) -> &[f32] {
        &self.z
    }

    pub fn axes(&self) -> [&[f32]; 3] {
        [&self.x, &self.y, &self.z]
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Timestamp of sample `index`, truncated to whole microseconds.
    pub fn time_of(&self, index: usize) -> NaiveDateTime {
        let micros = (index as f64 / self.sample_rate_hz * 1e6).round() as i64;
        self.start + Duration::microseconds(micros)
    }

    /// Copy of samples `[from, to)` as a recording starting at sample `from`.
    pub fn slice(&self, from: usize, to: usize) -> TriaxialRecording {
        let to = to.min(self.len());
        let from = from.min(to);
        TriaxialRecording {
            subject_id: self.subject_id.clone(),
            start: self.time_of(from),
            sample_rate_hz: self.sample_rate_hz,
            x: self.x[from..to].to_vec(),
            y: self.y[from..to].to_vec(),
            z: self.z[from..to].to_vec(),
        }
    }

    /// Appends the samples of `other`; rates must agree.
    pub fn extend_from(&mut self, other: &TriaxialRecording) -> Result<()> {
        if (other.sample_rate_hz - self.sample_rate_hz).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "cannot join recordings at {} Hz and {} Hz",
                self.sample_rate_hz, other.sample_rate_hz
            )));
        }
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
        self.z.extend_from_slice(&other.z);
        Ok(())
    }

    /// Drops the first `n` samples, moving the start time accordingly.
    pub fn drain_front(&mut self, n: usize) {
        let n = n.min(self.len());
        self.start = self.time_of(n);
        self.x.drain(..n);
        self.y.drain(..n);
        self.z.drain(..n);
    }
}

/// Per-minute wear classification supplied with the minute-level data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WearState {
    WakeWear,
    SleepWear,
    NonWear,
    Unknown,
}

impl WearState {
    pub const ALL: [WearState; 4] = [
        WearState::WakeWear,
        WearState::SleepWear,
        WearState::NonWear,
        WearState::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            WearState::WakeWear => "wake",
            WearState::SleepWear => "sleep",
            WearState::NonWear => "nonwear",
            WearState::Unknown => "unknown",
        }
    }

    /// Unknown minutes count as wear.
    pub fn is_effective_wear(self) -> bool {
        !matches!(self, WearState::NonWear)
    }
}

impl fmt::Display for WearState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for WearState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "wake" | "wakewear" | "1" => Ok(WearState::WakeWear),
            "sleep" | "sleepwear" | "2" => Ok(WearState::SleepWear),
            "nonwear" | "3" => Ok(WearState::NonWear),
            "unknown" | "4" => Ok(WearState::Unknown),
            _ => Err(Error::InvalidInput(format!("unknown wear label `{s}`"))),
        }
    }
}

/// One minute of processed data for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteRecord {
    pub subject_id: String,
    pub day_index: u32,
    pub minute_of_day: u16,
    pub wear: WearState,
    pub quality_flagged: bool,
    /// MIMS units, or [`MIMS_SENTINEL`] when invalid.
    pub mims: f64,
    pub ac: Option<u64>,
    pub steps: BTreeMap<String, f64>,
}

impl MinuteRecord {
    pub fn new(
        subject_id: impl Into<String>,
        day_index: u32,
        minute_of_day: u16,
        wear: WearState,
        quality_flagged: bool,
        mims: f64,
    ) -> Result<Self> {
        if day_index < 1 {
            return Err(Error::invalid("day_index", "must be >= 1"));
        }
        if minute_of_day >= MINUTES_PER_DAY {
            return Err(Error::invalid(
                "minute_of_day",
                format!("{minute_of_day} outside [0, 1439]"),
            ));
        }
        if mims.is_nan() {
            return Err(Error::invalid("mims", "NaN"));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            day_index,
            minute_of_day,
            wear,
            quality_flagged,
            mims: normalize_mims(mims),
            ac: None,
            steps: BTreeMap::new(),
        })
    }

    pub fn key(&self) -> (&str, u32, u16) {
        (&self.subject_id, self.day_index, self.minute_of_day)
    }

    /// Strictly positive MIMS; the sentinel never qualifies.
    pub fn has_nonzero_mims(&self) -> bool {
        self.mims > 0.0
    }

    /// MIMS with the sentinel read as zero.
    pub fn mims_value(&self) -> f64 {
        self.mims.max(0.0)
    }

    pub fn log10_mims(&self) -> f64 {
        (1.0 + self.mims_value()).log10()
    }

    pub fn log10_ac(&self) -> Option<f64> {
        self.ac.map(|ac| (1.0 + ac as f64).log10())
    }
}

/// Any negative MIMS value is an invalid minute and becomes the sentinel.
pub fn normalize_mims(mims: f64) -> f64 {
    if mims < 0.0 {
        MIMS_SENTINEL
    } else {
        mims
    }
}

/// Minute records with unique `(subject, day, minute)` keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinuteDataset {
    records: Vec<MinuteRecord>,
}

impl MinuteDataset {
    pub fn new(records: Vec<MinuteRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateMinute {
                    subject: r.subject_id.clone(),
                    day: r.day_index,
                    minute: r.minute_of_day,
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[MinuteRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MinuteRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records grouped by subject, subjects in sorted order and each group
    /// sorted by `(day, minute)`.
    pub fn by_subject(&self) -> BTreeMap<&str, Vec<&MinuteRecord>> {
        let mut groups: BTreeMap<&str, Vec<&MinuteRecord>> = BTreeMap::new();
        for r in &self.records {
            groups.entry(r.subject_id.as_str()).or_default().push(r);
        }
        for group in groups.values_mut() {
            group.sort_by_key(|r| (r.day_index, r.minute_of_day));
        }
        groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaySummary {
    pub subject_id: String,
    pub day_index: u32,
    pub n_valid_minutes: u32,
    pub n_wake_minutes: u32,
    pub n_nonzero_mims_minutes: u32,
    pub valid: bool,
    pub totals: BTreeMap<String, f64>,
}

/// The "average day" for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSummary {
    pub subject_id: String,
    pub n_valid_days: u32,
    pub means: BTreeMap<String, f64>,
    pub included: bool,
}

macro_rules! categorical {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const LEVELS: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                let key = normalize_label(s);
                $(
                    if key == normalize_label($label) $(|| key == normalize_label($alias))* {
                        return Some($name::$variant);
                    }
                )+
                None
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

fn normalize_label(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

categorical!(Sex {
    Male => "male" | "m" | "1",
    Female => "female" | "f" | "2",
});

categorical!(RaceEthnicity {
    NonHispanicWhite => "non_hispanic_white" | "nh_white" | "white",
    NonHispanicBlack => "non_hispanic_black" | "nh_black" | "black",
    MexicanAmerican => "mexican_american",
    OtherHispanic => "other_hispanic",
    Other => "other" | "other_multi_race" | "other_or_multi_race",
});

categorical!(Education {
    LessThanHighSchool => "less_than_hs" | "less_than_high_school",
    HighSchool => "hs" | "high_school" | "hs_equivalent",
    MoreThanHighSchool => "more_than_hs" | "more_than_high_school",
});

categorical!(BmiCategory {
    Underweight => "underweight",
    Normal => "normal",
    Overweight => "overweight",
    Obese => "obese",
});

categorical!(
    /// Alcohol use has an explicit missing level rather than record-level missingness.
    Alcohol {
        Never => "never" | "never_drinker",
        Former => "former" | "former_drinker",
        Moderate => "moderate" | "moderate_drinker",
        Heavy => "heavy" | "heavy_drinker",
        Missing => "missing" | "missing_alcohol",
    }
);

categorical!(Smoking {
    Never => "never" | "never_smoker",
    Former => "former" | "former_smoker",
    Current => "current" | "current_smoker",
});

categorical!(SelfRatedHealth {
    Poor => "poor",
    Fair => "fair",
    Good => "good",
    VeryGood => "very_good",
    Excellent => "excellent",
});

/// Age at which ages are topcoded in the source data.
pub const AGE_TOPCODE: f64 = 80.0;

/// Traditional predictors plus survey design fields for one subject.
///
/// `None` means the value is missing in the source table; such subjects are
/// excluded from survival models.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectCovariates {
    pub subject_id: String,
    pub wave: Option<String>,
    pub age_years: f64,
    pub age_topcoded: bool,
    pub sex: Option<Sex>,
    pub race_ethnicity: Option<RaceEthnicity>,
    pub education: Option<Education>,
    pub bmi_category: Option<BmiCategory>,
    pub diabetes: Option<bool>,
    pub chd: Option<bool>,
    pub chf: Option<bool>,
    pub heart_attack: Option<bool>,
    pub stroke: Option<bool>,
    pub cancer: Option<bool>,
    pub mobility_problem: Option<bool>,
    pub alcohol: Alcohol,
    pub smoking: Option<Smoking>,
    pub self_reported_health: Option<SelfRatedHealth>,
    pub survey_weight: f64,
    pub stratum_id: String,
    pub psu_id: String,
}

impl SubjectCovariates {
    /// Builds a record with every optional predictor missing.
    pub fn new(subject_id: impl Into<String>, age_years: f64, survey_weight: f64) -> Result<Self> {
        let mut c = Self {
            subject_id: subject_id.into(),
            wave: None,
            age_years: 0.0,
            age_topcoded: false,
            sex: None,
            race_ethnicity: None,
            education: None,
            bmi_category: None,
            diabetes: None,
            chd: None,
            chf: None,
            heart_attack: None,
            stroke: None,
            cancer: None,
            mobility_problem: None,
            alcohol: Alcohol::Missing,
            smoking: None,
            self_reported_health: None,
            survey_weight: 1.0,
            stratum_id: String::new(),
            psu_id: String::new(),
        };
        c.set_age(age_years)?;
        c.set_weight(survey_weight)?;
        Ok(c)
    }

    /// Ages at or above the topcode are stored as the topcode with the flag set.
    pub fn set_age(&mut self, age_years: f64) -> Result<()> {
        if !age_years.is_finite() || age_years < 18.0 {
            return Err(Error::invalid(
                "age_years",
                format!("{age_years} outside [18, 80]"),
            ));
        }
        self.age_topcoded = age_years >= AGE_TOPCODE;
        self.age_years = age_years.min(AGE_TOPCODE);
        Ok(())
    }

    pub fn set_weight(&mut self, survey_weight: f64) -> Result<()> {
        if !(survey_weight > 0.0 && survey_weight.is_finite()) {
            return Err(Error::invalid(
                "survey_weight",
                format!("must be positive, got {survey_weight}"),
            ));
        }
        self.survey_weight = survey_weight;
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.missing_fields().is_empty()
    }

    pub fn missing_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let checks: [(&'static str, bool); 13] = [
            ("sex", self.sex.is_some()),
            ("race_ethnicity", self.race_ethnicity.is_some()),
            ("education", self.education.is_some()),
            ("bmi_category", self.bmi_category.is_some()),
            ("diabetes", self.diabetes.is_some()),
            ("chd", self.chd.is_some()),
            ("chf", self.chf.is_some()),
            ("heart_attack", self.heart_attack.is_some()),
            ("stroke", self.stroke.is_some()),
            ("cancer", self.cancer.is_some()),
            ("mobility_problem", self.mobility_problem.is_some()),
            ("smoking", self.smoking.is_some()),
            ("self_reported_health", self.self_reported_health.is_some()),
        ];
        for (name, present) in checks {
            if !present {
                out.push(name);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MortalityRecord {
    pub subject_id: String,
    pub event: bool,
    pub followup_months: f64,
}

impl MortalityRecord {
    pub fn new(subject_id: impl Into<String>, event: bool, followup_months: f64) -> Result<Self> {
        if !(followup_months >= 0.0 && followup_months.is_finite()) {
            return Err(Error::invalid(
                "followup_months",
                format!("must be >= 0, got {followup_months}"),
            ));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            event,
            followup_months,
        })
    }
}

/// Thresholds and analysis knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub min_valid_minutes: u32,
    pub min_wake_minutes: u32,
    pub min_nonzero_mims_minutes: u32,
    /// Count non-zero MIMS minutes among valid minutes only (otherwise all minutes).
    pub nonzero_mims_among_valid_only: bool,
    pub min_valid_days: u32,
    pub winsor_percentile: f64,
    pub hr_step_increment: f64,
    pub cv_folds: usize,
    pub cv_repeats: usize,
    pub rng_seed: u64,
    /// Inclusive age window for survival models.
    pub age_range: (f64, f64),
    pub loess_span: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            min_valid_minutes: 1368,
            min_wake_minutes: 420,
            min_nonzero_mims_minutes: 420,
            nonzero_mims_among_valid_only: true,
            min_valid_days: 3,
            winsor_percentile: 0.99,
            hr_step_increment: 500.0,
            cv_folds: 10,
            cv_repeats: 100,
            rng_seed: 20_240_601,
            age_range: (50.0, 79.0),
            loess_span: 0.75,
        }
    }
}

impl AnalysisConfig {
    pub const KEYS: &'static [&'static str] = &[
        "min_valid_minutes",
        "min_wake_minutes",
        "min_nonzero_mims_minutes",
        "nonzero_mims_among_valid_only",
        "min_valid_days",
        "winsor_percentile",
        "hr_step_increment",
        "cv_folds",
        "cv_repeats",
        "rng_seed",
        "age_range",
        "age_min",
        "age_max",
        "loess_span",
    ];

    /// Applies one override; the result is checked by [`AnalysisConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "min_valid_minutes" => self.min_valid_minutes = parse_value(key, value)?,
            "min_wake_minutes" => self.min_wake_minutes = parse_value(key, value)?,
            "min_nonzero_mims_minutes" => self.min_nonzero_mims_minutes = parse_value(key, value)?,
            "nonzero_mims_among_valid_only" => {
                self.nonzero_mims_among_valid_only = parse_bool(key, value)?
            }
            "min_valid_days" => self.min_valid_days = parse_value(key, value)?,
            "winsor_percentile" => self.winsor_percentile = parse_value(key, value)?,
            "hr_step_increment" => self.hr_step_increment = parse_value(key, value)?,
            "cv_folds" => self.cv_folds = parse_value(key, value)?,
            "cv_repeats" => self.cv_repeats = parse_value(key, value)?,
            "rng_seed" => self.rng_seed = parse_value(key, value)?,
            "age_min" => self.age_range.0 = parse_value(key, value)?,
            "age_max" => self.age_range.1 = parse_value(key, value)?,
            "age_range" => {
                let (lo, hi) = value
                    .split_once([',', '-'])
                    .ok_or_else(|| Error::invalid(key, "expected `lo,hi`"))?;
                self.age_range = (parse_value(key, lo.trim())?, parse_value(key, hi.trim())?);
            }
            "loess_span" => self.loess_span = parse_value(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=1440).contains(&self.min_valid_minutes) {
            return Err(Error::invalid("min_valid_minutes", "must be in [1, 1440]"));
        }
        if !(1..=1440).contains(&self.min_wake_minutes) {
            return Err(Error::invalid("min_wake_minutes", "must be in [1, 1440]"));
        }
        if !(1..=1440).contains(&self.min_nonzero_mims_minutes) {
            return Err(Error::invalid(
                "min_nonzero_mims_minutes",
                "must be in [1, 1440]",
            ));
        }
        if self.min_valid_days < 1 {
            return Err(Error::invalid("min_valid_days", "must be >= 1"));
        }
        if !(self.winsor_percentile > 0.0 && self.winsor_percentile < 1.0) {
            return Err(Error::invalid("winsor_percentile", "must be in (0, 1)"));
        }
        if !(self.hr_step_increment > 0.0 && self.hr_step_increment.is_finite()) {
            return Err(Error::invalid("hr_step_increment", "must be positive"));
        }
        if self.cv_folds < 2 {
            return Err(Error::invalid("cv_folds", "must be >= 2"));
        }
        if self.cv_repeats < 1 {
            return Err(Error::invalid("cv_repeats", "must be >= 1"));
        }
        let (lo, hi) = self.age_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::invalid("age_range", "need 0 < lo <= hi"));
        }
        if !(self.loess_span > 0.0 && self.loess_span <= 1.0) {
            return Err(Error::invalid("loess_span", "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Default configuration with `overrides` applied and validated.
pub fn make_config<I, K, V>(overrides: I) -> Result<AnalysisConfig>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut cfg = AnalysisConfig::default();
    for (k, v) in overrides {
        cfg.set(k.as_ref().trim(), v.as_ref())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(key, format!("cannot parse `{value}`")))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::invalid(key, format!("expected a boolean, got `{value}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> NaiveDateTime {
        chrono::NaiveDate::from_ymd_opt(2012, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    #[test]
    fn default_config_matches_wear_rules() {
        let cfg = make_config(Vec::<(String, String)>::new()).unwrap();
        assert_eq!(cfg.min_valid_minutes, 1368);
        assert_eq!(cfg.min_wake_minutes, 420);
        assert_eq!(cfg.min_nonzero_mims_minutes, 420);
        assert_eq!(cfg.min_valid_days, 3);
        assert_eq!(cfg.hr_step_increment, 500.0);
        assert_eq!(cfg.winsor_percentile, 0.99);
        assert_eq!((cfg.cv_folds, cfg.cv_repeats), (10, 100));
        assert_eq!(cfg.age_range, (50.0, 79.0));
    }

    #[test]
    fn sensitivity_config_accepts_one_day() {
        let cfg = make_config([("min_valid_days", "1")]).unwrap();
        assert_eq!(cfg.min_valid_days, 1);
    }

    #[test]
    fn config_rejects_bad_overrides() {
        assert!(matches!(
            make_config([("cv_folds", "1")]),
            Err(Error::InvalidValue { .. })
        ));
        assert!(matches!(
            make_config([("min_steps", "1")]),
            Err(Error::UnknownKey(_))
        ));
        assert!(make_config([("winsor_percentile", "1.0")]).is_err());
        assert!(make_config([("min_valid_minutes", "abc")]).is_err());
        let cfg = make_config([("age_range", "40,85")]).unwrap();
        assert_eq!(cfg.age_range, (40.0, 85.0));
    }

    #[test]
    fn recording_invariants() {
        assert!(TriaxialRecording::new("a", t0(), 80.0, vec![0.0; 3], vec![0.0; 2], vec![0.0; 3]).is_err());
        assert!(TriaxialRecording::new("a", t0(), 0.0, vec![], vec![], vec![]).is_err());
        assert!(TriaxialRecording::new("a", t0(), 80.0, vec![f32::NAN], vec![0.0], vec![0.0]).is_err());
        let rec = TriaxialRecording::new("a", t0(), 80.0, vec![0.0; 160], vec![0.0; 160], vec![1.0; 160]).unwrap();
        assert_eq!(rec.duration_seconds(), 2.0);
        let tail = rec.slice(80, 160);
        assert_eq!(tail.start(), t0() + Duration::seconds(1));
        assert_eq!(tail.len(), 80);
    }

    #[test]
    fn negative_mims_becomes_sentinel() {
        let m = MinuteRecord::new("s", 1, 0, WearState::WakeWear, false, -3.0).unwrap();
        assert_eq!(m.mims, MIMS_SENTINEL);
        assert!(!m.has_nonzero_mims());
        assert_eq!(m.log10_mims(), 0.0);
        let m = MinuteRecord::new("s", 1, 0, WearState::WakeWear, false, 3.2).unwrap();
        assert_eq!(m.log10_mims(), 4.2f64.log10());
    }

    #[test]
    fn minute_record_ranges() {
        assert!(MinuteRecord::new("s", 0, 0, WearState::WakeWear, false, 0.0).is_err());
        assert!(MinuteRecord::new("s", 1, 1440, WearState::WakeWear, false, 0.0).is_err());
    }

    #[test]
    fn duplicate_minutes_rejected() {
        let a = MinuteRecord::new("s", 1, 5, WearState::WakeWear, false, 1.0).unwrap();
        let b = MinuteRecord::new("s", 1, 5, WearState::SleepWear, false, 2.0).unwrap();
        let c = MinuteRecord::new("s", 2, 5, WearState::SleepWear, false, 2.0).unwrap();
        assert!(matches!(
            MinuteDataset::new(vec![a.clone(), b]),
            Err(Error::DuplicateMinute { day: 1, minute: 5, .. })
        ));
        assert_eq!(MinuteDataset::new(vec![a, c]).unwrap().len(), 2);
    }

    #[test]
    fn wear_labels_parse() {
        for s in WearState::ALL {
            assert_eq!(s.label().parse::<WearState>().unwrap(), s);
        }
        assert_eq!("Wake wear".parse::<WearState>().unwrap(), WearState::WakeWear);
        assert_eq!("sleep_wear".parse::<WearState>().unwrap(), WearState::SleepWear);
        assert!("asleep".parse::<WearState>().is_err());
        assert!(WearState::Unknown.is_effective_wear());
        assert!(!WearState::NonWear.is_effective_wear());
    }

    #[test]
    fn ages_are_topcoded() {
        let c = SubjectCovariates::new("s", 84.0, 1.0).unwrap();
        assert_eq!(c.age_years, 80.0);
        assert!(c.age_topcoded);
        let c = SubjectCovariates::new("s", 79.5, 1.0).unwrap();
        assert!(!c.age_topcoded);
        assert!(SubjectCovariates::new("s", 12.0, 1.0).is_err());
        assert!(SubjectCovariates::new("s", 40.0, 0.0).is_err());
        assert!(!c.is_complete());
    }

    #[test]
    fn categorical_aliases() {
        assert_eq!(Alcohol::parse("Missing alcohol"), Some(Alcohol::Missing));
        assert_eq!(RaceEthnicity::parse("Non-Hispanic Black"), Some(RaceEthnicity::NonHispanicBlack));
        assert_eq!(SelfRatedHealth::parse("Very good"), Some(SelfRatedHealth::VeryGood));
        assert_eq!(Education::parse("HS/HS equivalent"), None);
        assert_eq!(Education::parse("hs_equivalent"), Some(Education::HighSchool));
    }

    #[test]
    fn mortality_followup_nonnegative() {
        assert!(MortalityRecord::new("s", false, -1.0).is_err());
        assert!(MortalityRecord::new("s", true, 81.0).is_ok());
    }
}
