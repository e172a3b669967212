//! Seeded generators with known ground truth: gait recordings, minute-level
//! cohorts, survival cohorts and complete synthetic studies.

use std::f64::consts::TAU;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};

use crate::detectors::BUILTIN_DETECTORS;
use crate::error::{Error, Result};
use crate::ingest::{write_covariates, write_minute_file, write_mortality};
use crate::model::{
    Alcohol, BmiCategory, Education, MinuteRecord, MortalityRecord, RaceEthnicity, SelfRatedHealth, Sex, Smoking,
    SubjectCovariates, TriaxialRecording, WearState, MINUTES_PER_DAY,
};
use crate::survival::SurvivalDataset;

/// Start time of every generated recording.
pub fn default_start() -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(2000, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Rest,
    Walk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSegment {
    pub kind: SegmentKind,
    pub duration_s: f64,
    pub cadence_hz: f64,
    pub amplitude_g: f64,
    pub noise_sd_g: f64,
}

impl GaitSegment {
    pub fn walk(duration_s: f64, cadence_hz: f64, amplitude_g: f64, noise_sd_g: f64) -> Self {
        Self {
            kind: SegmentKind::Walk,
            duration_s,
            cadence_hz,
            amplitude_g,
            noise_sd_g,
        }
    }

    pub fn rest(duration_s: f64, noise_sd_g: f64) -> Self {
        Self {
            kind: SegmentKind::Rest,
            duration_s,
            cadence_hz: 0.0,
            amplitude_g: 0.0,
            noise_sd_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitRecording {
    pub recording: TriaxialRecording,
    /// True steps in each whole second.
    pub true_steps: Vec<f64>,
}

impl GaitRecording {
    pub fn total_steps(&self) -> f64 {
        self.true_steps.iter().sum()
    }
}

fn random_unit_axis(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-6 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

/// Each segment is `(1 + A sin(2π f t)) u + noise` along a random unit axis
/// `u`; rest segments have `A = 0`. Walking contributes `f` steps per second.
pub fn gen_gait(segments: &[GaitSegment], rate_hz: f64, seed: u64) -> Result<GaitRecording> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::invalid("rate_hz", "must be positive"));
    }
    for s in segments {
        if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
            return Err(Error::invalid("duration_s", "must be positive"));
        }
        if !(s.noise_sd_g >= 0.0 && s.amplitude_g >= 0.0) {
            return Err(Error::invalid("noise_sd_g", "amplitude and noise must be nonnegative"));
        }
        if s.kind == SegmentKind::Walk {
            if !(0.5..=4.0).contains(&s.cadence_hz) {
                return Err(Error::invalid("cadence_hz", format!("{} outside [0.5, 4]", s.cadence_hz)));
            }
            if rate_hz < 4.0 * s.cadence_hz {
                return Err(Error::invalid("rate_hz", format!("{rate_hz} Hz is below 4 x cadence {}", s.cadence_hz)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_s: f64 = segments.iter().map(|s| s.duration_s).sum();
    let mut true_steps = vec![0.0; total_s.ceil() as usize];
    let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
    let mut t0 = 0.0;
    for s in segments {
        let axis = random_unit_axis(&mut rng);
        let noise = Normal::new(0.0, s.noise_sd_g).map_err(|e| Error::invalid("noise_sd_g", e.to_string()))?;
        let n = (s.duration_s * rate_hz).round() as usize;
        for i in 0..n {
            let t = i as f64 / rate_hz;
            let a = if s.kind == SegmentKind::Walk {
                1.0 + s.amplitude_g * (TAU * s.cadence_hz * t).sin()
            } else {
                1.0
            };
            x.push((a * axis[0] + noise.sample(&mut rng)) as f32);
            y.push((a * axis[1] + noise.sample(&mut rng)) as f32);
            z.push((a * axis[2] + noise.sample(&mut rng)) as f32);
        }
        if s.kind == SegmentKind::Walk {
            let t1 = t0 + s.duration_s;
            for (sec, v) in true_steps.iter_mut().enumerate() {
                let overlap = (t1.min(sec as f64 + 1.0) - t0.max(sec as f64)).max(0.0);
                *v += s.cadence_hz * overlap;
            }
        }
        t0 += s.duration_s;
    }
    let recording = TriaxialRecording::new(format!("gait{seed}"), default_start(), rate_hz, x, y, z)?;
    Ok(GaitRecording { recording, true_steps })
}

/// Day with a prescribed count at a validity threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryDay {
    /// Exactly this many valid (wake, unflagged) minutes; the rest is non-wear.
    ValidMinutes(u32),
    /// Every minute valid with exactly this many wake minutes; the rest sleep.
    WakeMinutes(u32),
    /// Every minute valid and awake with exactly this many nonzero-MIMS minutes.
    NonzeroMims(u32),
}

impl BoundaryDay {
    pub const THRESHOLD_CASES: [BoundaryDay; 6] = [
        BoundaryDay::ValidMinutes(1367),
        BoundaryDay::ValidMinutes(1368),
        BoundaryDay::WakeMinutes(419),
        BoundaryDay::WakeMinutes(420),
        BoundaryDay::NonzeroMims(419),
        BoundaryDay::NonzeroMims(420),
    ];
}

/// Marginal rates for randomized minute-level days.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortProfile {
    /// Upper bound of the uniform length of each day's non-wear bout.
    pub max_nonwear_minutes: u32,
    /// Range of the sleep block placed around midnight.
    pub sleep_minutes: (u32, u32),
    pub unknown_rate: f64,
    pub flag_rate: f64,
    /// Probability that an awake minute records zero MIMS.
    pub zero_mims_rate: f64,
    /// Probability that a day is replaced by one of the threshold cases.
    pub boundary_rate: f64,
}

impl Default for CohortProfile {
    fn default() -> Self {
        Self {
            max_nonwear_minutes: 180,
            sleep_minutes: (300, 900),
            unknown_rate: 0.01,
            flag_rate: 0.01,
            zero_mims_rate: 0.3,
            boundary_rate: 0.1,
        }
    }
}

impl CohortProfile {
    fn validate(&self) -> Result<()> {
        for (key, p) in [
            ("unknown_rate", self.unknown_rate),
            ("flag_rate", self.flag_rate),
            ("zero_mims_rate", self.zero_mims_rate),
            ("boundary_rate", self.boundary_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(key, "must lie in [0, 1]"));
            }
        }
        if self.sleep_minutes.0 > self.sleep_minutes.1 || self.sleep_minutes.1 > u32::from(MINUTES_PER_DAY) {
            return Err(Error::invalid("sleep_minutes", "invalid range"));
        }
        Ok(())
    }
}

fn minute(subject: &str, day: u32, m: u16, wear: WearState, flagged: bool, mims: f64) -> MinuteRecord {
    MinuteRecord::new(subject, day, m, wear, flagged, mims).expect("generated minute is in range")
}

/// Minutes of one forced threshold day.
pub fn boundary_day(subject: &str, day: u32, kind: BoundaryDay, seed: u64) -> Vec<MinuteRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u16> = (0..MINUTES_PER_DAY).collect();
    order.shuffle(&mut rng);
    let mut out: Vec<MinuteRecord> = (0..MINUTES_PER_DAY)
        .map(|m| minute(subject, day, m, WearState::WakeWear, false, rng.gen_range(0.5..30.0)))
        .collect();
    let (count, pick) = match kind {
        BoundaryDay::ValidMinutes(k) => (k, 0),
        BoundaryDay::WakeMinutes(k) => (k, 1),
        BoundaryDay::NonzeroMims(k) => (k, 2),
    };
    for &m in &order[(count.min(u32::from(MINUTES_PER_DAY)) as usize)..] {
        let r = &mut out[m as usize];
        match pick {
            0 => r.wear = WearState::NonWear,
            1 => r.wear = WearState::SleepWear,
            _ => r.mims = 0.0,
        }
    }
    out
}

/// One randomized day under `profile`.
pub fn random_day(subject: &str, day: u32, profile: &CohortProfile, rng: &mut ChaCha8Rng) -> Vec<MinuteRecord> {
    let n = u32::from(MINUTES_PER_DAY);
    let sleep = rng.gen_range(profile.sleep_minutes.0..=profile.sleep_minutes.1);
    let sleep_start = (n - sleep / 2) % n;
    let nonwear = rng.gen_range(0..=profile.max_nonwear_minutes.min(n));
    let nonwear_start = rng.gen_range(0..n);
    (0..MINUTES_PER_DAY)
        .map(|m| {
            let mu = u32::from(m);
            let asleep = (mu + n - sleep_start) % n < sleep;
            let off = (mu + n - nonwear_start) % n < nonwear;
            let wear = if rng.gen_bool(profile.unknown_rate) {
                WearState::Unknown
            } else if off {
                WearState::NonWear
            } else if asleep {
                WearState::SleepWear
            } else {
                WearState::WakeWear
            };
            let flagged = rng.gen_bool(profile.flag_rate);
            let mims = match wear {
                WearState::WakeWear if !rng.gen_bool(profile.zero_mims_rate) => rng.gen_range(0.1..40.0),
                WearState::SleepWear if rng.gen_bool(0.2) => rng.gen_range(0.01..2.0),
                _ => 0.0,
            };
            minute(subject, day, m, wear, flagged, mims)
        })
        .collect()
}

/// Minute tables for `n` subjects over `days` days.
pub fn gen_cohort(n: usize, days: u32, profile: &CohortProfile, seed: u64) -> Result<Vec<MinuteRecord>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * days as usize * usize::from(MINUTES_PER_DAY));
    for s in 0..n {
        let subject = format!("C{s:05}");
        for day in 1..=days {
            if rng.gen_bool(profile.boundary_rate) {
                let kind = *BoundaryDay::THRESHOLD_CASES.choose(&mut rng).expect("nonempty");
                out.extend(boundary_day(&subject, day, kind, rng.gen()));
            } else {
                out.extend(random_day(&subject, day, profile, &mut rng));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalSpec {
    pub n: usize,
    /// Log hazard ratio per step.
    pub beta_per_step: f64,
    /// Baseline hazard per month.
    pub baseline_hazard: f64,
    /// Expected censored fraction; 0 gives events for everyone.
    pub censor_rate: f64,
    pub steps_mean: f64,
    pub steps_sd: f64,
}

impl Default for SurvivalSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            beta_per_step: 0.0,
            baseline_hazard: 0.005,
            censor_rate: 0.5,
            steps_mean: 8000.0,
            steps_sd: 3000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSurvival {
    pub data: SurvivalDataset,
    pub true_beta: f64,
}

/// Exponential event times with hazard `baseline · exp(β · steps)` and
/// independent exponential censoring. The dataset has a single `steps` column.
pub fn gen_survival(spec: &SurvivalSpec, seed: u64) -> Result<SimulatedSurvival> {
    if spec.n < 10 {
        return Err(Error::invalid("n", "must be >= 10"));
    }
    if !(0.0..1.0).contains(&spec.censor_rate) {
        return Err(Error::invalid("censor_rate", "must lie in [0, 1)"));
    }
    if !(spec.baseline_hazard > 0.0) || !(spec.steps_sd >= 0.0) {
        return Err(Error::invalid("baseline_hazard", "hazard must be positive and sd nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps_dist = Normal::new(spec.steps_mean, spec.steps_sd).map_err(|e| Error::invalid("steps_sd", e.to_string()))?;
    let steps: Vec<f64> = (0..spec.n).map(|_| steps_dist.sample(&mut rng).max(0.0)).collect();
    let hazards: Vec<f64> = steps
        .iter()
        .map(|s| spec.baseline_hazard * (spec.beta_per_step * s).exp())
        .collect();
    let mean_hazard = hazards.iter().sum::<f64>() / spec.n as f64;
    let censor_hazard = spec.censor_rate / (1.0 - spec.censor_rate) * mean_hazard;
    let mut time = Vec::with_capacity(spec.n);
    let mut event = Vec::with_capacity(spec.n);
    for h in &hazards {
        let t = Exp::new(*h).map_err(|e| Error::invalid("baseline_hazard", e.to_string()))?.sample(&mut rng);
        let c = if censor_hazard > 0.0 {
            Exp::new(censor_hazard).map_err(|e| Error::invalid("censor_rate", e.to_string()))?.sample(&mut rng)
        } else {
            f64::INFINITY
        };
        time.push(t.min(c));
        event.push(t <= c);
    }
    let ids = (0..spec.n).map(|i| format!("V{i:06}")).collect();
    let mut data = SurvivalDataset::new(ids, time, event, vec![1.0; spec.n])?;
    data.add_column("steps", steps)?;
    Ok(SimulatedSurvival {
        data,
        true_beta: spec.beta_per_step,
    })
}

/// Relative level of each built-in detector against the latent step count.
pub const DETECTOR_BIAS: [(&str, f64); 4] = [
    (BUILTIN_DETECTORS[0], 1.25),
    (BUILTIN_DETECTORS[1], 1.0),
    (BUILTIN_DETECTORS[2], 0.85),
    (BUILTIN_DETECTORS[3], 0.45),
];

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub n_subjects: usize,
    pub days: u32,
    pub age_range: (f64, f64),
    /// Log hazard ratio per daily step.
    pub beta_per_step: f64,
    /// Log hazard ratio per year of age.
    pub beta_age: f64,
    pub baseline_hazard: f64,
    pub max_followup_months: f64,
    pub profile: CohortProfile,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            days: 7,
            age_range: (40.0, 85.0),
            beta_per_step: 0.95f64.ln() / 500.0,
            beta_age: 0.07,
            baseline_hazard: 0.004,
            max_followup_months: 100.0,
            profile: CohortProfile {
                max_nonwear_minutes: 100,
                sleep_minutes: (360, 600),
                unknown_rate: 0.003,
                flag_rate: 0.002,
                zero_mims_rate: 0.05,
                boundary_rate: 0.0,
            },
        }
    }
}

/// Subject-level ground truth for a synthetic study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySubject {
    pub covariates: SubjectCovariates,
    pub mortality: MortalityRecord,
    /// Expected daily steps driving both minute data and hazard.
    pub daily_steps: f64,
    minute_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub spec: StudySpec,
    pub subjects: Vec<StudySubject>,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, levels: &[T], weights: &[f64]) -> T {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen_range(0.0..total);
    for (l, w) in levels.iter().zip(weights) {
        if u < *w {
            return *l;
        }
        u -= w;
    }
    *levels.last().expect("nonempty")
}

/// Covariates, mortality and latent activity for a synthetic study; minute
/// data are generated per subject on demand.
pub fn gen_study(spec: &StudySpec, seed: u64) -> Result<Study> {
    spec.profile.validate()?;
    if spec.n_subjects == 0 || spec.days == 0 {
        return Err(Error::invalid("n_subjects", "subjects and days must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    for i in 0..spec.n_subjects {
        let id = format!("S{i:05}");
        let age: f64 = rng.gen_range(spec.age_range.0..spec.age_range.1);
        let weight = rng.gen_range(2000.0..60000.0f64).round();
        let mut c = SubjectCovariates::new(&id, age.floor(), weight)?;
        c.wave = Some(if i % 2 == 0 { "2011-2012" } else { "2013-2014" }.to_string());
        c.sex = Some(pick(&mut rng, Sex::LEVELS, &[0.48, 0.52]));
        c.race_ethnicity = Some(pick(&mut rng, RaceEthnicity::LEVELS, &[0.6, 0.12, 0.09, 0.07, 0.12]));
        c.education = Some(pick(&mut rng, Education::LEVELS, &[0.15, 0.25, 0.6]));
        c.bmi_category = Some(pick(&mut rng, BmiCategory::LEVELS, &[0.04, 0.3, 0.33, 0.33]));
        let older = ((age - 40.0) / 45.0).clamp(0.0, 1.0);
        c.diabetes = Some(rng.gen_bool(0.08 + 0.15 * older));
        c.chd = Some(rng.gen_bool(0.02 + 0.08 * older));
        c.chf = Some(rng.gen_bool(0.01 + 0.05 * older));
        c.heart_attack = Some(rng.gen_bool(0.02 + 0.07 * older));
        c.stroke = Some(rng.gen_bool(0.02 + 0.05 * older));
        c.cancer = Some(rng.gen_bool(0.05 + 0.15 * older));
        c.mobility_problem = Some(rng.gen_bool(0.1 + 0.2 * older));
        c.alcohol = pick(&mut rng, Alcohol::LEVELS, &[0.15, 0.2, 0.45, 0.12, 0.08]);
        c.smoking = Some(pick(&mut rng, Smoking::LEVELS, &[0.55, 0.27, 0.18]));
        c.self_reported_health = Some(pick(&mut rng, SelfRatedHealth::LEVELS, &[0.04, 0.15, 0.38, 0.3, 0.13]));
        if rng.gen_bool(0.03) {
            c.smoking = None;
        }
        c.stratum_id = format!("{}", 1 + rng.gen_range(0..15));
        c.psu_id = format!("{}", 1 + rng.gen_range(0..2));

        let frailty = f64::from(u8::from(c.mobility_problem == Some(true)));
        let z: f64 = rng.sample(StandardNormal);
        let daily_steps = (9500.0 * (0.35 * z).exp() - 60.0 * (age - 40.0) - 1500.0 * frailty).max(800.0);
        let lp = spec.beta_age * (age - 65.0)
            + spec.beta_per_step * (daily_steps - 8000.0)
            + 0.4 * frailty
            + 0.3 * f64::from(u8::from(c.diabetes == Some(true)))
            + 0.5 * f64::from(u8::from(c.chf == Some(true)));
        let hazard = spec.baseline_hazard * lp.exp();
        let t = Exp::new(hazard).map_err(|e| Error::invalid("baseline_hazard", e.to_string()))?.sample(&mut rng);
        let censor = rng.gen_range(0.6 * spec.max_followup_months..spec.max_followup_months);
        let followup = t.min(censor).ceil().max(1.0);
        let mortality = MortalityRecord::new(&id, t <= censor, followup)?;
        subjects.push(StudySubject {
            covariates: c,
            mortality,
            daily_steps,
            minute_seed: rng.gen(),
        });
    }
    Ok(Study {
        spec: spec.clone(),
        subjects,
    })
}

impl Study {
    /// Minute records for subject `index` with MIMS, AC and a column for
    /// each built-in detector.
    pub fn minutes(&self, index: usize) -> Vec<MinuteRecord> {
        let s = &self.subjects[index];
        let id = s.covariates.subject_id.as_str();
        let mut rng = ChaCha8Rng::seed_from_u64(s.minute_seed);
        // A few subjects wear the device only briefly.
        let poor_wear = rng.gen_bool(0.08);
        let mut profile = self.spec.profile.clone();
        if poor_wear {
            profile.max_nonwear_minutes = 1200;
        }
        let mut out = Vec::with_capacity(self.spec.days as usize * usize::from(MINUTES_PER_DAY));
        for day in 1..=self.spec.days {
            let mut minutes = random_day(id, day, &profile, &mut rng);
            let awake = minutes.iter().filter(|m| m.wear == WearState::WakeWear).count().max(1) as f64;
            let walk_p = (s.daily_steps / 90.0 / awake).min(0.9);
            for m in &mut minutes {
                let walking = m.wear == WearState::WakeWear && rng.gen_bool(walk_p);
                let latent = if walking { rng.gen_range(60.0..120.0) } else { 0.0 };
                if walking {
                    m.mims = 25.0 + 0.15 * latent + rng.gen_range(0.0..10.0);
                }
                let base = m.mims_value();
                m.ac = Some((base * 110.0 + rng.gen_range(0.0..50.0) * f64::from(u8::from(base > 0.0))).round() as u64);
                for (name, bias) in DETECTOR_BIAS {
                    let noise = if base > 0.0 { rng.gen_range(0.0..4.0) } else { 0.0 };
                    m.steps.insert(name.to_string(), (latent * bias + noise).round());
                }
            }
            out.extend(minutes);
        }
        out
    }

    pub fn covariates(&self) -> Vec<SubjectCovariates> {
        self.subjects.iter().map(|s| s.covariates.clone()).collect()
    }

    pub fn mortality(&self) -> Vec<MortalityRecord> {
        self.subjects.iter().map(|s| s.mortality.clone()).collect()
    }

    /// Writes `minutes/<id>.minutes.csv`, `covariates.csv` and `mortality.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let minutes_dir = dir.join("minutes");
        std::fs::create_dir_all(&minutes_dir).map_err(|e| Error::io(&minutes_dir, e))?;
        for i in 0..self.subjects.len() {
            let id = &self.subjects[i].covariates.subject_id;
            write_minute_file(&self.minutes(i), &minutes_dir.join(format!("{id}.minutes.csv")))?;
        }
        write_covariates(&self.covariates(), &dir.join("covariates.csv"))?;
        write_mortality(&self.mortality(), &dir.join("mortality.csv"))
    }
}

/// Alternating rest and walking bouts covering `days` days, for raw-file and
/// benchmark inputs.
pub fn daily_gait_recipe(days: u32, seed: u64) -> Vec<GaitSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut left = f64::from(days) * 86_400.0;
    while left > 0.0 {
        let rest = rng.gen_range(60.0..900.0f64).min(left);
        out.push(GaitSegment::rest(rest, 0.01));
        left -= rest;
        if left <= 0.0 {
            break;
        }
        let walk = rng.gen_range(20.0..300.0f64).min(left);
        out.push(GaitSegment::walk(walk, rng.gen_range(1.5..2.2), rng.gen_range(0.2..0.6), 0.03));
        left -= walk;
    }
    out
}
