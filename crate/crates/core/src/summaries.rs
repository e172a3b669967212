//! Activity Counts, MIMS, the minute-level log transform and assembly of
//! per-minute records from day-sized blocks of raw data.

use std::collections::BTreeMap;

use chrono::{NaiveDateTime, Timelike};

use crate::detectors::{run_detectors, DetectorRegistry, DetectorRun};
use crate::dsp::{resample_values, SosFilter};
use crate::error::{Error, Result};
use crate::model::{parse_value, MinuteRecord, TriaxialRecording, WearState, MINUTES_PER_DAY};

/// How per-axis epoch counts are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisCombine {
    EuclideanNorm,
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcParams {
    pub resample_hz: f64,
    pub bandpass_hz: (f64, f64),
    pub filter_order: usize,
    pub deadband_g: f64,
    pub clip_g: f64,
    pub quantum_g: f64,
    pub epoch_seconds: f64,
    pub axis_combine: AxisCombine,
}

impl Default for AcParams {
    fn default() -> Self {
        Self {
            resample_hz: 30.0,
            bandpass_hz: (0.25, 2.5),
            filter_order: 4,
            deadband_g: 0.068,
            clip_g: 2.13,
            quantum_g: 1.0 / 128.0,
            epoch_seconds: 60.0,
            axis_combine: AxisCombine::EuclideanNorm,
        }
    }
}

fn parse_band(key: &str, value: &str) -> Result<(f64, f64)> {
    let (lo, hi) = value
        .split_once(',')
        .ok_or_else(|| Error::invalid(key, "expected `low,high`"))?;
    Ok((parse_value(key, lo)?, parse_value(key, hi)?))
}

impl AcParams {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "resample_hz" => self.resample_hz = parse_value(key, value)?,
            "bandpass_hz" => self.bandpass_hz = parse_band(key, value)?,
            "filter_order" => self.filter_order = parse_value(key, value)?,
            "deadband_g" => self.deadband_g = parse_value(key, value)?,
            "clip_g" => self.clip_g = parse_value(key, value)?,
            "quantum_g" => self.quantum_g = parse_value(key, value)?,
            "epoch_seconds" => self.epoch_seconds = parse_value(key, value)?,
            "axis_combine" => {
                self.axis_combine = match value.trim() {
                    "euclidean" | "euclidean_norm" | "norm" => AxisCombine::EuclideanNorm,
                    "sum" => AxisCombine::Sum,
                    _ => return Err(Error::invalid(key, "expected `euclidean` or `sum`")),
                }
            }
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimsParams {
    pub interp_hz: f64,
    pub bandpass_hz: (f64, f64),
    pub filter_order: usize,
    /// Per-axis epoch areas below this (g·s) are set to zero.
    pub truncation_floor: f64,
    pub epoch_seconds: f64,
}

impl Default for MimsParams {
    fn default() -> Self {
        Self {
            interp_hz: 100.0,
            bandpass_hz: (0.2, 5.0),
            filter_order: 4,
            truncation_floor: 1e-4,
            epoch_seconds: 60.0,
        }
    }
}

impl MimsParams {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "interp_hz" => self.interp_hz = parse_value(key, value)?,
            "bandpass_hz" => self.bandpass_hz = parse_band(key, value)?,
            "filter_order" => self.filter_order = parse_value(key, value)?,
            "truncation_floor" => self.truncation_floor = parse_value(key, value)?,
            "epoch_seconds" => self.epoch_seconds = parse_value(key, value)?,
            "extrapolation" => {
                if value.trim() != "off" {
                    return Err(Error::invalid(key, "only `off` is supported"));
                }
            }
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

fn samples_per_epoch(rate: f64, epoch_seconds: f64) -> usize {
    (rate * epoch_seconds).round() as usize
}

fn axis_as_f64(values: &[f32]) -> Vec<f64> {
    values.iter().map(|&v| f64::from(v)).collect()
}

/// Quantized counts of one axis for every full epoch.
fn axis_counts(axis: &[f32], rate: f64, filter: &SosFilter, p: &AcParams) -> Vec<u64> {
    let mut v = resample_values(&axis_as_f64(axis), rate, p.resample_hz);
    filter.filter_in_place(&mut v);
    let per_epoch = samples_per_epoch(p.resample_hz, p.epoch_seconds);
    v.chunks_exact(per_epoch)
        .map(|epoch| {
            epoch
                .iter()
                .map(|&s| {
                    let level = (s.abs() - p.deadband_g).max(0.0).min(p.clip_g);
                    (level / p.quantum_g).floor() as u64
                })
                .sum()
        })
        .collect()
}

/// Activity counts for every full epoch of `rec`; a trailing partial epoch is dropped.
pub fn activity_counts(rec: &TriaxialRecording, p: &AcParams) -> Result<Vec<u64>> {
    if rec.sample_rate_hz() < p.resample_hz {
        return Err(Error::invalid(
            "resample_hz",
            format!("recording rate {} Hz is below {} Hz", rec.sample_rate_hz(), p.resample_hz),
        ));
    }
    if rec.is_empty() {
        return Ok(Vec::new());
    }
    let filter = SosFilter::butterworth_bandpass(p.resample_hz, p.bandpass_hz.0, p.bandpass_hz.1, p.filter_order)?;
    let axes: Vec<Vec<u64>> = rec
        .axes()
        .iter()
        .map(|a| axis_counts(a, rec.sample_rate_hz(), &filter, p))
        .collect();
    let n = axes[0].len();
    Ok((0..n)
        .map(|e| match p.axis_combine {
            AxisCombine::Sum => axes.iter().map(|a| a[e]).sum(),
            AxisCombine::EuclideanNorm => {
                let ss: f64 = axes.iter().map(|a| (a[e] as f64).powi(2)).sum();
                ss.sqrt().round() as u64
            }
        })
        .collect())
}

/// Trapezoidal area of `values` over each full epoch. An epoch's interval
/// closes on the first sample of the next epoch when one exists.
fn epoch_areas(values: &[f64], rate: f64, per_epoch: usize) -> Vec<f64> {
    let dt = 1.0 / rate;
    let n_epochs = values.len() / per_epoch;
    (0..n_epochs)
        .map(|e| {
            let start = e * per_epoch;
            let end = ((e + 1) * per_epoch + 1).min(values.len());
            let seg = &values[start..end];
            let inner: f64 = seg.iter().sum();
            dt * (inner - 0.5 * (seg[0] + seg[seg.len() - 1]))
        })
        .collect()
}

/// MIMS for every full epoch of `rec`.
pub fn mims_units(rec: &TriaxialRecording, p: &MimsParams) -> Result<Vec<f64>> {
    let axes: Vec<Vec<f64>> = rec.axes().iter().map(|a| axis_as_f64(a)).collect();
    let refs: Vec<&[f64]> = axes.iter().map(Vec::as_slice).collect();
    mims_from_axes(&refs, rec.sample_rate_hz(), p)
}

/// MIMS over arbitrary axes sampled at `rate`.
pub fn mims_from_axes(axes: &[&[f64]], rate: f64, p: &MimsParams) -> Result<Vec<f64>> {
    if axes.iter().all(|a| a.is_empty()) {
        return Ok(Vec::new());
    }
    let filter = SosFilter::butterworth_bandpass(p.interp_hz, p.bandpass_hz.0, p.bandpass_hz.1, p.filter_order)?;
    let per_epoch = samples_per_epoch(p.interp_hz, p.epoch_seconds);
    let mut total: Vec<f64> = Vec::new();
    for axis in axes {
        let v = resample_values(axis, rate, p.interp_hz);
        let rectified: Vec<f64> = filter.filtfilt(&v).into_iter().map(f64::abs).collect();
        let areas = epoch_areas(&rectified, p.interp_hz, per_epoch);
        if total.is_empty() {
            total = vec![0.0; areas.len()];
        }
        for (t, a) in total.iter_mut().zip(areas) {
            if a >= p.truncation_floor {
                *t += a;
            }
        }
    }
    Ok(total)
}

/// `log10(1 + x)` for nonnegative `x`.
pub fn log10_plus1(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid("x", format!("log10_plus1 needs x >= 0, got {x}")));
    }
    Ok(x.ln_1p() / std::f64::consts::LN_10)
}

/// Adds AC, MIMS and per-detector steps to aligned minute records.
pub fn attach_minute_summaries(
    mut minutes: Vec<MinuteRecord>,
    ac: Option<&[u64]>,
    mims: Option<&[f64]>,
    steps: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<MinuteRecord>> {
    let n = minutes.len();
    let check = |what: &str, len: usize| -> Result<()> {
        if len != n {
            return Err(Error::Misaligned(format!("{what} has {len} epochs for {n} minutes")));
        }
        Ok(())
    };
    if let Some(a) = ac {
        check("ac", a.len())?;
    }
    if let Some(m) = mims {
        check("mims", m.len())?;
    }
    for (name, s) in steps {
        check(&format!("steps_{name}"), s.len())?;
    }
    for (i, rec) in minutes.iter_mut().enumerate() {
        if let Some(a) = ac {
            rec.ac = Some(a[i]);
        }
        if let Some(m) = mims {
            rec.mims = m[i];
        }
        for (name, s) in steps {
            rec.steps.insert(name.clone(), s[i]);
        }
    }
    Ok(minutes)
}

/// A run of whole minutes falling on one calendar day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayBlock {
    pub day_index: u32,
    pub first_minute_of_day: u16,
    pub recording: TriaxialRecording,
}

impl DayBlock {
    pub fn minutes(&self) -> usize {
        (self.recording.len() as f64 / (self.recording.sample_rate_hz() * 60.0)).round() as usize
    }
}

/// Regroups a chunked recording into calendar-day blocks of whole minutes.
///
/// Minute `m` covers `[start + 60m s, start + 60(m+1) s)` and belongs to the
/// date of its first instant; day 1 is the recording's start date. Block
/// boundaries depend only on the start time, never on the input chunking.
pub struct DayBlocker {
    start: NaiveDateTime,
    rate: f64,
    buffer: Option<TriaxialRecording>,
    minutes_done: u64,
}

impl DayBlocker {
    pub fn new(start: NaiveDateTime, sample_rate_hz: f64) -> Self {
        Self {
            start,
            rate: sample_rate_hz,
            buffer: None,
            minutes_done: 0,
        }
    }

    fn sample_of_minute(&self, m: u64) -> usize {
        (m as f64 * 60.0 * self.rate).round() as usize
    }

    fn minute_clock(&self, m: u64) -> NaiveDateTime {
        self.start + chrono::Duration::seconds(60 * m as i64)
    }

    fn day_index(&self, t: NaiveDateTime) -> u32 {
        let days = (t.date() - self.start.date()).num_days();
        (days + 1) as u32
    }

    /// Minutes from minute `m` to the first minute on a later date.
    fn minutes_left_in_day(&self, m: u64) -> u64 {
        let t = self.minute_clock(m);
        let next_midnight: NaiveDateTime = (t.date() + chrono::Days::new(1)).and_hms_opt(0, 0, 0).expect("midnight");
        let secs = (next_midnight - t).num_seconds() as u64;
        secs.div_ceil(60).max(1)
    }

    fn take(&mut self, minutes: u64) -> DayBlock {
        let m0 = self.minutes_done;
        let buf = self.buffer.as_mut().expect("buffer present");
        let base = (m0 as f64 * 60.0 * self.rate).round() as usize;
        let end = ((m0 + minutes) as f64 * 60.0 * self.rate).round() as usize - base;
        let mut recording = buf.slice(0, end);
        buf.drain_front(end);
        let t = self.minute_clock(m0);
        recording = TriaxialRecording::new(
            recording.subject_id().to_string(),
            t,
            self.rate,
            recording.x().to_vec(),
            recording.y().to_vec(),
            recording.z().to_vec(),
        )
        .expect("slice of a valid recording");
        self.minutes_done += minutes;
        DayBlock {
            day_index: self.day_index(t),
            first_minute_of_day: (t.hour() * 60 + t.minute()) as u16,
            recording,
        }
    }

    fn buffered_minutes(&self) -> u64 {
        let Some(buf) = &self.buffer else { return 0 };
        let base = self.sample_of_minute(self.minutes_done);
        let mut m = 0;
        while self.sample_of_minute(self.minutes_done + m + 1) - base <= buf.len() {
            m += 1;
        }
        m
    }

    /// Adds a chunk and returns any day blocks it completes.
    pub fn push(&mut self, chunk: &TriaxialRecording) -> Result<Vec<DayBlock>> {
        match &mut self.buffer {
            Some(buf) => buf.extend_from(chunk)?,
            None => self.buffer = Some(chunk.clone()),
        }
        let mut out = Vec::new();
        loop {
            let need = self.minutes_left_in_day(self.minutes_done);
            let have = self.sample_of_minute(self.minutes_done + need) - self.sample_of_minute(self.minutes_done);
            if self.buffer.as_ref().map_or(0, |b| b.len()) < have {
                break;
            }
            out.push(self.take(need));
        }
        Ok(out)
    }

    /// Emits the remaining whole minutes; a trailing partial minute is dropped.
    pub fn finish(mut self) -> Option<DayBlock> {
        let m = self.buffered_minutes();
        (m > 0).then(|| self.take(m))
    }
}

/// Minute records for one day block: AC, MIMS and every detector's steps.
/// Wear is `Unknown` and the quality flag is clear until merged with
/// minute-level labels.
pub fn summarize_block(
    block: &DayBlock,
    registry: &DetectorRegistry,
    ac: &AcParams,
    mims: &MimsParams,
) -> Result<(Vec<MinuteRecord>, DetectorRun)> {
    let n = block.minutes();
    let subject = block.recording.subject_id().to_string();
    let minutes = (0..n)
        .map(|i| {
            let mod_ = (block.first_minute_of_day as usize + i).min(MINUTES_PER_DAY as usize - 1) as u16;
            MinuteRecord::new(subject.clone(), block.day_index, mod_, WearState::Unknown, false, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = activity_counts(&block.recording, ac)?;
    let units = mims_units(&block.recording, mims)?;
    let run = run_detectors(&block.recording, registry)?;
    let steps: BTreeMap<String, Vec<f64>> = run
        .results
        .iter()
        .map(|(name, s)| {
            let mut per_minute = s.per_minute();
            per_minute.resize(n, 0.0);
            (name.clone(), per_minute)
        })
        .collect();
    let records = attach_minute_summaries(minutes, Some(&counts), Some(&units), &steps)?;
    Ok((records, run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SosFilter;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2012, 5, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn rec(rate: f64, secs: f64, f: impl Fn(f64) -> [f64; 3]) -> TriaxialRecording {
        let n = (secs * rate).round() as usize;
        let mut axes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for i in 0..n {
            let v = f(i as f64 / rate);
            for k in 0..3 {
                axes[k].push(v[k] as f32);
            }
        }
        let [x, y, z] = axes;
        TriaxialRecording::new("s", t0(), rate, x, y, z).unwrap()
    }

    #[test]
    fn gravity_gives_zero_ac_and_mims() {
        let r = rec(80.0, 180.0, |_| [0.0, 0.0, 1.0]);
        assert_eq!(activity_counts(&r, &AcParams::default()).unwrap(), vec![0, 0, 0]);
        for m in mims_units(&r, &MimsParams::default()).unwrap() {
            assert!(m.abs() < 1e-6, "{m}");
        }
    }

    #[test]
    fn small_signal_falls_in_deadband() {
        let r = rec(80.0, 120.0, |t| [0.03 * (TAU * t).sin(), 0.0, 1.0]);
        assert_eq!(activity_counts(&r, &AcParams::default()).unwrap(), vec![0, 0]);
    }

    /// Straight-line restatement of the count pipeline.
    fn naive_counts(r: &TriaxialRecording, p: &AcParams) -> Vec<u64> {
        let filter = SosFilter::butterworth_bandpass(p.resample_hz, p.bandpass_hz.0, p.bandpass_hz.1, p.filter_order).unwrap();
        let mut per_axis = Vec::new();
        for axis in r.axes() {
            let raw: Vec<f64> = axis.iter().map(|&v| v as f64).collect();
            let step = r.sample_rate_hz() / p.resample_hz;
            let n_out = (raw.len() as f64 / step + 1e-9).floor() as usize;
            let mut out = Vec::new();
            for j in 0..n_out {
                let pos = j as f64 * step;
                let i = pos.floor() as usize;
                out.push(if i + 1 >= raw.len() {
                    raw[raw.len() - 1]
                } else {
                    raw[i] + (pos - i as f64) * (raw[i + 1] - raw[i])
                });
            }
            filter.filter_in_place(&mut out);
            let mut counts = Vec::new();
            let epoch = (p.resample_hz * p.epoch_seconds) as usize;
            let mut e = 0;
            while (e + 1) * epoch <= out.len() {
                let mut c = 0u64;
                for s in &out[e * epoch..(e + 1) * epoch] {
                    let mut v = s.abs() - p.deadband_g;
                    if v < 0.0 {
                        v = 0.0;
                    }
                    if v > p.clip_g {
                        v = p.clip_g;
                    }
                    c += (v / p.quantum_g).floor() as u64;
                }
                counts.push(c);
                e += 1;
            }
            per_axis.push(counts);
        }
        (0..per_axis[0].len())
            .map(|e| {
                let ss: f64 = per_axis.iter().map(|a| (a[e] * a[e]) as f64).sum();
                ss.sqrt().round() as u64
            })
            .collect()
    }

    #[test]
    fn counts_match_naive_pipeline() {
        let r = rec(80.0, 60.0, |t| [0.5 * (TAU * 1.2 * t).sin(), 0.2 * (TAU * 0.8 * t).cos(), 1.0]);
        let p = AcParams::default();
        let got = activity_counts(&r, &p).unwrap();
        assert_eq!(got, naive_counts(&r, &p));
        assert!(got[0] > 0);
    }

    #[test]
    fn trailing_zeros_do_not_change_counts() {
        let r = rec(80.0, 120.0, |t| [0.4 * (TAU * 1.5 * t).sin(), 0.1, 1.0]);
        let base = activity_counts(&r, &AcParams::default()).unwrap();
        let pad = rec(80.0, 59.9, |_| [0.0, 0.0, 0.0]);
        let mut longer = r.clone();
        longer.extend_from(&pad).unwrap();
        assert_eq!(activity_counts(&longer, &AcParams::default()).unwrap(), base);
    }

    #[test]
    fn mims_matches_quadrature_of_steady_state() {
        let p = MimsParams::default();
        let r = rec(100.0, 600.0, |t| [0.3 * (TAU * t).sin(), 0.0, 1.0]);
        let got = mims_units(&r, &p).unwrap();
        let filter = SosFilter::butterworth_bandpass(100.0, 0.2, 5.0, 4).unwrap();
        let gain = filter.response(1.0, 100.0).norm_sqr();
        let minute = 5;
        let f = |i: usize| (gain * 0.3 * (TAU * i as f64 / 100.0).sin()).abs();
        let (a, b) = (minute * 6000, (minute + 1) * 6000);
        let oracle: f64 = (a..b).map(|i| 0.005 * (f(i) + f(i + 1))).sum();
        assert!(((got[minute] - oracle) / oracle).abs() < 1e-6, "{} vs {oracle}", got[minute]);
        assert!((oracle - 60.0 * gain * 0.3 * 2.0 / PI).abs() / oracle < 1e-3);
    }

    #[test]
    fn mims_doubles_with_amplitude() {
        let p = MimsParams::default();
        let a = mims_units(&rec(80.0, 120.0, |t| [0.2 * (TAU * 1.3 * t).sin(), 0.1 * (TAU * 2.1 * t).sin(), 1.0]), &p).unwrap();
        let b = mims_units(&rec(80.0, 120.0, |t| [0.4 * (TAU * 1.3 * t).sin(), 0.2 * (TAU * 2.1 * t).sin(), 1.0]), &p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y / x - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn log_transform_examples() {
        assert_eq!(log10_plus1(0.0).unwrap(), 0.0);
        assert!((log10_plus1(9.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((log10_plus1(99.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(log10_plus1(-1.0).is_err());
        let m = MinuteRecord::new("s", 1, 0, WearState::WakeWear, false, 3.2).unwrap();
        assert!((m.log10_mims() - 4.2f64.log10()).abs() < 1e-15);
    }

    #[test]
    fn attach_checks_alignment() {
        let minutes: Vec<MinuteRecord> = (0..1440)
            .map(|m| MinuteRecord::new("s", 1, m, WearState::WakeWear, false, 0.0).unwrap())
            .collect();
        let ac = vec![3u64; 1440];
        let mims = vec![1.5; 1440];
        let mut steps = BTreeMap::new();
        steps.insert("spectral".to_string(), vec![10.0; 1440]);
        let out = attach_minute_summaries(minutes.clone(), Some(&ac), Some(&mims), &steps).unwrap();
        assert_eq!(out.len(), 1440);
        assert_eq!(out[7].ac, Some(3));
        assert_eq!(out[7].steps["spectral"], 10.0);
        assert!(matches!(
            attach_minute_summaries(minutes, Some(&ac[..1439]), None, &steps),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn day_blocks_follow_the_calendar() {
        let start = NaiveDate::from_ymd_opt(2012, 5, 1).unwrap().and_hms_opt(23, 58, 30).unwrap();
        let rate = 2.0;
        let n = (60.0 * rate) as usize * 5 + 7;
        let full = TriaxialRecording::new("s", start, rate, (0..n).map(|i| i as f32).collect(), vec![0.0; n], vec![0.0; n]).unwrap();
        let collect = |chunk: usize| {
            let mut b = DayBlocker::new(start, rate);
            let mut out = Vec::new();
            let mut i = 0;
            while i < n {
                out.extend(b.push(&full.slice(i, i + chunk)).unwrap());
                i += chunk;
            }
            out.extend(b.finish());
            out
        };
        let blocks = collect(13);
        assert_eq!(blocks, collect(1000));
        assert_eq!(blocks.len(), 2);
        assert_eq!((blocks[0].day_index, blocks[0].first_minute_of_day, blocks[0].minutes()), (1, 1438, 2));
        assert_eq!((blocks[1].day_index, blocks[1].first_minute_of_day, blocks[1].minutes()), (2, 0, 3));
        assert_eq!(blocks[1].recording.x()[0], 240.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn mims_is_scale_covariant(alpha in 0.2f64..5.0, f in 0.5f64..4.0, amp in 0.05f64..0.5) {
            let p = MimsParams::default();
            let n = 12_000;
            let x: Vec<f64> = (0..n).map(|i| amp * (TAU * f * i as f64 / 100.0).sin()).collect();
            let y: Vec<f64> = (0..n).map(|i| 0.5 * amp * (TAU * f * i as f64 / 100.0).cos()).collect();
            let ax: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            let ay: Vec<f64> = y.iter().map(|v| alpha * v).collect();
            let a = mims_from_axes(&[&x, &y], 100.0, &p).unwrap();
            let b = mims_from_axes(&[&ax, &ay], 100.0, &p).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((v - alpha * u).abs() <= 1e-9 * v.abs());
            }
        }

        #[test]
        fn log_transform_is_monotone(x in 0.0f64..1e6, d in 1e-6f64..1e3) {
            prop_assert!(log10_plus1(x).unwrap() < log10_plus1(x + d).unwrap());
        }
    }
}
