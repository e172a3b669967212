//! Step detectors operating on the acceleration vector magnitude.
//!
//! Three families are provided: local-peak detection with period, similarity
//! and continuity filters; spectral cadence estimation over fixed windows;
//! and stride-template matching by normalized cross-correlation.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use crate::dsp::{resample_values, vector_magnitude, Periodogram, UniformSeries};
use crate::error::{Error, Result};
use crate::model::{parse_bool, parse_value, TriaxialRecording};

pub const PEAK_ORIGINAL: &str = "peak_original";
pub const PEAK_REVISED: &str = "peak_revised";
pub const SPECTRAL: &str = "spectral";
pub const TEMPLATE: &str = "template";

/// Names reserved by the built-in detectors.
pub const BUILTIN_DETECTORS: &[&str] = &[PEAK_ORIGINAL, PEAK_REVISED, SPECTRAL, TEMPLATE];

/// Upper bound on plausible steps in one second.
pub const MAX_STEPS_PER_SECOND: f64 = 5.0;

/// Per-second step counts aligned to the start of the analysed signal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepSeries {
    pub detector_name: String,
    pub per_second: Vec<f64>,
}

impl StepSeries {
    pub fn zeros(detector_name: &str, seconds: usize) -> Self {
        Self {
            detector_name: detector_name.to_string(),
            per_second: vec![0.0; seconds],
        }
    }

    pub fn len(&self) -> usize {
        self.per_second.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_second.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.per_second.iter().sum()
    }

    /// Sums of consecutive 60-second blocks; a trailing partial minute is kept.
    pub fn per_minute(&self) -> Vec<f64> {
        self.per_second.chunks(60).map(|c| c.iter().sum()).collect()
    }
}

fn whole_seconds(s: &UniformSeries) -> usize {
    (s.len() as f64 / s.sample_rate_hz - 1e-9).ceil().max(0.0) as usize
}

fn resampled(vm: &UniformSeries, target_hz: f64) -> Vec<f64> {
    resample_values(&vm.values, vm.sample_rate_hz, target_hz)
}

fn set_positive(slot: &mut f64, key: &str, value: &str) -> Result<()> {
    let v: f64 = parse_value(key, value)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(key, "must be positive"));
    }
    *slot = v;
    Ok(())
}

/// Parameters of the local-peak detector.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakParams {
    pub target_hz: f64,
    pub k_neighbors: usize,
    pub mag_threshold_g: f64,
    pub period_min_samples: usize,
    pub period_max_samples: usize,
    /// Largest allowed amplitude gap between adjacent peaks.
    pub similarity_threshold_g: f64,
    /// Inter-peak windows inspected before each peak.
    pub continuity_window: usize,
    /// Windows among those that must pass the variance test.
    pub continuity_required: usize,
    pub variance_threshold: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            target_hz: 15.0,
            k_neighbors: 3,
            mag_threshold_g: 1.2,
            period_min_samples: 5,
            period_max_samples: 15,
            similarity_threshold_g: 0.5,
            continuity_window: 4,
            continuity_required: 3,
            variance_threshold: 0.001,
        }
    }
}

impl PeakParams {
    pub fn original() -> Self {
        Self::default()
    }

    /// Named slot for the revised parameter set; starts from the original values.
    pub fn revised() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "target_hz" => set_positive(&mut self.target_hz, key, value)?,
            "k_neighbors" => self.k_neighbors = parse_value(key, value)?,
            "mag_threshold_g" => set_positive(&mut self.mag_threshold_g, key, value)?,
            "period_min_samples" => self.period_min_samples = parse_value(key, value)?,
            "period_max_samples" => self.period_max_samples = parse_value(key, value)?,
            "similarity_threshold_g" => set_positive(&mut self.similarity_threshold_g, key, value)?,
            "continuity_window" => self.continuity_window = parse_value(key, value)?,
            "continuity_required" => self.continuity_required = parse_value(key, value)?,
            "variance_threshold" => set_positive(&mut self.variance_threshold, key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.period_min_samples >= self.period_max_samples {
            return Err(Error::invalid("period_min_samples", "must be below period_max_samples"));
        }
        if self.k_neighbors == 0 {
            return Err(Error::invalid("k_neighbors", "must be at least 1"));
        }
        if self.continuity_required > self.continuity_window {
            return Err(Error::invalid("continuity_required", "cannot exceed continuity_window"));
        }
        Ok(())
    }
}

/// Sample variance (n - 1 denominator); zero for fewer than two samples.
fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// Gap from each peak to its successor; the last peak reuses the previous gap.
fn forward_gaps(peaks: &[usize]) -> Vec<usize> {
    let mut gaps: Vec<usize> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(&last) = gaps.last() {
        gaps.push(last);
    } else if !peaks.is_empty() {
        gaps.push(0);
    }
    gaps
}

/// Sample indices of retained step peaks in `signal`.
pub fn peak_step_indices(signal: &[f64], p: &PeakParams) -> Vec<usize> {
    let n = signal.len();
    let k = p.k_neighbors;
    if n < 2 * k + 1 {
        return Vec::new();
    }
    let mut peaks: Vec<usize> = (k..n - k)
        .filter(|&i| {
            let v = signal[i];
            v > p.mag_threshold_g && (i - k..=i + k).all(|j| j == i || v > signal[j])
        })
        .collect();

    let gaps = forward_gaps(&peaks);
    peaks = peaks
        .iter()
        .zip(&gaps)
        .filter(|&(_, &g)| (p.period_min_samples..=p.period_max_samples).contains(&g))
        .map(|(&i, _)| i)
        .collect();

    let mut similar = Vec::with_capacity(peaks.len());
    for (j, &i) in peaks.iter().enumerate() {
        let neighbour = if j + 1 < peaks.len() {
            peaks[j + 1]
        } else if j > 0 {
            peaks[j - 1]
        } else {
            i
        };
        if (signal[i] - signal[neighbour]).abs() <= p.similarity_threshold_g {
            similar.push(i);
        }
    }

    let window = p.continuity_window;
    let mut steps = Vec::with_capacity(similar.len());
    for j in 0..similar.len() {
        if p.continuity_required == 0 {
            steps.push(similar[j]);
            continue;
        }
        if j < window {
            continue;
        }
        let passing = (0..window)
            .filter(|&w| {
                let (a, b) = (similar[j - w - 1], similar[j - w]);
                sample_variance(&signal[a..b]) > p.variance_threshold
            })
            .count();
        if passing >= p.continuity_required {
            steps.push(similar[j]);
        }
    }
    steps
}

pub fn detect_steps_peak(vm: &UniformSeries, p: &PeakParams) -> StepSeries {
    detect_steps_peak_named(vm, p, PEAK_ORIGINAL)
}

fn detect_steps_peak_named(vm: &UniformSeries, p: &PeakParams, name: &str) -> StepSeries {
    let mut out = StepSeries::zeros(name, whole_seconds(vm));
    if vm.is_empty() {
        return out;
    }
    let signal = resampled(vm, p.target_hz);
    for i in peak_step_indices(&signal, p) {
        let second = ((i as f64 / p.target_hz) as usize).min(out.len() - 1);
        out.per_second[second] += 1.0;
    }
    out
}

/// Parameters of the spectral cadence detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParams {
    pub window_seconds: f64,
    pub cadence_band_hz: (f64, f64),
    pub activity_std_min_g: f64,
    pub peak_prominence_ratio: f64,
    pub harmonic_check: bool,
}

impl Default for SpectralParams {
    fn default() -> Self {
        Self {
            window_seconds: 10.0,
            cadence_band_hz: (1.4, 2.3),
            activity_std_min_g: 0.025,
            peak_prominence_ratio: 3.0,
            harmonic_check: true,
        }
    }
}

impl SpectralParams {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "window_seconds" => set_positive(&mut self.window_seconds, key, value)?,
            "cadence_band_hz" => {
                let (lo, hi) = value
                    .split_once(',')
                    .ok_or_else(|| Error::invalid(key, "expected `low,high`"))?;
                self.cadence_band_hz = (parse_value(key, lo)?, parse_value(key, hi)?);
            }
            "cadence_low_hz" => set_positive(&mut self.cadence_band_hz.0, key, value)?,
            "cadence_high_hz" => set_positive(&mut self.cadence_band_hz.1, key, value)?,
            "activity_std_min_g" => set_positive(&mut self.activity_std_min_g, key, value)?,
            "peak_prominence_ratio" => set_positive(&mut self.peak_prominence_ratio, key, value)?,
            "harmonic_check" => self.harmonic_check = parse_bool(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.cadence_band_hz;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::invalid("cadence_band_hz", "need 0 < low < high"));
        }
        if self.window_seconds < 4.0 {
            return Err(Error::invalid("window_seconds", "must be at least 4"));
        }
        Ok(())
    }
}

/// Cadence of one window in Hz, or `None` when the window is not gait.
fn window_cadence(window: &[f64], rate: f64, p: &SpectralParams, fft: &mut Periodogram, powers: &mut Vec<f64>) -> Option<f64> {
    let n = window.len();
    let mean = window.iter().sum::<f64>() / n as f64;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var.sqrt() < p.activity_std_min_g {
        return None;
    }
    fft.compute(window, powers);
    let df = rate / n as f64;
    let (lo, hi) = p.cadence_band_hz;
    let band: Vec<usize> = (0..powers.len())
        .filter(|&k| {
            let f = k as f64 * df;
            f >= lo - 1e-9 && f <= hi + 1e-9
        })
        .collect();
    if band.is_empty() {
        return None;
    }
    let mut best = band[0];
    for &k in &band {
        if powers[k] > powers[best] {
            best = k;
        }
    }
    let mut in_band: Vec<f64> = band.iter().map(|&k| powers[k]).collect();
    in_band.sort_by(f64::total_cmp);
    let m = in_band.len();
    let median = if m % 2 == 1 {
        in_band[m / 2]
    } else {
        0.5 * (in_band[m / 2 - 1] + in_band[m / 2])
    };
    if powers[best] < p.peak_prominence_ratio * median {
        return None;
    }
    let mut cadence = best as f64 * df;
    if p.harmonic_check {
        let half = cadence / 2.0;
        if half >= lo - 1e-9 {
            let k = (half / df).round() as usize;
            if powers[k] > powers[best] {
                cadence = k as f64 * df;
            }
        }
    }
    Some(cadence)
}

pub fn detect_steps_spectral(vm: &UniformSeries, p: &SpectralParams) -> StepSeries {
    let mut out = StepSeries::zeros(SPECTRAL, whole_seconds(vm));
    let rate = vm.sample_rate_hz;
    let win = (p.window_seconds * rate).round() as usize;
    if win < 8 || vm.len() < win {
        return out;
    }
    let mut fft = Periodogram::new(win);
    let mut powers = Vec::with_capacity(win / 2 + 1);
    let mut start = 0;
    while start + win <= vm.len() {
        if let Some(cadence) = window_cadence(&vm.values[start..start + win], rate, p, &mut fft, &mut powers) {
            let t0 = start as f64 / rate;
            let t1 = (start + win) as f64 / rate;
            let steps_per_second = cadence;
            let first = t0.floor() as usize;
            let last = ((t1 - 1e-9).ceil() as usize).min(out.len());
            for s in first..last {
                let overlap = (t1.min((s + 1) as f64) - t0.max(s as f64)).max(0.0);
                out.per_second[s] += steps_per_second * overlap;
            }
        }
        start += win;
    }
    out
}

/// Parameters of the stride-template detector.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateParams {
    /// Stride shapes sampled on `[0, 1)`; each is zero-mean with unit norm.
    pub templates: Vec<Vec<f64>>,
    pub stride_duration_grid_seconds: Vec<f64>,
    pub correlation_threshold: f64,
    pub smoothing_window_seconds: f64,
    pub resample_hz: f64,
    /// Smallest peak-to-peak range of a smoothed stride segment.
    pub min_stride_amplitude_g: f64,
    /// Correlations closer than this are ranked as ties.
    pub correlation_tie_tolerance: f64,
}

const TEMPLATE_POINTS: usize = 200;

impl Default for TemplateParams {
    fn default() -> Self {
        Self {
            templates: default_templates(),
            stride_duration_grid_seconds: (7..=18).map(|d| d as f64 / 10.0).collect(),
            correlation_threshold: 0.7,
            smoothing_window_seconds: 0.22,
            resample_hz: 20.0,
            min_stride_amplitude_g: 0.1,
            correlation_tie_tolerance: 0.03,
        }
    }
}

impl TemplateParams {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "correlation_threshold" => {
                let v: f64 = parse_value(key, value)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::invalid(key, "must lie in (0, 1]"));
                }
                self.correlation_threshold = v;
            }
            "smoothing_window_seconds" => set_positive(&mut self.smoothing_window_seconds, key, value)?,
            "resample_hz" => set_positive(&mut self.resample_hz, key, value)?,
            "min_stride_amplitude_g" => {
                let v: f64 = parse_value(key, value)?;
                if !(v >= 0.0) {
                    return Err(Error::invalid(key, "must be nonnegative"));
                }
                self.min_stride_amplitude_g = v;
            }
            "stride_duration_grid_seconds" => {
                let grid = value
                    .split(',')
                    .map(|v| parse_value::<f64>(key, v))
                    .collect::<Result<Vec<_>>>()?;
                if grid.is_empty() || grid.iter().any(|&d| !(d > 0.0)) {
                    return Err(Error::invalid(key, "durations must be positive"));
                }
                self.stride_duration_grid_seconds = grid;
            }
            "correlation_tie_tolerance" => set_positive(&mut self.correlation_tie_tolerance, key, value)?,
            "file" => self.templates = load_templates(Path::new(value.trim()))?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::invalid("templates", "at least one template required"));
        }
        if self.stride_duration_grid_seconds.is_empty() {
            return Err(Error::invalid("stride_duration_grid_seconds", "empty grid"));
        }
        Ok(())
    }
}

/// Removes the mean and scales to unit Euclidean norm.
pub fn normalize_template(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("template needs at least two finite values".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::InvalidInput("template is constant".into()));
    }
    Ok(centred.into_iter().map(|v| v / norm).collect())
}

/// Single-lobe and double-lobe stride shapes.
pub fn default_templates() -> Vec<Vec<f64>> {
    use std::f64::consts::TAU;
    let grid = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..TEMPLATE_POINTS)
            .map(|i| f((i as f64 + 0.5) / TEMPLATE_POINTS as f64))
            .collect()
    };
    let single = grid(&|t| -(TAU * t).cos());
    let double = grid(&|t| -(2.0 * TAU * t).cos());
    vec![
        normalize_template(&single).expect("nonconstant"),
        normalize_template(&double).expect("nonconstant"),
    ]
}

/// Reads templates stored one per column (comma, tab or space separated).
/// A non-numeric first row is treated as a header.
pub fn load_templates(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line
            .split(|c: char| c == ',' || c == '\t' || c == ' ')
            .filter(|c| !c.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if columns.is_empty() => continue,
            Err(_) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx as u64 + 1,
                    reason: "non-numeric template value".into(),
                })
            }
        };
        if columns.is_empty() {
            columns = vec![Vec::new(); values.len()];
        }
        if values.len() != columns.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx as u64 + 1,
                reason: format!("expected {} columns", columns.len()),
            });
        }
        for (c, v) in columns.iter_mut().zip(values) {
            c.push(v);
        }
    }
    if columns.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no templates", path.display())));
    }
    columns.iter().map(|c| normalize_template(c)).collect()
}

/// Centered moving average whose window shrinks at the edges.
fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let n = values.len();
    if width <= 1 || n == 0 {
        return values.to_vec();
    }
    let before = (width - 1) / 2;
    let after = width - 1 - before;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(before);
            let b = (i + after + 1).min(n);
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

/// Template resampled to `len` points and renormalized.
fn scaled_template(template: &[f64], len: usize) -> Vec<f64> {
    let m = template.len();
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            let pos = ((i as f64 + 0.5) / len as f64) * m as f64 - 0.5;
            let pos = pos.clamp(0.0, (m - 1) as f64);
            let j = pos.floor() as usize;
            if j + 1 >= m {
                template[m - 1]
            } else {
                let f = pos - j as f64;
                template[j] * (1.0 - f) + template[j + 1] * f
            }
        })
        .collect();
    normalize_template(&raw).unwrap_or_else(|_| vec![0.0; len])
}

/// An accepted stride: onset sample, length in samples and correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stride {
    pub onset: usize,
    pub len: usize,
    pub correlation: f64,
}

/// Candidate strides: local correlation maxima at or above the threshold.
fn stride_candidates(signal: &[f64], rate: f64, p: &TemplateParams) -> Vec<Stride> {
    let n = signal.len();
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (i, v) in signal.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
        prefix_sq[i + 1] = prefix_sq[i] + v * v;
    }
    let mut out = Vec::new();
    let mut corr = Vec::new();
    for &duration in &p.stride_duration_grid_seconds {
        let len = (duration * rate).round() as usize;
        if len < 3 || len > n {
            continue;
        }
        let positions = n - len + 1;
        let mut best = vec![f64::NEG_INFINITY; positions];
        let mut amplitude_ok = vec![false; positions];
        for (a, ok) in amplitude_ok.iter_mut().enumerate() {
            let seg = &signal[a..a + len];
            let (lo, hi) = seg.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            *ok = hi - lo >= p.min_stride_amplitude_g;
        }
        for template in &p.templates {
            let t = scaled_template(template, len);
            corr.clear();
            for a in 0..positions {
                if !amplitude_ok[a] {
                    corr.push(f64::NEG_INFINITY);
                    continue;
                }
                let sum = prefix[a + len] - prefix[a];
                let ss = (prefix_sq[a + len] - prefix_sq[a]) - sum * sum / len as f64;
                if ss <= 1e-12 {
                    corr.push(f64::NEG_INFINITY);
                    continue;
                }
                let dot: f64 = t.iter().zip(&signal[a..a + len]).map(|(x, y)| x * y).sum();
                corr.push(dot / ss.sqrt());
            }
            for (b, c) in best.iter_mut().zip(&corr) {
                if *c > *b {
                    *b = *c;
                }
            }
        }
        let tol = 1e-9;
        for a in 0..positions {
            let c = best[a];
            if c < p.correlation_threshold {
                continue;
            }
            let left = a == 0 || best[a - 1] < c - tol;
            let right = a + 1 == positions || best[a + 1] <= c + tol;
            if left && right {
                out.push(Stride {
                    onset: a,
                    len,
                    correlation: c,
                });
            }
        }
    }
    out
}

/// Greedy non-overlapping stride selection by descending correlation,
/// ties resolved toward the earlier onset and then the shorter stride.
pub fn template_strides(signal: &[f64], rate: f64, p: &TemplateParams) -> Vec<Stride> {
    let width = 2 * (p.smoothing_window_seconds * rate / 2.0).round() as usize + 1;
    let smooth = moving_average(signal, width);
    let mean = if smooth.is_empty() {
        0.0
    } else {
        smooth.iter().sum::<f64>() / smooth.len() as f64
    };
    let centred: Vec<f64> = smooth.iter().map(|v| v - mean).collect();
    let mut candidates = stride_candidates(&centred, rate, p);
    let tol = p.correlation_tie_tolerance.max(f64::EPSILON);
    let rank = |c: f64| (c / tol).round() as i64;
    candidates.sort_by(|a, b| {
        rank(b.correlation)
            .cmp(&rank(a.correlation))
            .then(a.onset.cmp(&b.onset))
            .then(a.len.cmp(&b.len))
    });
    let mut taken = vec![false; signal.len()];
    let mut accepted = Vec::new();
    for c in candidates {
        let span = c.onset..c.onset + c.len;
        if taken[span.clone()].iter().any(|&t| t) {
            continue;
        }
        taken[span].iter_mut().for_each(|t| *t = true);
        accepted.push(c);
    }
    accepted.sort_by_key(|s| s.onset);
    accepted
}

pub fn detect_steps_template(vm: &UniformSeries, p: &TemplateParams) -> StepSeries {
    let mut out = StepSeries::zeros(TEMPLATE, whole_seconds(vm));
    if vm.is_empty() {
        return out;
    }
    let rate = p.resample_hz;
    let signal = resampled(vm, rate);
    for s in template_strides(&signal, rate, p) {
        let mid = (s.onset as f64 + s.len as f64 / 2.0) / rate;
        let second = (mid as usize).min(out.len() - 1);
        out.per_second[second] += 2.0;
    }
    out
}

/// A named step detector over the vector magnitude.
pub trait StepDetector: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, vm: &UniformSeries) -> StepSeries;
}

#[derive(Debug, Clone)]
pub struct PeakDetector {
    pub name: String,
    pub params: PeakParams,
}

impl StepDetector for PeakDetector {
    fn name(&self) -> &str {
        &self.name
    }

    fn detect(&self, vm: &UniformSeries) -> StepSeries {
        detect_steps_peak_named(vm, &self.params, &self.name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SpectralDetector {
    pub params: SpectralParams,
}

impl StepDetector for SpectralDetector {
    fn name(&self) -> &str {
        SPECTRAL
    }

    fn detect(&self, vm: &UniformSeries) -> StepSeries {
        detect_steps_spectral(vm, &self.params)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TemplateDetector {
    pub params: TemplateParams,
}

impl StepDetector for TemplateDetector {
    fn name(&self) -> &str {
        TEMPLATE
    }

    fn detect(&self, vm: &UniformSeries) -> StepSeries {
        detect_steps_template(vm, &self.params)
    }
}

/// Parameters for every built-in detector plus the enabled subset.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub enabled: Vec<String>,
    pub peak_original: PeakParams,
    pub peak_revised: PeakParams,
    pub spectral: SpectralParams,
    pub template: TemplateParams,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            enabled: BUILTIN_DETECTORS.iter().map(|s| s.to_string()).collect(),
            peak_original: PeakParams::original(),
            peak_revised: PeakParams::revised(),
            spectral: SpectralParams::default(),
            template: TemplateParams::default(),
        }
    }
}

impl DetectorConfig {
    /// Applies `detectors = a,b` or a dotted `<detector>.<param>` key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key == "detectors" {
            let names: Vec<String> = value
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if let Some(bad) = names.iter().find(|n| !BUILTIN_DETECTORS.contains(&n.as_str())) {
                return Err(Error::invalid("detectors", format!("unknown detector `{bad}`")));
            }
            self.enabled = names;
            return Ok(());
        }
        let (family, param) = key.split_once('.').ok_or_else(|| Error::UnknownKey(key.to_string()))?;
        let r = match family {
            PEAK_ORIGINAL => self.peak_original.set(param, value),
            PEAK_REVISED => self.peak_revised.set(param, value),
            SPECTRAL => self.spectral.set(param, value),
            TEMPLATE => self.template.set(param, value),
            _ => Err(Error::UnknownKey(key.to_string())),
        };
        r.map_err(|e| match e {
            Error::UnknownKey(_) => Error::UnknownKey(key.to_string()),
            Error::InvalidValue { reason, .. } => Error::invalid(key, reason),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.peak_original.validate()?;
        self.peak_revised.validate()?;
        self.spectral.validate()?;
        self.template.validate()
    }

    pub fn registry(&self) -> Result<DetectorRegistry> {
        self.validate()?;
        let mut reg = DetectorRegistry::default();
        for name in &self.enabled {
            let det: Box<dyn StepDetector> = match name.as_str() {
                PEAK_ORIGINAL => Box::new(PeakDetector {
                    name: PEAK_ORIGINAL.into(),
                    params: self.peak_original.clone(),
                }),
                PEAK_REVISED => Box::new(PeakDetector {
                    name: PEAK_REVISED.into(),
                    params: self.peak_revised.clone(),
                }),
                SPECTRAL => Box::new(SpectralDetector {
                    params: self.spectral.clone(),
                }),
                TEMPLATE => Box::new(TemplateDetector {
                    params: self.template.clone(),
                }),
                other => return Err(Error::invalid("detectors", format!("unknown detector `{other}`"))),
            };
            reg.push(det);
        }
        Ok(reg)
    }
}

/// Ordered collection of detectors.
#[derive(Default)]
pub struct DetectorRegistry {
    detectors: Vec<Box<dyn StepDetector>>,
}

impl DetectorRegistry {
    pub fn push(&mut self, detector: Box<dyn StepDetector>) {
        self.detectors.push(detector);
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.detectors.iter().map(|d| d.name().to_string()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn StepDetector> {
        self.detectors.iter().map(|d| d.as_ref())
    }
}

/// Outcome of running a registry over one recording.
#[derive(Debug, Clone, Default)]
pub struct DetectorRun {
    pub results: BTreeMap<String, StepSeries>,
    pub errors: BTreeMap<String, String>,
    pub timings: BTreeMap<String, Duration>,
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "detector panicked".to_string()
    }
}

/// Runs every detector on a shared vector magnitude; panics are caught and
/// reported per detector.
pub fn run_detectors_on(vm: &UniformSeries, registry: &DetectorRegistry) -> Result<DetectorRun> {
    if registry.is_empty() {
        return Err(Error::InvalidInput("detector registry is empty".into()));
    }
    let mut run = DetectorRun::default();
    for det in registry.iter() {
        let name = det.name().to_string();
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| det.detect(vm)));
        run.timings.insert(name.clone(), started.elapsed());
        match outcome {
            Ok(series) => {
                run.results.insert(name, series);
            }
            Err(payload) => {
                run.errors.insert(name, panic_message(payload.as_ref()));
            }
        }
    }
    Ok(run)
}

pub fn run_detectors(rec: &TriaxialRecording, registry: &DetectorRegistry) -> Result<DetectorRun> {
    run_detectors_on(&vector_magnitude(rec), registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn series(rate: f64, secs: f64, mut f: impl FnMut(f64) -> f64) -> UniformSeries {
        let n = (secs * rate).round() as usize;
        UniformSeries::new(rate, (0..n).map(|i| f(i as f64 / rate)).collect()).unwrap()
    }

    fn gait(rate: f64, secs: f64, amp: f64) -> UniformSeries {
        series(rate, secs, |t| 1.0 + amp * (TAU * 2.0 * t).sin())
    }

    #[test]
    fn peak_constant_gives_nothing() {
        let s = series(15.0, 60.0, |_| 1.0);
        let out = detect_steps_peak(&s, &PeakParams::default());
        assert_eq!(out.len(), 60);
        assert_eq!(out.total(), 0.0);
    }

    #[test]
    fn peak_counts_synthetic_gait() {
        let out = detect_steps_peak(&gait(15.0, 60.0, 0.4), &PeakParams::default());
        assert!((out.total() - 120.0).abs() <= 6.0, "{}", out.total());
        let weak = detect_steps_peak(&gait(15.0, 60.0, 0.05), &PeakParams::default());
        assert_eq!(weak.total(), 0.0);
    }

    #[test]
    fn peak_works_from_native_rate() {
        let out = detect_steps_peak(&gait(80.0, 60.0, 0.4), &PeakParams::default());
        assert!((out.total() - 120.0).abs() <= 6.0, "{}", out.total());
    }

    #[test]
    fn spectral_cadence() {
        let p = SpectralParams::default();
        let rest = detect_steps_spectral(&series(80.0, 60.0, |_| 1.0), &p);
        assert_eq!(rest.total(), 0.0);
        let out = detect_steps_spectral(&gait(80.0, 60.0, 0.4), &p);
        assert!((out.total() - 120.0).abs() < 1e-9, "{}", out.total());
        for w in out.per_second.chunks(10) {
            assert!((w.iter().sum::<f64>() - 20.0).abs() < 1e-9);
        }
        let arm = series(80.0, 60.0, |t| 1.0 + 0.2 * (TAU * t).sin() + 0.4 * (TAU * 2.0 * t).sin());
        let out = detect_steps_spectral(&arm, &p);
        assert!((out.total() - 120.0).abs() < 1e-9, "{}", out.total());
    }

    #[test]
    fn spectral_harmonic_folds_to_fundamental() {
        let p = SpectralParams {
            cadence_band_hz: (0.8, 2.3),
            ..Default::default()
        };
        let s = series(80.0, 10.0, |t| 1.0 + 0.5 * (TAU * t).sin() + 0.3 * (TAU * 2.0 * t).sin());
        assert!((detect_steps_spectral(&s, &p).total() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn templates_are_normalized() {
        for t in default_templates() {
            assert!(t.iter().sum::<f64>().abs() < 1e-12);
            assert!((t.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn tiled_template(copies: usize, rate: f64) -> UniformSeries {
        let t = scaled_template(&default_templates()[0], rate as usize);
        let values: Vec<f64> = (0..copies).flat_map(|_| t.iter().map(|v| 1.0 + v)).collect();
        UniformSeries::new(rate, values).unwrap()
    }

    #[test]
    fn template_counts_tiled_strides() {
        let p = TemplateParams::default();
        assert_eq!(detect_steps_template(&tiled_template(30, 20.0), &p).total(), 60.0);
        assert_eq!(detect_steps_template(&tiled_template(1, 20.0), &p).total(), 2.0);
    }

    #[test]
    fn template_rejects_flat_signal() {
        let p = TemplateParams::default();
        assert_eq!(detect_steps_template(&series(20.0, 30.0, |_| 1.0), &p).total(), 0.0);
    }

    #[test]
    fn template_counts_gait() {
        let out = detect_steps_template(&gait(80.0, 60.0, 0.4), &TemplateParams::default());
        assert!((out.total() - 120.0).abs() <= 18.0, "{}", out.total());
    }

    #[test]
    fn loader_normalizes_columns() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.txt");
        std::fs::write(&p, "a,b\n0,1\n1,3\n2,2\n1,0\n").unwrap();
        let t = load_templates(&p).unwrap();
        assert_eq!(t.len(), 2);
        for col in &t {
            assert!(col.iter().sum::<f64>().abs() < 1e-12);
            assert!((col.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(load_templates(&p).is_err());
    }

    struct Failing;

    impl StepDetector for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn detect(&self, _: &UniformSeries) -> StepSeries {
            panic!("boom")
        }
    }

    #[test]
    fn runner_isolates_failures() {
        let cfg = DetectorConfig::default();
        let vm = gait(80.0, 60.0, 0.4);
        let run = run_detectors_on(&vm, &cfg.registry().unwrap()).unwrap();
        assert_eq!(run.results.len(), 4);
        assert_eq!(run.timings.len(), 4);

        let mut cfg3 = cfg.clone();
        cfg3.enabled.truncate(3);
        let mut reg = cfg3.registry().unwrap();
        reg.push(Box::new(Failing));
        let run = run_detectors_on(&vm, &reg).unwrap();
        assert_eq!(run.results.len(), 3);
        assert_eq!(run.errors["failing"], "boom");

        let empty = UniformSeries::new(80.0, vec![]).unwrap();
        let run = run_detectors_on(&empty, &cfg.registry().unwrap()).unwrap();
        assert!(run.results.values().all(StepSeries::is_empty));
        assert!(run_detectors_on(&vm, &DetectorRegistry::default()).is_err());
    }

    #[test]
    fn config_keys() {
        let mut c = DetectorConfig::default();
        c.set("peak_revised.mag_threshold_g", "1.1").unwrap();
        c.set("spectral.cadence_band_hz", "1.2,2.5").unwrap();
        c.set("detectors", "spectral,template").unwrap();
        assert_eq!(c.peak_revised.mag_threshold_g, 1.1);
        assert_eq!(c.spectral.cadence_band_hz, (1.2, 2.5));
        assert_eq!(c.registry().unwrap().names(), vec!["spectral", "template"]);
        assert!(matches!(c.set("peak_original.nope", "1"), Err(Error::UnknownKey(_))));
        assert!(c.set("detectors", "oak").is_err());
        assert!(c.set("template.correlation_threshold", "1.5").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn raising_magnitude_threshold_never_adds_steps(
            amp in 0.1f64..0.8, noise_seed in 0u64..1000, lo in 1.0f64..1.4, delta in 0.0f64..0.5
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(noise_seed);
            let s = series(15.0, 30.0, |t| 1.0 + amp * (TAU * 1.8 * t).sin() + rng.gen_range(-0.05..0.05));
            let a = PeakParams { mag_threshold_g: lo, ..Default::default() };
            let b = PeakParams { mag_threshold_g: lo + delta, ..Default::default() };
            prop_assert!(detect_steps_peak(&s, &b).total() <= detect_steps_peak(&s, &a).total());
        }

        #[test]
        fn spectral_is_shift_equivariant(shift in 0usize..4, f in 1.5f64..2.2) {
            let p = SpectralParams::default();
            let rate = 40.0;
            let base = series(rate, 40.0, |t| 1.0 + 0.3 * (TAU * f * t).sin() * if t < 20.0 { 1.0 } else { 0.0 });
            let pad = shift * 400;
            let mut shifted = vec![1.0; pad];
            shifted.extend_from_slice(&base.values);
            let a = detect_steps_spectral(&base, &p);
            let b = detect_steps_spectral(&UniformSeries::new(rate, shifted).unwrap(), &p);
            prop_assert_eq!(&b.per_second[shift * 10..], &a.per_second[..]);
        }

        #[test]
        fn outputs_nonnegative_and_minutes_conserve(amp in 0.0f64..0.6, f in 1.0f64..2.5, secs in 30.0f64..150.0) {
            let vm = series(30.0, secs, |t| 1.0 + amp * (TAU * f * t).sin());
            let run = run_detectors_on(&vm, &DetectorConfig::default().registry().unwrap()).unwrap();
            for s in run.results.values() {
                prop_assert!(s.per_second.iter().all(|&v| (0.0..=MAX_STEPS_PER_SECOND).contains(&v)));
                let minutes = s.per_minute();
                for (m, block) in s.per_second.chunks(60).enumerate() {
                    prop_assert_eq!(minutes[m], block.iter().sum::<f64>());
                }
            }
        }
    }
}
