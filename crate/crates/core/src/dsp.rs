//! Signal kernels shared by the detectors and the activity summaries.

use std::f64::consts::PI;
use std::ops::Range;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::TriaxialRecording;

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    pub sample_rate_hz: f64,
    pub values: Vec<f64>,
}

impl UniformSeries {
    pub fn new(sample_rate_hz: f64, values: Vec<f64>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::invalid("sample_rate_hz", "must be positive"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("series contains non-finite values".into()));
        }
        Ok(Self {
            sample_rate_hz,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate_hz
    }
}

/// Per-sample Euclidean norm of the three axes.
pub fn vector_magnitude(rec: &TriaxialRecording) -> UniformSeries {
    let values = rec
        .x()
        .iter()
        .zip(rec.y())
        .zip(rec.z())
        .map(|((&x, &y), &z)| {
            let (x, y, z) = (x as f64, y as f64, z as f64);
            (x * x + y * y + z * z).sqrt()
        })
        .collect();
    UniformSeries {
        sample_rate_hz: rec.sample_rate_hz(),
        values,
    }
}

/// Output length when resampling `n` samples from `from_hz` to `to_hz`.
pub fn resampled_len(n: usize, from_hz: f64, to_hz: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((n as f64 * to_hz / from_hz + 1e-9).floor() as usize).max(1)
}

/// Linear interpolation onto a `target_hz` grid starting at the first sample.
/// Grid points past the last input sample take the last value.
pub fn resample_linear(s: &UniformSeries, target_hz: f64) -> Result<UniformSeries> {
    if s.is_empty() {
        return Err(Error::InvalidInput("cannot resample an empty series".into()));
    }
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(Error::invalid("target_hz", "must be positive"));
    }
    Ok(UniformSeries {
        sample_rate_hz: target_hz,
        values: resample_values(&s.values, s.sample_rate_hz, target_hz),
    })
}

pub(crate) fn resample_values(values: &[f64], from_hz: f64, to_hz: f64) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    if from_hz == to_hz {
        return values.to_vec();
    }
    let n_out = resampled_len(n, from_hz, to_hz);
    let step = from_hz / to_hz;
    let last = values[n - 1];
    (0..n_out)
        .map(|j| {
            let t = j as f64 * step;
            let i = t.floor() as usize;
            if i + 1 >= n {
                last
            } else {
                let frac = t - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        })
        .collect()
}

/// One second-order section, `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2]) / (1.0 + z_inv * self.a[0] + z2 * self.a[1])
    }

    /// Transposed direct-form II state that holds the section at rest for a
    /// constant input `u`.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let y = self.dc_gain() * u;
        let s2 = self.b[2] * u - self.a[1] * y;
        let s1 = self.b[1] * u - self.a[0] * y + s2;
        [s1, s2]
    }

    fn run(&self, data: &mut [f64], state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let [mut s1, mut s2] = state;
        for v in data.iter_mut() {
            let x = *v;
            let y = b0 * x + s1;
            s1 = b1 * x - a1 * y + s2;
            s2 = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    /// Butterworth band-pass of total order `order` (even; `order / 2` sections)
    /// designed by the bilinear transform with prewarped band edges.
    pub fn butterworth_bandpass(sample_rate_hz: f64, low_hz: f64, high_hz: f64, order: usize) -> Result<Self> {
        let nyquist = sample_rate_hz / 2.0;
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
            return Err(Error::invalid(
                "band",
                format!("need 0 < {low_hz} < {high_hz} < {nyquist} (Nyquist)"),
            ));
        }
        if order == 0 || order % 2 != 0 {
            return Err(Error::invalid("order", format!("must be even and positive, got {order}")));
        }
        let n = order / 2;
        let fs2 = 2.0 * sample_rate_hz;
        let w_lo = fs2 * (PI * low_hz / sample_rate_hz).tan();
        let w_hi = fs2 * (PI * high_hz / sample_rate_hz).tan();
        let bw = w_hi - w_lo;
        let w0 = (w_lo * w_hi).sqrt();

        let mut poles = Vec::with_capacity(2 * n);
        for k in 0..n {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let proto = Complex64::from_polar(1.0, theta);
            let half = proto * (bw / 2.0);
            let root = (half * half - w0 * w0).sqrt();
            for s in [half + root, half - root] {
                poles.push((fs2 + s) / (fs2 - s));
            }
        }

        let eps = 1e-12;
        let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > eps).collect();
        let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= eps).map(|p| p.re).collect();
        complex.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        real.sort_by(f64::total_cmp);

        let mut sections = Vec::with_capacity(n);
        for p in complex {
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-2.0 * p.re, p.norm_sqr()],
            });
        }
        for pair in real.chunks(2) {
            let (p1, p2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-(p1 + p2), p1 * p2],
            });
        }
        debug_assert_eq!(sections.len(), n);

        // Unit gain at the band centre.
        let omega0 = 2.0 * (w0 / fs2).atan();
        let mut filter = SosFilter { sections };
        let g = filter.response(omega0 / (2.0 * PI) * sample_rate_hz, sample_rate_hz).norm();
        for c in filter.sections[0].b.iter_mut() {
            *c /= g;
        }
        Ok(filter)
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / sample_rate_hz);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Causal filtering in place, starting from the steady state for `data[0]`.
    pub fn filter_in_place(&self, data: &mut [f64]) {
        let Some(&first) = data.first() else {
            return;
        };
        let mut u = first;
        for s in &self.sections {
            let state = s.steady_state(u);
            s.run(data, state);
            u *= s.dc_gain();
        }
    }

    fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Zero-phase forward-backward filtering with odd-extension padding.
    pub fn filtfilt(&self, data: &[f64]) -> Vec<f64> {
        let n = data.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.pad_len().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (data[0], data[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - data[i]));
        ext.extend_from_slice(data);
        ext.extend((1..=pad).map(|i| 2.0 * last - data[n - 1 - i]));
        self.filter_in_place(&mut ext);
        ext.reverse();
        self.filter_in_place(&mut ext);
        ext.reverse();
        ext.drain(..pad);
        ext.truncate(n);
        ext
    }
}

/// Butterworth band-pass applied to a series, zero-phase when `zero_phase`.
pub fn butterworth_bandpass(
    s: &UniformSeries,
    low_hz: f64,
    high_hz: f64,
    order: usize,
    zero_phase: bool,
) -> Result<UniformSeries> {
    let filter = SosFilter::butterworth_bandpass(s.sample_rate_hz, low_hz, high_hz, order)?;
    let values = if zero_phase {
        filter.filtfilt(&s.values)
    } else {
        let mut v = s.values.clone();
        filter.filter_in_place(&mut v);
        v
    };
    Ok(UniformSeries {
        sample_rate_hz: s.sample_rate_hz,
        values,
    })
}

/// Reusable one-sided periodogram of mean-removed windows.
///
/// Powers are scaled so they sum to the population variance of the window.
pub struct Periodogram {
    len: usize,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    buf: Vec<Complex64>,
}

impl Periodogram {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        Self {
            len,
            fft,
            buf: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Writes `len / 2 + 1` powers into `out`.
    pub fn compute(&mut self, window: &[f64], out: &mut Vec<f64>) {
        assert_eq!(window.len(), self.len);
        let n = self.len;
        let mean = compensated_sum(window.iter().copied()) / n as f64;
        for (b, &v) in self.buf.iter_mut().zip(window) {
            *b = Complex64::new(v - mean, 0.0);
        }
        self.fft.process(&mut self.buf);
        let scale = 1.0 / (n as f64 * n as f64);
        out.clear();
        for k in 0..=n / 2 {
            let p = self.buf[k].norm_sqr() * scale;
            let edge = k == 0 || (n % 2 == 0 && k == n / 2);
            out.push(if edge { p } else { 2.0 * p });
        }
    }
}

/// One-sided periodogram as `(frequency, power)` pairs from 0 to Nyquist.
pub fn power_spectrum(window: &UniformSeries) -> Result<Vec<(f64, f64)>> {
    let n = window.len();
    if n < 8 {
        return Err(Error::InvalidInput(format!(
            "spectrum needs at least 8 samples, got {n}"
        )));
    }
    let mut p = Periodogram::new(n);
    let mut powers = Vec::new();
    p.compute(&window.values, &mut powers);
    let df = window.sample_rate_hz / n as f64;
    Ok(powers
        .into_iter()
        .enumerate()
        .map(|(k, pw)| (k as f64 * df, pw))
        .collect())
}

/// Index ranges of full windows; a trailing partial window is dropped.
#[derive(Debug, Clone)]
pub struct SlidingWindows {
    len: usize,
    win: usize,
    hop: usize,
    next: usize,
}

impl Iterator for SlidingWindows {
    type Item = Range<usize>;

    fn next(&mut self) -> Option<Range<usize>> {
        if self.win == 0 || self.next + self.win > self.len {
            return None;
        }
        let r = self.next..self.next + self.win;
        self.next += self.hop;
        Some(r)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = window_count(self.len.saturating_sub(self.next), self.win, self.hop);
        (n, Some(n))
    }
}

impl ExactSizeIterator for SlidingWindows {}

/// Number of full windows: `floor((n - w) / h) + 1` when `n >= w`, else 0.
pub fn window_count(n: usize, win: usize, hop: usize) -> usize {
    if win == 0 || hop == 0 || n < win {
        0
    } else {
        (n - win) / hop + 1
    }
}

pub fn sliding_windows(s: &UniformSeries, win_seconds: f64, hop_seconds: f64) -> SlidingWindows {
    let win = (win_seconds * s.sample_rate_hz).round().max(0.0) as usize;
    let hop = (hop_seconds * s.sample_rate_hz).round().max(0.0) as usize;
    SlidingWindows {
        len: s.len(),
        win,
        hop: hop.max(usize::from(win > 0 && hop == 0)),
        next: 0,
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(x: Vec<f32>, y: Vec<f32>, z: Vec<f32>) -> TriaxialRecording {
        let t0 = NaiveDate::from_ymd_opt(2012, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        TriaxialRecording::new("s", t0, 80.0, x, y, z).unwrap()
    }

    fn sine(rate: f64, n: usize, freq: f64, amp: f64, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate + phase).sin())
            .collect()
    }

    /// Least-squares amplitude of a known-frequency sinusoid.
    fn fitted_amplitude(values: &[f64], rate: f64, freq: f64) -> f64 {
        let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &v) in values.iter().enumerate() {
            let w = 2.0 * PI * freq * i as f64 / rate;
            let (s, c) = w.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += v * s;
            yc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        (a * a + b * b).sqrt()
    }

    #[test]
    fn magnitude_examples() {
        let vm = vector_magnitude(&rec(vec![0.0, 0.3], vec![0.0, 0.4], vec![1.0, 0.0]));
        assert_eq!(vm.values[0], 1.0);
        assert!((vm.values[1] - 0.5).abs() < 1e-7);
        assert_eq!(vm.sample_rate_hz, 80.0);
    }

    #[test]
    fn magnitude_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 500;
        let axes: Vec<Vec<f32>> = (0..3)
            .map(|_| (0..n).map(|_| rng.gen_range(-4.0f32..4.0)).collect())
            .collect();
        let r = rec(axes[0].clone(), axes[1].clone(), axes[2].clone());
        let vm = vector_magnitude(&r);
        for i in 0..n {
            let (x, y, z) = (axes[0][i] as f64, axes[1][i] as f64, axes[2][i] as f64);
            assert!((vm.values[i] - (x * x + y * y + z * z).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn magnitude_invariant_under_axis_permutation_and_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f32> = (0..200).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f32> = (0..200).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let z: Vec<f32> = (0..200).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = vector_magnitude(&rec(x.clone(), y.clone(), z.clone()));
        let neg = |v: &Vec<f32>| v.iter().map(|s| -s).collect::<Vec<_>>();
        let b = vector_magnitude(&rec(neg(&z), x.clone(), neg(&y)));
        // Same squared terms summed in a different order can differ in the last ulp.
        for (p, q) in a.values.iter().zip(&b.values) {
            assert!((p - q).abs() <= 4.0 * f64::EPSILON * p.max(1.0));
        }
        let c = vector_magnitude(&rec(neg(&x), neg(&y), neg(&z)));
        assert_eq!(a, c);
    }

    #[test]
    fn resample_identity_and_constant() {
        let s = UniformSeries::new(80.0, sine(80.0, 400, 1.0, 1.0, 0.3)).unwrap();
        assert_eq!(resample_linear(&s, 80.0).unwrap(), s);
        let c = UniformSeries::new(80.0, vec![0.7; 333]).unwrap();
        for rate in [15.0, 30.0, 100.0, 7.3] {
            let r = resample_linear(&c, rate).unwrap();
            assert!(r.values.iter().all(|&v| v == 0.7));
            let dur_err = (r.duration_seconds() - c.duration_seconds()).abs();
            assert!(dur_err <= 1.0 / rate + 1e-12);
        }
        assert!(resample_linear(&UniformSeries::new(80.0, vec![]).unwrap(), 15.0).is_err());
    }

    #[test]
    fn resample_sine_80_to_15() {
        let s = UniformSeries::new(80.0, sine(80.0, 80 * 20, 1.0, 1.0, 0.0)).unwrap();
        let r = resample_linear(&s, 15.0).unwrap();
        assert_eq!(r.len(), 300);
        let max_err = r
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| (v - (2.0 * PI * j as f64 / 15.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.01, "max error {max_err}");
    }

    #[test]
    fn bandpass_rejects_dc() {
        let s = UniformSeries::new(30.0, vec![1.0; 3000]).unwrap();
        for zero_phase in [true, false] {
            let f = butterworth_bandpass(&s, 0.25, 2.5, 4, zero_phase).unwrap();
            let m = f.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(m < 1e-6, "max {m}");
        }
    }

    #[test]
    fn bandpass_passband_and_stopband() {
        let rate = 100.0;
        let (lo, hi) = (0.2, 5.0);
        let centre = (lo * hi as f64).sqrt();
        let n = 100 * 200;
        let mid = n / 4..3 * n / 4;
        let s = UniformSeries::new(rate, sine(rate, n, centre, 1.0, 0.1)).unwrap();
        let f = butterworth_bandpass(&s, lo, hi, 4, true).unwrap();
        let ratio = fitted_amplitude(&f.values[mid.clone()], rate, centre)
            / fitted_amplitude(&s.values[mid.clone()], rate, centre);
        assert!((0.9..=1.0 + 1e-9).contains(&ratio), "centre ratio {ratio}");

        let stop = 10.0 * hi;
        let s = UniformSeries::new(rate * 4.0, sine(rate * 4.0, 4 * n, stop, 1.0, 0.0)).unwrap();
        let f = butterworth_bandpass(&s, lo, hi, 4, true).unwrap();
        let mid = n..3 * n;
        let ratio = fitted_amplitude(&f.values[mid.clone()], rate * 4.0, stop)
            / fitted_amplitude(&s.values[mid], rate * 4.0, stop);
        assert!(ratio < 0.1, "stopband ratio {ratio}");
    }

    #[test]
    fn bandpass_matches_analog_magnitude() {
        // Bilinear design reproduces the analog Butterworth magnitude at
        // prewarped frequencies.
        let (rate, lo, hi, order) = (100.0, 0.2, 5.0, 6);
        let f = SosFilter::butterworth_bandpass(rate, lo, hi, order).unwrap();
        let warp = |hz: f64| 2.0 * rate * (PI * hz / rate).tan();
        let (wl, wh) = (warp(lo), warp(hi));
        for hz in [0.05, 0.2, 1.0, 3.0, 5.0, 12.0, 30.0] {
            let w = warp(hz);
            let q = (w * w - wl * wh) / (w * (wh - wl));
            let expected = 1.0 / (1.0 + q.powi(order as i32)).sqrt();
            let got = f.response(hz, rate).norm();
            assert!((got - expected).abs() < 1e-9, "{hz} Hz: {got} vs {expected}");
        }
    }

    #[test]
    fn bandpass_rejects_bad_band() {
        let s = UniformSeries::new(30.0, vec![0.0; 100]).unwrap();
        assert!(butterworth_bandpass(&s, 0.25, 16.0, 4, true).is_err());
        assert!(butterworth_bandpass(&s, 2.0, 1.0, 4, true).is_err());
        assert!(butterworth_bandpass(&s, 0.25, 2.5, 3, true).is_err());
    }

    proptest! {
        #[test]
        fn filtering_is_linear(
            seed in 0u64..1000,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            zero_phase in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 600;
            let s1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = s1.iter().zip(&s2).map(|(p, q)| a * p + b * q).collect();
            let run = |v: Vec<f64>| {
                butterworth_bandpass(&UniformSeries::new(30.0, v).unwrap(), 0.25, 2.5, 4, zero_phase)
                    .unwrap()
                    .values
            };
            let (f1, f2, fm) = (run(s1), run(s2), run(mix));
            let scale = fm.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                let expected = a * f1[i] + b * f2[i];
                prop_assert!((fm[i] - expected).abs() <= 1e-9 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn spectrum_peak_at_two_hertz() {
        let s = UniformSeries::new(15.0, sine(15.0, 150, 2.0, 1.0, 0.0)).unwrap();
        let spec = power_spectrum(&s).unwrap();
        let (f, _) = spec.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((f - 2.0).abs() < 1e-12);
        assert!((spec.last().unwrap().0 - 7.5).abs() < 1e-12);
    }

    #[test]
    fn spectrum_of_constant_is_empty() {
        let s = UniformSeries::new(15.0, vec![1.3; 64]).unwrap();
        assert!(power_spectrum(&s).unwrap().iter().all(|&(_, p)| p < 1e-28));
    }

    #[test]
    fn spectrum_picks_strong_component() {
        let mut v = sine(15.0, 150, 1.5, 1.0, 0.0);
        for (x, w) in v.iter_mut().zip(sine(15.0, 150, 3.0, 0.3, 0.4)) {
            *x += w;
        }
        let spec = power_spectrum(&UniformSeries::new(15.0, v).unwrap()).unwrap();
        let (f, _) = spec.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((f - 1.5).abs() < 1e-12);
    }

    #[test]
    fn spectrum_parseval_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [8usize, 9, 64, 101] {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let spec = power_spectrum(&UniformSeries::new(10.0, v.clone()).unwrap()).unwrap();
            let total: f64 = spec.iter().map(|p| p.1).sum();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((total - var).abs() <= 1e-9 * var);

            let mut shifted = v.clone();
            shifted.rotate_left(3);
            let spec2 = power_spectrum(&UniformSeries::new(10.0, shifted).unwrap()).unwrap();
            for (a, b) in spec.iter().zip(&spec2) {
                assert!((a.1 - b.1).abs() <= 1e-9 * var);
            }
        }
        assert!(power_spectrum(&UniformSeries::new(10.0, vec![0.0; 7]).unwrap()).is_err());
    }

    #[test]
    fn window_counts() {
        let s = |n| UniformSeries::new(1.0, vec![0.0; n]).unwrap();
        assert_eq!(sliding_windows(&s(100), 100.0, 100.0).count(), 1);
        assert_eq!(sliding_windows(&s(99), 100.0, 100.0).count(), 0);
        let w: Vec<_> = sliding_windows(&s(1000), 100.0, 50.0).collect();
        assert_eq!(w.len(), window_count(1000, 100, 50));
        assert_eq!(w.len(), 19);
        assert_eq!(w[18], 900..1000);
        assert_eq!(sliding_windows(&s(1000), 100.0, 50.0).len(), 19);
    }

    #[test]
    fn compensated_sum_is_order_stable() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
        let mut rev = values;
        rev.reverse();
        assert_eq!(compensated_sum(rev), 2.0);
    }
}
