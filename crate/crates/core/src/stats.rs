//! Winsorization, correlations, survey-weighted means with linearized
//! standard errors, local-linear smoothing and percent-change summaries.

use std::collections::BTreeMap;

use crate::dsp::compensated_sum;
use crate::error::{Error, Result};
use crate::model::SubjectSummary;

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`, the default in R and NumPy).
pub fn quantile_type7(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p", "must lie in [0, 1]"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Values above `cap` replaced by `cap`.
pub fn clip_upper(values: &[f64], cap: f64) -> Vec<f64> {
    values.iter().map(|&v| if v > cap { cap } else { v }).collect()
}

/// Caps values above the `p` type-7 sample quantile at that quantile.
pub fn winsorize_upper(values: &[f64], p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("winsor_percentile", "must lie in (0, 1)"));
    }
    let cap = quantile_type7(values, p)?;
    Ok(clip_upper(values, cap))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("correlation needs at least two pairs".into()));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::InvalidInput("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1 with ties given their average rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&midranks(x), &midranks(y))
}

/// One cell of a pairwise-complete correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationCell {
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub variables: Vec<String>,
    pub cells: Vec<Vec<CorrelationCell>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<&CorrelationCell> {
        let i = self.variables.iter().position(|v| v == a)?;
        let j = self.variables.iter().position(|v| v == b)?;
        Some(&self.cells[i][j])
    }
}

/// Unweighted Spearman and Pearson correlations over subjects with both
/// variables present. Cells with fewer than two pairs or zero variance are empty.
pub fn correlation_matrix(subjects: &[SubjectSummary], variables: &[String]) -> CorrelationMatrix {
    let k = variables.len();
    let empty = CorrelationCell {
        spearman: None,
        pearson: None,
        n: 0,
    };
    let mut cells = vec![vec![empty; k]; k];
    for i in 0..k {
        for j in i..k {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for s in subjects {
                if let (Some(&a), Some(&b)) = (s.means.get(&variables[i]), s.means.get(&variables[j])) {
                    x.push(a);
                    y.push(b);
                }
            }
            let cell = if i == j {
                CorrelationCell {
                    spearman: Some(1.0),
                    pearson: Some(1.0),
                    n: x.len(),
                }
            } else {
                CorrelationCell {
                    spearman: spearman(&x, &y).ok(),
                    pearson: pearson(&x, &y).ok(),
                    n: x.len(),
                }
            };
            cells[i][j] = cell;
            cells[j][i] = cell;
        }
    }
    CorrelationMatrix {
        variables: variables.to_vec(),
        cells,
    }
}

/// Stratum and PSU labels for each observation.
#[derive(Debug, Clone, Copy)]
pub struct SurveyDesign<'a> {
    pub strata: &'a [String],
    pub psus: &'a [String],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEstimate {
    pub mean: f64,
    pub se: f64,
}

/// Weighted mean with a Taylor-linearized standard error.
///
/// Scores `z_i = w_i (x_i - mean) / sum(w)` are totalled per PSU; the variance
/// is `sum_h n_h / (n_h - 1) * sum_j (z_hj - mean_h(z))^2` over strata with
/// `n_h` PSUs. Without a design every observation is its own PSU in a single
/// stratum. Strata with a single PSU contribute nothing.
pub fn weighted_mean_se(values: &[f64], weights: &[f64], design: Option<SurveyDesign>) -> Result<WeightedEstimate> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::InvalidInput("values and weights must be nonempty and aligned".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("weights", "must be finite and nonnegative"));
    }
    let total = compensated_sum(weights.iter().copied());
    if total <= 0.0 {
        return Err(Error::invalid("weights", "all weights are zero"));
    }
    let mean = compensated_sum(values.iter().zip(weights).map(|(x, w)| x * w)) / total;
    let scores: Vec<f64> = values.iter().zip(weights).map(|(x, w)| w * (x - mean) / total).collect();

    let mut strata: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    match design {
        Some(d) => {
            if d.strata.len() != values.len() || d.psus.len() != values.len() {
                return Err(Error::InvalidInput("design fields must align with values".into()));
            }
            for (i, &z) in scores.iter().enumerate() {
                strata.entry(&d.strata[i]).or_default().entry(&d.psus[i]).or_default().push(z);
            }
        }
        None => {
            let psu: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            strata.insert("", psu);
        }
    }
    let mut variance = 0.0;
    if design.is_some() {
        for psus in strata.values() {
            let totals: Vec<f64> = psus.values().map(|z| compensated_sum(z.iter().copied())).collect();
            variance += stratum_variance(&totals);
        }
    } else {
        variance = stratum_variance(&scores);
    }
    Ok(WeightedEstimate {
        mean,
        se: variance.max(0.0).sqrt(),
    })
}

/// Weighted population standard deviation `sqrt(sum w (x - mean)^2 / sum w)`.
pub fn weighted_sd(values: &[f64], weights: &[f64]) -> Result<f64> {
    let mean = weighted_mean_se(values, weights, None)?.mean;
    let total = compensated_sum(weights.iter().copied());
    let ss = compensated_sum(values.iter().zip(weights).map(|(x, w)| w * (x - mean) * (x - mean)));
    Ok((ss / total).sqrt())
}

fn stratum_variance(psu_totals: &[f64]) -> f64 {
    let n = psu_totals.len();
    if n < 2 {
        return 0.0;
    }
    let m = compensated_sum(psu_totals.iter().copied()) / n as f64;
    n as f64 / (n - 1) as f64 * compensated_sum(psu_totals.iter().map(|z| (z - m) * (z - m)))
}

/// Weighted mean and SE of a value at one integer age.
#[derive(Debug, Clone, PartialEq)]
pub struct AgePoint {
    pub age: f64,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Weighted means by whole year of age. The design is applied within each age.
pub fn weighted_means_by_age(
    ages: &[f64],
    values: &[f64],
    weights: &[f64],
    design: Option<SurveyDesign>,
) -> Result<Vec<AgePoint>> {
    if ages.len() != values.len() || ages.len() != weights.len() {
        return Err(Error::InvalidInput("ages, values and weights must align".into()));
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &a) in ages.iter().enumerate() {
        groups.entry(a.floor() as i64).or_default().push(i);
    }
    let mut out = Vec::with_capacity(groups.len());
    for (age, idx) in groups {
        let v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
        let est = match design {
            Some(d) => {
                let strata: Vec<String> = idx.iter().map(|&i| d.strata[i].clone()).collect();
                let psus: Vec<String> = idx.iter().map(|&i| d.psus[i].clone()).collect();
                weighted_mean_se(&v, &w, Some(SurveyDesign { strata: &strata, psus: &psus }))
            }
            None => weighted_mean_se(&v, &w, None),
        };
        let Ok(est) = est else { continue };
        out.push(AgePoint {
            age: age as f64,
            mean: est.mean,
            se: est.se,
            n: idx.len(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub age: i64,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Local-linear fit at `x0` over the `q` nearest points with tricube weights.
fn local_linear(xs: &[f64], ys: &[f64], x0: f64, q: usize) -> Result<f64> {
    let mut dist: Vec<f64> = xs.iter().map(|x| (x - x0).abs()).collect();
    dist.sort_by(f64::total_cmp);
    let radius = dist[q - 1];
    let mut sw = 0.0;
    let (mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0);
    let mut support = 0;
    for (&x, &y) in xs.iter().zip(ys) {
        let d = (x - x0).abs();
        let w = if radius > 0.0 {
            let u = d / radius;
            if u < 1.0 {
                (1.0 - u * u * u).powi(3)
            } else {
                0.0
            }
        } else if d == 0.0 {
            1.0
        } else {
            0.0
        };
        if w <= 0.0 {
            continue;
        }
        support += 1;
        let dx = x - x0;
        sw += w;
        swx += w * dx;
        swy += w * y;
        swxx += w * dx * dx;
        swxy += w * dx * y;
    }
    if support < 3 {
        return Err(Error::InvalidInput(format!("neighbourhood at {x0} has {support} points; need at least 3")));
    }
    let det = sw * swxx - swx * swx;
    if det.abs() <= 1e-12 * sw * swxx.max(1e-300) {
        return Ok(swy / sw);
    }
    Ok((swxx * swy - swx * swxy) / det)
}

/// Local-linear tricube smoothing of means and SEs, evaluated at every
/// integer age in the observed range, with `estimate ± 1.96 · se` bands.
pub fn local_weighted_smooth(ages: &[f64], means: &[f64], ses: &[f64], span: f64) -> Result<Vec<CurvePoint>> {
    if ages.len() != means.len() || ages.len() != ses.len() {
        return Err(Error::InvalidInput("ages, means and ses must align".into()));
    }
    let mut distinct: Vec<f64> = ages.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 5 {
        return Err(Error::InvalidInput("smoothing needs at least 5 distinct ages".into()));
    }
    if !(span > 0.0 && span <= 1.0) {
        return Err(Error::invalid("loess_span", "must lie in (0, 1]"));
    }
    let n = ages.len();
    let q = ((span * n as f64).ceil() as usize).clamp(1, n);
    let first = distinct[0].ceil() as i64;
    let last = distinct[distinct.len() - 1].floor() as i64;
    (first..=last)
        .map(|age| {
            let x0 = age as f64;
            let estimate = local_linear(ages, means, x0, q)?;
            let se = local_linear(ages, ses, x0, q)?.max(0.0);
            Ok(CurvePoint {
                age,
                estimate,
                se,
                lo: estimate - 1.96 * se,
                hi: estimate + 1.96 * se,
            })
        })
        .collect()
}

/// `100 (s(a) - s(a-1)) / s(a-1)` for each consecutive pair of ages.
pub fn percent_change_by_age(curve: &[CurvePoint]) -> Result<Vec<(i64, f64)>> {
    curve
        .windows(2)
        .map(|w| {
            if w[1].age != w[0].age + 1 {
                return Err(Error::InvalidInput(format!("ages {} and {} are not consecutive", w[0].age, w[1].age)));
            }
            if w[0].estimate == 0.0 {
                return Err(Error::InvalidInput(format!("smoothed value at age {} is zero", w[0].age)));
            }
            Ok((w[1].age, 100.0 * (w[1].estimate - w[0].estimate) / w[0].estimate))
        })
        .collect()
}

/// `100 |a - b| / mean(a, b)`.
pub fn between_wave_percent_diff(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidInput("estimates must be positive".into()));
    }
    Ok(100.0 * (a - b).abs() / ((a + b) / 2.0))
}
