//! Weighted Cox regression, hazard ratios, weighted Harrell's concordance and
//! repeated cross-validated concordance.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    Alcohol, AnalysisConfig, BmiCategory, Education, MortalityRecord, RaceEthnicity, SelfRatedHealth, Sex, Smoking,
    SubjectCovariates, SubjectSummary,
};
use crate::stats::winsorize_upper;

/// Follow-up, event indicator, weight and named covariate columns per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    ids: Vec<String>,
    time: Vec<f64>,
    event: Vec<bool>,
    weight: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    scaling: BTreeMap<String, (f64, f64)>,
}

impl SurvivalDataset {
    pub fn new(ids: Vec<String>, time: Vec<f64>, event: Vec<bool>, weight: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if time.len() != n || event.len() != n || weight.len() != n {
            return Err(Error::InvalidInput("ids, times, events and weights must align".into()));
        }
        if let Some(t) = time.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::invalid("followup_months", format!("{t} is not a finite nonnegative time")));
        }
        if let Some(w) = weight.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid("survey_weight", format!("{w} is not a positive weight")));
        }
        Ok(Self {
            ids,
            time,
            event,
            weight,
            names: Vec::new(),
            columns: Vec::new(),
            scaling: BTreeMap::new(),
        })
    }

    pub fn add_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::NameCollision(name));
        }
        if values.len() != self.len() {
            return Err(Error::Misaligned(format!("column {name} has {} values for {} rows", values.len(), self.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("column {name} has missing or non-finite values")));
        }
        self.names.push(name);
        self.columns.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    /// `(mean, sd)` used when `name` was standardized.
    pub fn scaling(&self, name: &str) -> Option<(f64, f64)> {
        self.scaling.get(name).copied()
    }

    /// Same rows with only the named columns, in the given order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let mut out = Self {
            names: Vec::new(),
            columns: Vec::new(),
            scaling: BTreeMap::new(),
            ..self.clone_rows()
        };
        for name in names {
            let name = name.as_ref();
            out.add_column(name, self.column(name)?.to_vec())?;
            if let Some(s) = self.scaling(name) {
                out.scaling.insert(name.to_string(), s);
            }
        }
        Ok(out)
    }

    fn clone_rows(&self) -> Self {
        Self {
            ids: self.ids.clone(),
            time: self.time.clone(),
            event: self.event.clone(),
            weight: self.weight.clone(),
            names: Vec::new(),
            columns: Vec::new(),
            scaling: BTreeMap::new(),
        }
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            time: pick(&self.time),
            event: rows.iter().map(|&i| self.event[i]).collect(),
            weight: pick(&self.weight),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| pick(c)).collect(),
            scaling: self.scaling.clone(),
        }
    }

    /// Same data with every weight multiplied by `factor`.
    pub fn with_weights_scaled(&self, factor: f64) -> Result<Self> {
        let weight: Vec<f64> = self.weight.iter().map(|w| w * factor).collect();
        let mut out = Self::new(self.ids.clone(), self.time.clone(), self.event.clone(), weight)?;
        out.names = self.names.clone();
        out.columns = self.columns.clone();
        out.scaling = self.scaling.clone();
        Ok(out)
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = crate::dsp::compensated_sum(x.iter().copied()) / n;
    let ss = crate::dsp::compensated_sum(x.iter().map(|v| (v - mean) * (v - mean)));
    let sd = if x.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Replaces `covariate` by `(x - mean) / sd` and records `(mean, sd)`.
pub fn standardize(data: &SurvivalDataset, covariate: &str) -> Result<SurvivalDataset> {
    let idx = data
        .names
        .iter()
        .position(|n| n == covariate)
        .ok_or_else(|| Error::UnknownCovariate(covariate.to_string()))?;
    let (mean, sd) = mean_sd(&data.columns[idx]);
    if !(sd > 0.0) {
        return Err(Error::InvalidInput(format!("{covariate} has zero variance")));
    }
    let mut out = data.clone();
    out.columns[idx] = data.columns[idx].iter().map(|v| (v - mean) / sd).collect();
    out.scaling.insert(covariate.to_string(), (mean, sd));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// Robust (sandwich) covariance of `beta`.
    pub covariance: Vec<Vec<f64>>,
    /// Inverse observed information with weights normalized to mean 1.
    pub naive_covariance: Vec<Vec<f64>>,
    /// Partial log-likelihood, with weights normalized to mean 1, at the start
    /// value and after each accepted step.
    pub loglik_seq: Vec<f64>,
    /// Partial log-likelihood at `beta`.
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n: usize,
    pub n_events: usize,
}

impl CoxFit {
    pub fn index(&self, covariate: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == covariate)
            .ok_or_else(|| Error::UnknownCovariate(covariate.to_string()))
    }

    pub fn coef(&self, covariate: &str) -> Result<f64> {
        Ok(self.beta[self.index(covariate)?])
    }

    pub fn se(&self, covariate: &str) -> Result<f64> {
        let i = self.index(covariate)?;
        Ok(self.covariance[i][i].max(0.0).sqrt())
    }

    /// Two-sided Wald p-value with the robust SE.
    pub fn wald_p(&self, covariate: &str) -> Result<f64> {
        let z = self.coef(covariate)? / self.se(covariate)?;
        Ok(libm::erfc(z.abs() / std::f64::consts::SQRT_2))
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// `x β` for every row of `data`, matching columns by name.
    pub fn linear_predictor(&self, data: &SurvivalDataset) -> Result<Vec<f64>> {
        let mut lp = vec![0.0; data.len()];
        for (name, b) in self.names.iter().zip(&self.beta) {
            for (v, x) in lp.iter_mut().zip(data.column(name)?) {
                *v += b * x;
            }
        }
        Ok(lp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub max_iterations: usize,
    /// Relative change in log-likelihood treated as convergence.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-9,
            max_halvings: 30,
        }
    }
}

/// Rows sorted by decreasing time, with risk-set boundaries.
struct RiskSets {
    order: Vec<usize>,
    /// `(start, end)` positions in `order` sharing one time, decreasing in time.
    groups: Vec<(usize, usize)>,
}

impl RiskSets {
    fn new(time: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut s = 0;
        while s < order.len() {
            let mut e = s + 1;
            while e < order.len() && time[order[e]] == time[order[s]] {
                e += 1;
            }
            groups.push((s, e));
            s = e;
        }
        Self { order, groups }
    }
}

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    weight: &'a [f64],
    event: &'a [bool],
    sets: &'a RiskSets,
}

impl Problem<'_> {
    fn eta(&self, beta: &DVector<f64>) -> (Vec<f64>, f64) {
        let eta: Vec<f64> = (self.x * beta).iter().copied().collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (eta, if shift.is_finite() { shift } else { 0.0 })
    }

    fn loglik(&self, beta: &DVector<f64>) -> f64 {
        let (eta, shift) = self.eta(beta);
        let mut s0 = 0.0;
        let mut ll = 0.0;
        for &(s, e) in &self.sets.groups {
            for &i in &self.sets.order[s..e] {
                s0 += self.weight[i] * (eta[i] - shift).exp();
            }
            let mut dsum = 0.0;
            for &i in &self.sets.order[s..e] {
                if self.event[i] {
                    dsum += self.weight[i];
                    ll += self.weight[i] * eta[i];
                }
            }
            if dsum > 0.0 {
                ll -= dsum * (s0.ln() + shift);
            }
        }
        ll
    }

    fn evaluate(&self, beta: &DVector<f64>) -> Evaluation {
        let p = self.x.ncols();
        let (eta, shift) = self.eta(beta);
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(p, p);
        let mut ll = 0.0;
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for &(s, e) in &self.sets.groups {
            for &i in &self.sets.order[s..e] {
                let r = self.weight[i] * (eta[i] - shift).exp();
                let xi = self.x.row(i).transpose();
                s0 += r;
                s1.axpy(r, &xi, 1.0);
                s2.ger(r, &xi, &xi, 1.0);
            }
            let mut dsum = 0.0;
            for &i in &self.sets.order[s..e] {
                if self.event[i] {
                    let w = self.weight[i];
                    dsum += w;
                    ll += w * eta[i];
                    score.axpy(w, &self.x.row(i).transpose(), 1.0);
                }
            }
            if dsum > 0.0 {
                ll -= dsum * (s0.ln() + shift);
                let mean = &s1 / s0;
                score.axpy(-dsum, &mean, 1.0);
                info += (&s2 / s0 - &mean * mean.transpose()) * dsum;
            }
        }
        Evaluation {
            loglik: ll,
            score,
            information: info,
        }
    }

    /// Per-row weighted score residuals under Breslow ties.
    fn score_residuals(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.x.nrows();
        let p = self.x.ncols();
        let (eta, shift) = self.eta(beta);
        // Event-time increments in decreasing time order.
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut dlambda = vec![0.0; self.sets.groups.len()];
        let mut dlambda_mean = vec![DVector::zeros(p); self.sets.groups.len()];
        let mut means = vec![DVector::zeros(p); self.sets.groups.len()];
        for (g, &(s, e)) in self.sets.groups.iter().enumerate() {
            for &i in &self.sets.order[s..e] {
                let r = self.weight[i] * (eta[i] - shift).exp();
                s0 += r;
                s1.axpy(r, &self.x.row(i).transpose(), 1.0);
            }
            let dsum: f64 = self.sets.order[s..e]
                .iter()
                .filter(|&&i| self.event[i])
                .map(|&i| self.weight[i])
                .sum();
            means[g] = &s1 / s0;
            if dsum > 0.0 {
                dlambda[g] = dsum / s0;
                dlambda_mean[g] = &means[g] * dlambda[g];
            }
        }
        // Cumulative sums over event times at or before each group's time.
        let k = self.sets.groups.len();
        let mut c0 = vec![0.0; k];
        let mut c1 = vec![DVector::zeros(p); k];
        let mut acc0 = 0.0;
        let mut acc1 = DVector::zeros(p);
        for g in (0..k).rev() {
            acc0 += dlambda[g];
            acc1 += &dlambda_mean[g];
            c0[g] = acc0;
            c1[g] = acc1.clone();
        }
        let mut out = DMatrix::zeros(n, p);
        for (g, &(s, e)) in self.sets.groups.iter().enumerate() {
            for &i in &self.sets.order[s..e] {
                let xi = self.x.row(i).transpose();
                let risk = (eta[i] - shift).exp();
                let mut u = (&xi * c0[g] - &c1[g]) * (-risk);
                if self.event[i] {
                    u += &xi - &means[g];
                }
                out.set_row(i, &(u * self.weight[i]).transpose());
            }
        }
        out
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn invert_information(info: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    info.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RankDeficient(format!("information matrix is singular for [{}]", names.join(", "))))
}

fn check_rank(xs: &DMatrix<f64>, names: &[String]) -> Result<()> {
    if xs.ncols() == 0 {
        return Ok(());
    }
    let gram = xs.transpose() * xs;
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let (imin, min) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    if min <= 1e-10 * max {
        let v = eig.eigenvectors.column(imin);
        let involved: Vec<&str> = names
            .iter()
            .zip(v.iter())
            .filter(|(_, c)| c.abs() > 1e-3)
            .map(|(n, _)| n.as_str())
            .collect();
        return Err(Error::RankDeficient(format!("collinear columns [{}]", involved.join(", "))));
    }
    Ok(())
}

fn newton_step(at: &Evaluation) -> Option<DVector<f64>> {
    match at.information.clone().cholesky() {
        Some(c) => Some(c.solve(&at.score)),
        None => at.information.clone().lu().solve(&at.score),
    }
}

/// Weighted Cox fit with Breslow ties using default options.
pub fn cox_fit(data: &SurvivalDataset) -> Result<CoxFit> {
    cox_fit_with(data, &CoxOptions::default())
}

/// Newton-Raphson with step-halving on internally centred and scaled columns;
/// coefficients and covariances are reported on the original scale.
pub fn cox_fit_with(data: &SurvivalDataset, options: &CoxOptions) -> Result<CoxFit> {
    let n = data.len();
    let p = data.names.len();
    let n_events = data.n_events();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }
    let mut centre = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    for (name, col) in data.names.iter().zip(&data.columns) {
        let (m, sd) = mean_sd(col);
        if !(sd > 0.0) {
            return Err(Error::RankDeficient(format!("column {name} is constant")));
        }
        centre.push(m);
        scale.push(sd);
    }
    let xs = DMatrix::from_fn(n, p, |i, j| (data.columns[j][i] - centre[j]) / scale[j]);
    check_rank(&xs, &data.names)?;
    let sets = RiskSets::new(&data.time);
    let mean_weight = crate::dsp::compensated_sum(data.weight.iter().copied()) / n as f64;
    let weight: Vec<f64> = data.weight.iter().map(|w| w / mean_weight).collect();
    let problem = Problem {
        x: &xs,
        weight: &weight,
        event: &data.event,
        sets: &sets,
    };

    let mut beta = DVector::zeros(p);
    let mut current = problem.evaluate(&beta);
    let mut loglik_seq = vec![current.loglik];
    let mut converged = p == 0;
    let mut iterations = 0;
    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let Some(step) = newton_step(&current) else {
            break;
        };
        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let candidate = &beta + &step * factor;
            let ll = problem.loglik(&candidate);
            if ll.is_finite() && ll >= current.loglik {
                accepted = Some(candidate);
                break;
            }
            factor /= 2.0;
        }
        let Some(candidate) = accepted else {
            // No ascent direction left at working precision.
            converged = current.score.amax() <= 1e-6 * (1.0 + current.loglik.abs());
            break;
        };
        let previous = current.loglik;
        beta = candidate;
        current = problem.evaluate(&beta);
        assert!(current.loglik >= previous, "partial log-likelihood decreased");
        loglik_seq.push(current.loglik);
        if (current.loglik - previous).abs() <= options.tolerance * current.loglik.abs() {
            converged = true;
        }
    }
    if converged {
        // Pure Newton steps once inside the quadratic region, where the
        // likelihood no longer resolves the remaining change.
        for _ in 0..3 {
            let Some(step) = newton_step(&current) else { break };
            if step.amax() <= 1e-15 * (1.0 + beta.amax()) {
                break;
            }
            let candidate = &beta + &step;
            let next = problem.evaluate(&candidate);
            if !next.loglik.is_finite() || next.loglik < current.loglik - 1e-12 * current.loglik.abs() {
                break;
            }
            beta = candidate;
            current = next;
        }
        let last = *loglik_seq.last().expect("nonempty");
        if current.loglik > last {
            loglik_seq.push(current.loglik);
        }
    }

    let (inv, robust) = match invert_information(&current.information, &data.names) {
        Ok(inv) => {
            let resid = problem.score_residuals(&beta);
            let meat = resid.transpose() * &resid;
            let robust = &inv * meat * &inv;
            let robust = (&robust + robust.transpose()) * 0.5;
            (inv, robust)
        }
        Err(_) => {
            converged = false;
            let unbounded = DMatrix::from_element(p, p, f64::INFINITY);
            (unbounded.clone(), unbounded)
        }
    };
    let unscale = |m: &DMatrix<f64>| DMatrix::from_fn(p, p, |a, b| m[(a, b)] / (scale[a] * scale[b]));
    let fit = CoxFit {
        names: data.names.clone(),
        beta: beta.iter().zip(&scale).map(|(b, s)| b / s).collect(),
        covariance: to_rows(&unscale(&robust)),
        naive_covariance: to_rows(&unscale(&inv)),
        loglik_seq,
        loglik: current.loglik,
        converged,
        iterations,
        n,
        n_events,
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::NotConverged {
            iterations,
            fit: Box::new(fit),
        })
    }
}

/// Fit, accepting the last iterate when the iteration limit is reached.
pub fn cox_fit_lenient(data: &SurvivalDataset) -> Result<CoxFit> {
    match cox_fit(data) {
        Err(Error::NotConverged { iterations, fit }) => {
            log::warn!("Cox fit stopped after {iterations} iterations without converging");
            Ok(*fit)
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardRatio {
    pub hr: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `exp(delta β)` with the Wald interval `exp(delta (β ± 1.96 se))`.
pub fn hazard_ratio(fit: &CoxFit, covariate: &str, delta: f64) -> Result<HazardRatio> {
    let b = fit.coef(covariate)?;
    let se = fit.se(covariate)?;
    let a = (delta * (b - 1.96 * se)).exp();
    let z = (delta * (b + 1.96 * se)).exp();
    Ok(HazardRatio {
        hr: (delta * b).exp(),
        lo: a.min(z),
        hi: a.max(z),
    })
}

/// Weighted concordant and comparable pair totals; concordant counts are
/// doubled so that predictor ties contribute one unit each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcordanceCounts {
    pub twice_concordant: f64,
    pub comparable: f64,
}

impl ConcordanceCounts {
    pub fn value(&self) -> Result<f64> {
        if self.comparable > 0.0 {
            Ok(self.twice_concordant / (2.0 * self.comparable))
        } else {
            Err(Error::NoComparablePairs)
        }
    }
}

struct Fenwick(Vec<f64>);

impl Fenwick {
    fn add(&mut self, mut i: usize, v: f64) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over indices `< i`.
    fn prefix(&self, mut i: usize) -> f64 {
        let mut s = 0.0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Pair sums for weighted Harrell's C in `O(n log n)`.
///
/// A pair is comparable when `i` has an event and `t_i < t_j`; it is
/// concordant when `lp_i > lp_j`. Pairs are weighted by `w_i w_j`.
pub fn concordance_counts(lp: &[f64], time: &[f64], event: &[bool], weight: &[f64]) -> Result<ConcordanceCounts> {
    let n = lp.len();
    if time.len() != n || event.len() != n || weight.len() != n {
        return Err(Error::Misaligned("predictors must align with rows".into()));
    }
    if lp.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("linear predictor contains NaN".into()));
    }
    let mut levels: Vec<f64> = lp.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let rank = |v: f64| levels.partition_point(|&l| l < v);
    let mut tree = Fenwick(vec![0.0; levels.len() + 1]);
    let mut total = 0.0;
    let sets = RiskSets::new(time);
    let mut counts = ConcordanceCounts {
        twice_concordant: 0.0,
        comparable: 0.0,
    };
    for &(s, e) in &sets.groups {
        for &i in &sets.order[s..e] {
            if !event[i] {
                continue;
            }
            let r = rank(lp[i]);
            let below = tree.prefix(r);
            let at_or_below = tree.prefix(r + 1);
            let tied = at_or_below - below;
            counts.twice_concordant += weight[i] * (2.0 * below + tied);
            counts.comparable += weight[i] * total;
        }
        for &i in &sets.order[s..e] {
            tree.add(rank(lp[i]), weight[i]);
            total += weight[i];
        }
    }
    Ok(counts)
}

/// Weighted Harrell's C of `lp` against the rows of `data`.
pub fn concordance(lp: &[f64], data: &SurvivalDataset) -> Result<f64> {
    concordance_counts(lp, &data.time, &data.event, &data.weight)?.value()
}

/// Fold assignment for one cross-validation repeat, stratified on events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub seed: u64,
    pub k: usize,
    pub repeat_index: u64,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    /// Shuffles events and non-events separately with a generator seeded by
    /// `seed + repeat_index` and deals each list round-robin into `k` folds.
    pub fn new(event: &[bool], k: usize, seed: u64, repeat_index: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("cv_folds", "must be >= 2"));
        }
        if event.len() < k {
            return Err(Error::InvalidInput(format!("{} rows cannot fill {k} folds", event.len())));
        }
        for stream in 0..2u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(repeat_index));
            rng.set_stream(stream);
            let mut cases: Vec<usize> = (0..event.len()).filter(|&i| event[i]).collect();
            let mut controls: Vec<usize> = (0..event.len()).filter(|&i| !event[i]).collect();
            cases.shuffle(&mut rng);
            controls.shuffle(&mut rng);
            let mut assignment = vec![0; event.len()];
            for (pos, &i) in cases.iter().chain(&controls).enumerate() {
                assignment[i] = pos % k;
            }
            let plan = Self {
                seed,
                k,
                repeat_index,
                assignment,
            };
            if plan.folds_without_events(event).is_empty() {
                return Ok(plan);
            }
            log::debug!("fold plan for repeat {repeat_index} has a fold without events; replanning");
        }
        Err(Error::InvalidInput(format!(
            "repeat {repeat_index}: {} events cannot cover {k} folds",
            event.iter().filter(|&&e| e).count()
        )))
    }

    pub fn folds_without_events(&self, event: &[bool]) -> Vec<usize> {
        let mut with: BTreeSet<usize> = BTreeSet::new();
        for (i, &f) in self.assignment.iter().enumerate() {
            if event[i] {
                with.insert(f);
            }
        }
        (0..self.k).filter(|f| !with.contains(f)).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != fold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl From<&AnalysisConfig> for CvOptions {
    fn from(cfg: &AnalysisConfig) -> Self {
        Self {
            folds: cfg.cv_folds,
            repeats: cfg.cv_repeats,
            seed: cfg.rng_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub mean: f64,
    pub per_repeat: Vec<f64>,
}

/// Columns of `data`, in order, skipping any that is constant or a linear
/// combination of the columns kept before it.
pub fn independent_columns(data: &SurvivalDataset) -> Vec<String> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for (name, col) in data.names.iter().zip(&data.columns) {
        let (m, sd) = mean_sd(col);
        if !(sd > 0.0) {
            continue;
        }
        let mut v: Vec<f64> = col.iter().map(|x| (x - m) / sd).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
            keep.push(name.clone());
        }
    }
    keep
}

/// Lenient fit on the independent columns of `data`.
pub fn fit_independent(data: &SurvivalDataset) -> Result<CoxFit> {
    let keep = independent_columns(data);
    if keep.len() < data.names.len() {
        let dropped: Vec<&str> = data
            .names
            .iter()
            .filter(|n| !keep.contains(n))
            .map(String::as_str)
            .collect();
        log::debug!("dropping dependent columns [{}]", dropped.join(", "));
    }
    cox_fit_lenient(&data.select(&keep)?)
}

fn fold_concordance(data: &SurvivalDataset, plan: &FoldPlan, fold: usize) -> Result<Option<f64>> {
    let (train_rows, test_rows) = plan.split(fold);
    let train = data.subset(&train_rows);
    let test = data.subset(&test_rows);
    let fit = fit_independent(&train)?;
    let lp = fit.linear_predictor(&test)?;
    match concordance(&lp, &test) {
        Ok(c) => Ok(Some(c)),
        Err(Error::NoComparablePairs) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mean over repeats of the mean held-out concordance over folds, using all
/// columns of `data` as predictors.
pub fn repeated_cv_concordance(data: &SurvivalDataset, options: &CvOptions) -> Result<CvResult> {
    if options.repeats == 0 {
        return Err(Error::invalid("cv_repeats", "must be >= 1"));
    }
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let mut per_repeat = Vec::with_capacity(options.repeats);
    for r in 0..options.repeats {
        let plan = FoldPlan::new(&data.event, options.folds, options.seed, r as u64)?;
        let folds: Vec<Result<Option<f64>>> = (0..options.folds)
            .into_par_iter()
            .map(|f| fold_concordance(data, &plan, f))
            .collect();
        let mut values = Vec::with_capacity(options.folds);
        for v in folds {
            if let Some(c) = v? {
                values.push(c);
            }
        }
        if values.is_empty() {
            return Err(Error::NoComparablePairs);
        }
        per_repeat.push(values.iter().sum::<f64>() / values.len() as f64);
    }
    let mean = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
    Ok(CvResult { mean, per_repeat })
}

/// Named group of design columns entered together (a categorical predictor's
/// indicators, or a single numeric column).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorBlock {
    pub name: String,
    pub columns: Vec<String>,
}

/// Traditional-predictor design with reference levels dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub blocks: Vec<PredictorBlock>,
}

struct DesignBuilder<'a> {
    covs: &'a [&'a SubjectCovariates],
    design: Design,
}

impl DesignBuilder<'_> {
    fn numeric(&mut self, block: &str, name: &str, values: Vec<f64>) {
        if mean_sd(&values).1 > 0.0 {
            self.design.names.push(name.to_string());
            self.design.columns.push(values);
            if let Some(b) = self.design.blocks.iter_mut().find(|b| b.name == block) {
                b.columns.push(name.to_string());
            } else {
                self.design.blocks.push(PredictorBlock {
                    name: block.to_string(),
                    columns: vec![name.to_string()],
                });
            }
        }
    }

    fn flag(&mut self, name: &str, get: impl Fn(&SubjectCovariates) -> Option<bool>) {
        let v = self.covs.iter().map(|c| f64::from(u8::from(get(c) == Some(true)))).collect();
        self.numeric(name, name, v);
    }

    fn categorical<T: Copy + PartialEq + std::fmt::Display>(
        &mut self,
        name: &str,
        levels: &[T],
        reference: T,
        get: impl Fn(&SubjectCovariates) -> Option<T>,
    ) {
        for &level in levels.iter().filter(|&&l| l != reference) {
            let v = self.covs.iter().map(|c| f64::from(u8::from(get(c) == Some(level)))).collect();
            self.numeric(name, &format!("{name}={level}"), v);
        }
    }
}

/// Names of the traditional predictors, in design order.
pub const TRADITIONAL_PREDICTORS: [&str; 15] = [
    "age",
    "sex",
    "race_ethnicity",
    "education",
    "bmi_category",
    "diabetes",
    "chd",
    "chf",
    "heart_attack",
    "stroke",
    "cancer",
    "alcohol",
    "smoking",
    "mobility_problem",
    "self_reported_health",
];

/// Indicator coding of the traditional predictors. Columns that are constant
/// over `covs` are dropped.
pub fn traditional_design(covs: &[&SubjectCovariates]) -> Result<Design> {
    if let Some(c) = covs.iter().find(|c| !c.is_complete()) {
        return Err(Error::InvalidInput(format!(
            "subject {} is missing {}",
            c.subject_id,
            c.missing_fields().join(", ")
        )));
    }
    let mut b = DesignBuilder {
        covs,
        design: Design {
            names: Vec::new(),
            columns: Vec::new(),
            blocks: Vec::new(),
        },
    };
    b.numeric("age", "age", covs.iter().map(|c| c.age_years).collect());
    b.categorical("sex", Sex::LEVELS, Sex::Male, |c| c.sex);
    b.categorical("race_ethnicity", RaceEthnicity::LEVELS, RaceEthnicity::NonHispanicWhite, |c| {
        c.race_ethnicity
    });
    b.categorical("education", Education::LEVELS, Education::MoreThanHighSchool, |c| c.education);
    b.categorical("bmi_category", BmiCategory::LEVELS, BmiCategory::Normal, |c| c.bmi_category);
    b.flag("diabetes", |c| c.diabetes);
    b.flag("chd", |c| c.chd);
    b.flag("chf", |c| c.chf);
    b.flag("heart_attack", |c| c.heart_attack);
    b.flag("stroke", |c| c.stroke);
    b.flag("cancer", |c| c.cancer);
    b.categorical("alcohol", Alcohol::LEVELS, Alcohol::Never, |c| Some(c.alcohol));
    b.categorical("smoking", Smoking::LEVELS, Smoking::Never, |c| c.smoking);
    b.flag("mobility_problem", |c| c.mobility_problem);
    b.categorical(
        "self_reported_health",
        SelfRatedHealth::LEVELS,
        SelfRatedHealth::Excellent,
        |c| c.self_reported_health,
    );
    Ok(b.design)
}

/// Counts of subjects dropped while assembling the mortality sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JoinReport {
    pub not_included: usize,
    pub no_covariates: usize,
    pub outside_age_range: usize,
    pub incomplete_covariates: usize,
    pub no_mortality: usize,
    pub missing_activity: usize,
    pub analysed: usize,
}

/// Mortality sample: included subjects within the age range with complete
/// covariates, linked mortality and every requested activity variable.
/// Activity columns are Winsorized at the configured percentile.
pub fn assemble_dataset(
    subjects: &[SubjectSummary],
    covariates: &[SubjectCovariates],
    mortality: &[MortalityRecord],
    activity_vars: &[String],
    cfg: &AnalysisConfig,
) -> Result<(SurvivalDataset, Design, JoinReport)> {
    let covs: BTreeMap<&str, &SubjectCovariates> = covariates.iter().map(|c| (c.subject_id.as_str(), c)).collect();
    let deaths: BTreeMap<&str, &MortalityRecord> = mortality.iter().map(|m| (m.subject_id.as_str(), m)).collect();
    let mut report = JoinReport::default();
    let mut rows: Vec<(&SubjectSummary, &SubjectCovariates, &MortalityRecord)> = Vec::new();
    for s in subjects {
        if !s.included {
            report.not_included += 1;
            continue;
        }
        let Some(&c) = covs.get(s.subject_id.as_str()) else {
            report.no_covariates += 1;
            continue;
        };
        if c.age_years < cfg.age_range.0 || c.age_years > cfg.age_range.1 {
            report.outside_age_range += 1;
            continue;
        }
        if !c.is_complete() {
            report.incomplete_covariates += 1;
            continue;
        }
        let Some(&m) = deaths.get(s.subject_id.as_str()) else {
            report.no_mortality += 1;
            continue;
        };
        if activity_vars.iter().any(|v| !s.means.get(v).is_some_and(|x| x.is_finite())) {
            report.missing_activity += 1;
            continue;
        }
        rows.push((s, c, m));
    }
    report.analysed = rows.len();
    if rows.is_empty() {
        return Err(Error::InvalidInput("no subjects remain for the mortality analysis".into()));
    }
    let mut data = SurvivalDataset::new(
        rows.iter().map(|r| r.0.subject_id.clone()).collect(),
        rows.iter().map(|r| r.2.followup_months).collect(),
        rows.iter().map(|r| r.2.event).collect(),
        rows.iter().map(|r| r.1.survey_weight).collect(),
    )?;
    let cov_rows: Vec<&SubjectCovariates> = rows.iter().map(|r| r.1).collect();
    let design = traditional_design(&cov_rows)?;
    for (name, col) in design.names.iter().zip(&design.columns) {
        data.add_column(name.clone(), col.clone())?;
    }
    for v in activity_vars {
        let raw: Vec<f64> = rows.iter().map(|r| r.0.means[v]).collect();
        data.add_column(v.clone(), winsorize_upper(&raw, cfg.winsor_percentile)?)?;
    }
    Ok((data, design, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateRow {
    pub predictor: String,
    pub cvc: f64,
}

/// Repeated cvC of one-predictor models, one per block.
pub fn univariate_concordance(
    data: &SurvivalDataset,
    blocks: &[PredictorBlock],
    options: &CvOptions,
) -> Result<Vec<UnivariateRow>> {
    blocks
        .iter()
        .map(|b| {
            let cvc = repeated_cv_concordance(&data.select(&b.columns)?, options)?.mean;
            Ok(UnivariateRow {
                predictor: b.name.clone(),
                cvc,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub model: String,
    pub columns: Vec<String>,
    pub cvc: f64,
    pub steps_hr: Option<HazardRatio>,
    pub steps_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSuite {
    pub steps_variable: String,
    pub rows: Vec<ModelRow>,
}

/// Traditional predictors alone, with MIMS, with steps, and with both. Steps
/// HR per `cfg.hr_step_increment` and Wald p come from a fit on all rows.
pub fn model_suite(
    data: &SurvivalDataset,
    traditional: &[String],
    steps_variable: &str,
    mims_variable: &str,
    cfg: &AnalysisConfig,
) -> Result<ModelSuite> {
    let options = CvOptions::from(cfg);
    let with = |extra: &[&str]| -> Vec<String> {
        traditional
            .iter()
            .cloned()
            .chain(extra.iter().map(|s| s.to_string()))
            .collect()
    };
    let specs = [
        ("traditional".to_string(), with(&[])),
        ("traditional + mims".to_string(), with(&[mims_variable])),
        (format!("traditional + {steps_variable}"), with(&[steps_variable])),
        (format!("traditional + {steps_variable} + mims"), with(&[steps_variable, mims_variable])),
    ];
    let mut rows = Vec::with_capacity(specs.len());
    for (model, columns) in specs {
        let subset = data.select(&columns)?;
        let cvc = repeated_cv_concordance(&subset, &options)?.mean;
        let (steps_hr, steps_p) = if columns.iter().any(|c| c == steps_variable) {
            let fit = fit_independent(&subset)?;
            if fit.names.iter().any(|n| n == steps_variable) {
                (
                    Some(hazard_ratio(&fit, steps_variable, cfg.hr_step_increment)?),
                    Some(fit.wald_p(steps_variable)?),
                )
            } else {
                log::warn!("{model}: {steps_variable} is collinear with the other predictors");
                (None, None)
            }
        } else {
            (None, None)
        };
        rows.push(ModelRow {
            model,
            columns,
            cvc,
            steps_hr,
            steps_p,
        });
    }
    Ok(ModelSuite {
        steps_variable: steps_variable.to_string(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardRow {
    pub variable: String,
    pub raw: HazardRatio,
    pub scaled: HazardRatio,
    pub sd: f64,
}

/// Adjusted HR per `cfg.hr_step_increment` and per standard deviation for
/// each steps variable. Variables collinear with the traditional predictors
/// are left out.
pub fn hazard_ratio_table(
    data: &SurvivalDataset,
    traditional: &[String],
    steps_variables: &[String],
    cfg: &AnalysisConfig,
) -> Result<Vec<HazardRow>> {
    let mut rows = Vec::with_capacity(steps_variables.len());
    for v in steps_variables {
        let columns: Vec<String> = traditional.iter().cloned().chain([v.clone()]).collect();
        let subset = data.select(&columns)?;
        let raw_fit = fit_independent(&subset)?;
        if !raw_fit.names.contains(v) {
            log::warn!("{v} is collinear with the traditional predictors; no hazard ratio");
            continue;
        }
        let raw = hazard_ratio(&raw_fit, v, cfg.hr_step_increment)?;
        let scaled_data = standardize(&subset, v)?;
        let scaled = hazard_ratio(&fit_independent(&scaled_data)?, v, 1.0)?;
        let sd = scaled_data.scaling(v).map(|s| s.1).unwrap_or(f64::NAN);
        rows.push(HazardRow {
            variable: v.clone(),
            raw,
            scaled,
            sd,
        });
    }
    Ok(rows)
}
