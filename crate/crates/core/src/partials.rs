//! Partial covariance, correlation and distance covariance/correlation
//! computed from restricted permutations.
//!
//! The partial covariance of `x` and `y` given a categorical `c` equals
//! `cov(x, y) - E[cov(x, y*)]`, where `y*` ranges over within-stratum
//! shuffles of `y`. With 1/n moments this holds exactly in-sample, and the
//! expectation has the closed form `(1/n) sum_s n_s xbar_s ybar_s - xbar ybar`.
//! The distance versions replace covariance with squared distance
//! covariance and estimate the expectation by Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::metrics::{dcov2, pdcor, pdcor_shrink, pdcov, DistanceProfile};
use crate::shuffle::{count_restricted, enumerate_restricted_permutations, restricted_permutation, strata, RngStream};
use crate::stats::{cov_pop, mean, var_pop};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Pcov,
    Pcor,
    Pdcov,
    Pdcor,
}

/// How the restricted-permutation expectation is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExpectationMode {
    ClosedForm,
    /// Average over every restricted permutation (at most `cap`).
    Enumeration { cap: u64 },
    MonteCarlo { b: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialEstimate {
    pub value: f64,
    pub estimator: Estimator,
    pub expectation_mode: ExpectationMode,
    /// The restricted-permutation expectation subtracted from the raw statistic.
    pub expectation: f64,
}

fn check3(x: &[f64], y: &[f64], c: &[u32]) -> Result<()> {
    check_len(x.len(), y.len())?;
    check_len(x.len(), c.len())?;
    if x.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 observations".into()));
    }
    Ok(())
}

fn stratum_mean(v: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| v[i]).sum::<f64>() / rows.len() as f64
}

/// Exact average of `cov(x, y*)` (1/n) over all restricted permutations.
pub fn restricted_expectation_cov(x: &[f64], y: &[f64], c: &[u32]) -> Result<f64> {
    check3(x, y, c)?;
    let n = x.len() as f64;
    let between: f64 = strata(c)
        .iter()
        .map(|rows| rows.len() as f64 * stratum_mean(x, rows) * stratum_mean(y, rows))
        .sum::<f64>()
        / n;
    Ok(between - mean(x) * mean(y))
}

/// Exact average of `cor(x, y*)`; shuffling leaves the variance of `y`
/// unchanged, so this is the covariance expectation over `sd(x) sd(y)`.
pub fn restricted_expectation_cor(x: &[f64], y: &[f64], c: &[u32]) -> Result<f64> {
    let e = restricted_expectation_cov(x, y, c)?;
    let d = (var_pop(x) * var_pop(y)).sqrt();
    if d <= 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant vector".into()));
    }
    Ok(e / d)
}

/// Pooled within-stratum variance `sum_s n_s var_s / n`.
pub fn pooled_within_variance(v: &[f64], c: &[u32]) -> Result<f64> {
    check_len(v.len(), c.len())?;
    let n = v.len() as f64;
    Ok(strata(c)
        .iter()
        .map(|rows| {
            let m = stratum_mean(v, rows);
            rows.iter().map(|&i| (v[i] - m).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / n)
}

/// Permutation expectation of `stat(y*)` under `mode`.
fn expectation(
    c: &[u32],
    mode: ExpectationMode,
    closed: impl FnOnce() -> Result<f64>,
    stat: impl Fn(&[usize]) -> f64 + Sync,
) -> Result<f64> {
    match mode {
        ExpectationMode::ClosedForm => closed(),
        ExpectationMode::Enumeration { cap } => {
            let perms = enumerate_restricted_permutations(c, cap as u128)?;
            Ok(perms.iter().map(|p| stat(p)).sum::<f64>() / perms.len() as f64)
        }
        ExpectationMode::MonteCarlo { b, seed } => {
            if b < 1 {
                return Err(Error::InvalidParameter("b must be at least 1".into()));
            }
            let draws: Vec<f64> = (0..b)
                .into_par_iter()
                .map(|i| {
                    let mut rng = RngStream::new(seed, i as u64).rng();
                    stat(&restricted_permutation(c, &mut rng))
                })
                .collect();
            Ok(mean(&draws))
        }
    }
}

fn permuted(y: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&j| y[j]).collect()
}

/// `cov(x, y) - E[cov(x, y*)]`.
pub fn pcov_perm(x: &[f64], y: &[f64], c: &[u32], mode: ExpectationMode) -> Result<PartialEstimate> {
    check3(x, y, c)?;
    let e = expectation(c, mode, || restricted_expectation_cov(x, y, c), |p| {
        cov_pop(x, &permuted(y, p))
    })?;
    Ok(PartialEstimate {
        value: cov_pop(x, y) - e,
        estimator: Estimator::Pcov,
        expectation_mode: mode,
        expectation: e,
    })
}

/// `sqrt(var x var y / (var(x|c) var(y|c))) (cor(x, y) - E[cor(x, y*)])`
/// with pooled within-stratum conditional variances.
pub fn pcor_perm(x: &[f64], y: &[f64], c: &[u32], mode: ExpectationMode) -> Result<PartialEstimate> {
    check3(x, y, c)?;
    let (vx, vy) = (var_pop(x), var_pop(y));
    if vx <= 0.0 || vy <= 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant vector".into()));
    }
    let (wx, wy) = (pooled_within_variance(x, c)?, pooled_within_variance(y, c)?);
    if wx <= 0.0 || wy <= 0.0 {
        return Err(Error::Degenerate("zero conditional variance given the confounder".into()));
    }
    let sd = (vx * vy).sqrt();
    let e = expectation(c, mode, || restricted_expectation_cor(x, y, c), |p| {
        cov_pop(x, &permuted(y, p)) / sd
    })?;
    let r = cov_pop(x, y) / sd;
    Ok(PartialEstimate {
        value: (vx * vy / (wx * wy)).sqrt() * (r - e),
        estimator: Estimator::Pcor,
        expectation_mode: mode,
        expectation: e,
    })
}

fn codes_f64(c: &[u32]) -> Vec<f64> {
    c.iter().map(|&v| v as f64).collect()
}

fn monte_carlo_dcov(x: &[f64], y: &[f64], c: &[u32], b: usize, seed: u64) -> Result<(f64, f64)> {
    check3(x, y, c)?;
    if b < 100 {
        return Err(Error::InvalidParameter(format!("Monte Carlo distance estimates need b >= 100, got {b}")));
    }
    let px = DistanceProfile::new(x);
    let py = DistanceProfile::new(y);
    let mode = ExpectationMode::MonteCarlo { b, seed };
    let e = expectation(c, mode, || unreachable!("Monte Carlo mode"), |p| px.dcov2_permuted(&py, Some(p)))?;
    Ok((px.dcov2_permuted(&py, None), e))
}

/// `dcov2(x, y) - E[dcov2(x, y*)]`, expectation by Monte Carlo.
pub fn pdcov_perm(x: &[f64], y: &[f64], c: &[u32], b: usize, seed: u64) -> Result<PartialEstimate> {
    let (d, e) = monte_carlo_dcov(x, y, c, b, seed)?;
    Ok(PartialEstimate {
        value: d - e,
        estimator: Estimator::Pdcov,
        expectation_mode: ExpectationMode::MonteCarlo { b, seed },
        expectation: e,
    })
}

/// `(dcor2(x, y) - E[dcor2(x, y*)]) / sqrt((1 - dcor2(x,c)^2)(1 - dcor2(y,c)^2))`,
/// with the confounder codes used as numeric values for distances.
pub fn pdcor_perm(x: &[f64], y: &[f64], c: &[u32], b: usize, seed: u64) -> Result<PartialEstimate> {
    let (d, e) = monte_carlo_dcov(x, y, c, b, seed)?;
    let vx = dcov2(x, x)?;
    let vy = dcov2(y, y)?;
    if vx <= 0.0 || vy <= 0.0 {
        return Err(Error::Degenerate("zero distance variance".into()));
    }
    let scale = (vx * vy).sqrt();
    let shrink = pdcor_shrink(x, y, &codes_f64(c))?;
    Ok(PartialEstimate {
        value: (d / scale - e / scale) / shrink,
        estimator: Estimator::Pdcor,
        expectation_mode: ExpectationMode::MonteCarlo { b, seed },
        expectation: e / scale,
    })
}

/// Level indicators (first level dropped) as a centered n x (L-1) matrix.
fn centered_indicators(c: &[u32]) -> DMatrix<f64> {
    let groups = strata(c);
    let n = c.len();
    let mut m = DMatrix::<f64>::zeros(n, groups.len().saturating_sub(1));
    for (k, rows) in groups.iter().skip(1).enumerate() {
        let share = rows.len() as f64 / n as f64;
        m.column_mut(k).fill(-share);
        for &i in rows {
            m[(i, k)] += 1.0;
        }
    }
    m
}

/// Regression definition: `cov(x,y) - cov(x,C) var(C)^-1 cov(C,y)`, with
/// `C` the level indicators and 1/n moments.
pub fn definitional_pcov(x: &[f64], y: &[f64], c: &[u32]) -> Result<f64> {
    check3(x, y, c)?;
    let z = centered_indicators(c);
    if z.ncols() == 0 {
        return Ok(cov_pop(x, y));
    }
    let n = x.len() as f64;
    let xv = DVector::from_column_slice(x);
    let yv = DVector::from_column_slice(y);
    let szz = z.tr_mul(&z) / n;
    let szx = z.tr_mul(&xv) / n;
    let szy = z.tr_mul(&yv) / n;
    let inv = szz.try_inverse().ok_or(Error::Singular)?;
    Ok(cov_pop(x, y) - (szx.transpose() * inv * szy)[(0, 0)])
}

/// Correlation of the residuals of `x` and `y` after regression on the
/// confounder level indicators.
pub fn definitional_pcor(x: &[f64], y: &[f64], c: &[u32]) -> Result<f64> {
    let cxy = definitional_pcov(x, y, c)?;
    let cxx = definitional_pcov(x, x, c)?;
    let cyy = definitional_pcov(y, y, c)?;
    if cxx <= 0.0 || cyy <= 0.0 {
        return Err(Error::Degenerate("zero conditional variance given the confounder".into()));
    }
    Ok(cxy / (cxx * cyy).sqrt())
}

/// One line of the estimator comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub estimator: Estimator,
    pub mode: String,
    pub value: f64,
    pub reference: f64,
    pub gap: f64,
}

fn mode_name(mode: &ExpectationMode) -> String {
    match mode {
        ExpectationMode::ClosedForm => "closed_form".into(),
        ExpectationMode::Enumeration { .. } => "enumeration".into(),
        ExpectationMode::MonteCarlo { b, .. } => format!("monte_carlo(b={b})"),
    }
}

/// Runs every estimator on `(x, y, c)` and compares each with its
/// definitional counterpart. Enumeration rows appear when the number of
/// restricted permutations is at most `enumeration_cap`.
pub fn compare_estimators(
    x: &[f64],
    y: &[f64],
    c: &[u32],
    b: usize,
    seed: u64,
    enumeration_cap: u64,
) -> Result<Vec<ComparisonRow>> {
    check3(x, y, c)?;
    let mut modes = vec![ExpectationMode::ClosedForm];
    if count_restricted(c) <= enumeration_cap as u128 {
        modes.push(ExpectationMode::Enumeration { cap: enumeration_cap });
    }
    modes.push(ExpectationMode::MonteCarlo { b, seed });
    let ref_cov = definitional_pcov(x, y, c)?;
    let ref_cor = definitional_pcor(x, y, c).ok();
    let row = |e: PartialEstimate, reference: f64| ComparisonRow {
        estimator: e.estimator,
        mode: mode_name(&e.expectation_mode),
        value: e.value,
        reference,
        gap: (e.value - reference).abs(),
    };
    let mut out = Vec::new();
    for m in &modes {
        out.push(row(pcov_perm(x, y, c, *m)?, ref_cov));
    }
    if let Some(r) = ref_cor {
        for m in &modes {
            out.push(row(pcor_perm(x, y, c, *m)?, r));
        }
    }
    let cf = codes_f64(c);
    if b >= 100 && dcov2(&cf, &cf)? > 0.0 {
        out.push(row(pdcov_perm(x, y, c, b, seed)?, pdcov(x, y, &cf)?));
        if let (Ok(e), Ok(r)) = (pdcor_perm(x, y, c, b, seed), pdcor(x, y, &cf)) {
            out.push(row(e, r));
        }
    }
    Ok(out)
}
