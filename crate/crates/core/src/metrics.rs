//! Performance metrics, the AUC / Mann-Whitney relations, and association
//! measures (Pearson, partial correlation, distance covariance).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::stats::{cov_pop, mean, var_pop};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Auc,
    Accuracy,
    Mse,
    Mae,
    Pearson,
    Ccc,
}

impl MetricId {
    pub const ALL: [MetricId; 6] = [
        MetricId::Auc,
        MetricId::Accuracy,
        MetricId::Mse,
        MetricId::Mae,
        MetricId::Pearson,
        MetricId::Ccc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Auc => "auc",
            MetricId::Accuracy => "accuracy",
            MetricId::Mse => "mse",
            MetricId::Mae => "mae",
            MetricId::Pearson => "pearson",
            MetricId::Ccc => "ccc",
        }
    }

    /// True for metrics computed from 0/1 labels and scores.
    pub fn is_classification(self) -> bool {
        matches!(self, MetricId::Auc | MetricId::Accuracy)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::schema("metric", format!("unknown metric `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherBetter,
    LowerBetter,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub id: MetricId,
    pub orientation: Orientation,
    /// Random-guess value where one is known analytically (AUC only).
    pub baseline: Option<f64>,
}

impl MetricSpec {
    pub fn new(id: MetricId) -> Self {
        let orientation = match id {
            MetricId::Mse | MetricId::Mae => Orientation::LowerBetter,
            _ => Orientation::HigherBetter,
        };
        let baseline = (id == MetricId::Auc).then_some(0.5);
        Self {
            id,
            orientation,
            baseline,
        }
    }

    /// `a` is at least as good as `b`.
    pub fn at_least_as_good(&self, a: f64, b: f64) -> bool {
        match self.orientation {
            Orientation::HigherBetter => a >= b,
            Orientation::LowerBetter => a <= b,
        }
    }

    /// +1 when larger is better, -1 otherwise.
    pub fn sign(&self) -> f64 {
        match self.orientation {
            Orientation::HigherBetter => 1.0,
            Orientation::LowerBetter => -1.0,
        }
    }

    pub fn evaluate(&self, y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
        evaluate(self, y_true, y_pred)
    }
}

impl From<MetricId> for MetricSpec {
    fn from(id: MetricId) -> Self {
        MetricSpec::new(id)
    }
}

/// Computes the metric on `(y_true, y_pred)`.
pub fn evaluate(spec: &MetricSpec, y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_len(y_true.len(), y_pred.len())?;
    if y_true.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "{} needs at least 2 observations",
            spec.id
        )));
    }
    match spec.id {
        MetricId::Auc => auc(y_true, y_pred),
        MetricId::Accuracy => Ok(accuracy(y_true, y_pred)),
        MetricId::Mse => Ok(mean(&y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).collect::<Vec<_>>())),
        MetricId::Mae => Ok(mean(&y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())),
        MetricId::Pearson => pearson(y_true, y_pred),
        MetricId::Ccc => ccc(y_true, y_pred),
    }
}

/// Proportion of rows where `pred >= 0.5` agrees with a 0/1 label.
pub fn accuracy(y_true: &[f64], y_pred: &[f64]) -> f64 {
    let hits = y_true
        .iter()
        .zip(y_pred)
        .filter(|(t, p)| (**p >= 0.5) == (**t == 1.0))
        .count();
    hits as f64 / y_true.len() as f64
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
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

/// Mann-Whitney U of the positives from the rank sum: the number of
/// (positive, negative) pairs ordered correctly, ties counting 1/2.
pub fn rank_sum_u(y_true: &[f64], scores: &[f64]) -> Result<f64> {
    check_len(y_true.len(), scores.len())?;
    let n_p = y_true.iter().filter(|&&t| t == 1.0).count();
    if n_p == 0 || n_p == y_true.len() {
        return Err(Error::UndefinedMetric("AUC needs both labels in y_true".into()));
    }
    let ranks = average_ranks(scores);
    let r_p: f64 = ranks.iter().zip(y_true).filter(|(_, t)| **t == 1.0).map(|(r, _)| r).sum();
    let np = n_p as f64;
    Ok(r_p - np * (np + 1.0) / 2.0)
}

/// Area under the ROC curve from the rank-sum formula; ties count 1/2.
pub fn auc(y_true: &[f64], scores: &[f64]) -> Result<f64> {
    let u = rank_sum_u(y_true, scores)?;
    let n_p = y_true.iter().filter(|&&t| t == 1.0).count();
    Ok(u / (n_p * (y_true.len() - n_p)) as f64)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    let vx = var_pop(x);
    let vy = var_pop(y);
    if vx <= 0.0 || vy <= 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant vector".into()));
    }
    Ok((cov_pop(x, y) / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Concordance correlation coefficient with 1/n moments.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    let d = var_pop(x) + var_pop(y) + (mean(x) - mean(y)).powi(2);
    if d <= 0.0 {
        return Err(Error::UndefinedMetric("concordance of two identical constants".into()));
    }
    Ok(2.0 * cov_pop(x, y) / d)
}

/// Mann-Whitney U of the negatives, `n_n n_p (1 - auc)`.
pub fn mann_whitney_u(auc: f64, n_n: usize, n_p: usize) -> f64 {
    n_n as f64 * n_p as f64 * (1.0 - auc)
}

/// Mean and standard deviation of the AUC when scores carry no signal.
pub fn auc_null_gaussian(n_n: usize, n_p: usize) -> (f64, f64) {
    let (a, b) = (n_n as f64, n_p as f64);
    (0.5, ((a + b + 1.0) / (12.0 * a * b)).sqrt())
}

/// Sample partial correlation of `x` and `y` given a numeric-coded `c`,
/// from plug-in Pearson correlations.
pub fn partial_correlation(x: &[f64], y: &[f64], c: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    check_len(x.len(), c.len())?;
    let rxy = pearson(x, y)?;
    let rxc = pearson(x, c)?;
    let ryc = pearson(y, c)?;
    let d = (1.0 - rxc * rxc) * (1.0 - ryc * ryc);
    if d <= 0.0 {
        return Err(Error::Degenerate("a variable is perfectly correlated with the confounder".into()));
    }
    Ok((rxy - rxc * ryc) / d.sqrt())
}

/// Row means of the pairwise distance matrix `|v_i - v_j|` and their grand
/// mean, in O(n log n).
fn distance_row_means(v: &[f64]) -> (Vec<f64>, f64) {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let total: f64 = v.iter().sum();
    let mut rows = vec![0.0; n];
    let mut below = 0.0;
    for (k, &i) in order.iter().enumerate() {
        // sum_j |v_i - v_j| = (k v_i - below) + ((total - below - v_i) - (n - k - 1) v_i)
        let x = v[i];
        let above = total - below - x;
        rows[i] = (k as f64 * x - below + above - (n - k - 1) as f64 * x) / n as f64;
        below += x;
    }
    let grand = rows.iter().sum::<f64>() / n as f64;
    (rows, grand)
}

/// Precomputed distance summaries of one variable for repeated
/// distance-covariance evaluations.
#[derive(Clone, Debug)]
pub struct DistanceProfile {
    values: Vec<f64>,
    rows: Vec<f64>,
    grand: f64,
}

impl DistanceProfile {
    pub fn new(v: &[f64]) -> Self {
        let (rows, grand) = distance_row_means(v);
        Self {
            values: v.to_vec(),
            rows,
            grand,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared distance covariance with `other` read through `perm`
    /// (`other_i -> other[perm[i]]`), V-statistic form.
    pub fn dcov2_permuted(&self, other: &DistanceProfile, perm: Option<&[usize]>) -> f64 {
        let n = self.values.len();
        let idx = |i: usize| perm.map_or(i, |p| p[i]);
        let ov: Vec<f64> = (0..n).map(|i| other.values[idx(i)]).collect();
        let mut s1 = 0.0;
        for i in 0..n {
            let (xi, yi) = (self.values[i], ov[i]);
            let mut acc = 0.0;
            for j in (i + 1)..n {
                acc += (xi - self.values[j]).abs() * (yi - ov[j]).abs();
            }
            s1 += acc;
        }
        let nf = n as f64;
        let s1 = 2.0 * s1 / (nf * nf);
        let s3 = (0..n).map(|i| self.rows[i] * other.rows[idx(i)]).sum::<f64>() / nf;
        (s1 + self.grand * other.grand - 2.0 * s3).max(0.0)
    }
}

/// Squared sample distance covariance (V-statistic, double-centered).
pub fn dcov2(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::InvalidParameter("distance covariance needs at least 2 points".into()));
    }
    Ok(DistanceProfile::new(x).dcov2_permuted(&DistanceProfile::new(y), None))
}

/// Squared distance correlation; 0 when either distance variance is 0.
pub fn dcor2(x: &[f64], y: &[f64]) -> Result<f64> {
    let vx = dcov2(x, x)?;
    let vy = dcov2(y, y)?;
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(0.0);
    }
    Ok((dcov2(x, y)? / (vx * vy).sqrt()).clamp(0.0, 1.0))
}

/// Partial distance covariance,
/// `dcov2(x,y) - dcov2(x,c) dcov2(y,c) / dcov2(c,c)`.
pub fn pdcov(x: &[f64], y: &[f64], c: &[f64]) -> Result<f64> {
    check_len(x.len(), c.len())?;
    let vc = dcov2(c, c)?;
    if vc <= 0.0 {
        return Err(Error::Degenerate("confounder has zero distance variance".into()));
    }
    Ok(dcov2(x, y)? - dcov2(x, c)? * dcov2(y, c)? / vc)
}

/// The `sqrt((1 - dcor2(x,c)^2)(1 - dcor2(y,c)^2))` factor shared by both
/// partial distance correlation forms.
pub(crate) fn pdcor_shrink(x: &[f64], y: &[f64], c: &[f64]) -> Result<f64> {
    let rx = dcor2(x, c)?;
    let ry = dcor2(y, c)?;
    let d = (1.0 - rx * rx) * (1.0 - ry * ry);
    if d <= 0.0 {
        return Err(Error::Degenerate("a variable is a function of the confounder in distance".into()));
    }
    Ok(d.sqrt())
}

/// Partial distance correlation from the definitional closed form.
pub fn pdcor(x: &[f64], y: &[f64], c: &[f64]) -> Result<f64> {
    let vx = dcov2(x, x)?;
    let vy = dcov2(y, y)?;
    if vx <= 0.0 || vy <= 0.0 {
        return Err(Error::Degenerate("zero distance variance".into()));
    }
    Ok(pdcov(x, y, c)? / ((vx * vy).sqrt() * pdcor_shrink(x, y, c)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn spec(id: MetricId) -> MetricSpec {
        MetricSpec::new(id)
    }

    fn brute_auc(y: &[f64], s: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == 0.0 && y[j] == 1.0 {
                    den += 1.0;
                    num += if s[j] > s[i] { 1.0 } else if s[j] == s[i] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    /// Double-centered distance matrices, summed elementwise.
    fn brute_dcov2(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let center = |v: &[f64]| {
            let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (v[i] - v[j]).abs()).collect()).collect();
            let row: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let g = row.iter().sum::<f64>() / n as f64;
            (0..n)
                .map(|i| (0..n).map(|j| d[i][j] - row[i] - row[j] + g).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        let (a, b) = (center(x), center(y));
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i][j] * b[i][j];
            }
        }
        s / (n * n) as f64
    }

    #[test]
    fn auc_examples() {
        let s = spec(MetricId::Auc);
        assert_eq!(s.evaluate(&[0.0, 0.0, 1.0, 1.0], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(s.evaluate(&[0.0, 1.0, 0.0, 1.0], &[0.9, 0.8, 0.2, 0.1]).unwrap(), 0.25);
        assert_eq!(brute_auc(&[0.0, 1.0, 0.0, 1.0], &[0.9, 0.8, 0.2, 0.1]), 0.25);
        assert_eq!(s.evaluate(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 0.5);
        assert!(matches!(s.evaluate(&[1.0, 1.0], &[0.2, 0.3]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn regression_metric_examples() {
        assert_eq!(spec(MetricId::Mae).evaluate(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.5);
        assert_eq!(spec(MetricId::Mse).evaluate(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.5);
        let y = [0.3, 1.7, -2.0, 4.0];
        assert!((spec(MetricId::Ccc).evaluate(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        assert!((spec(MetricId::Pearson).evaluate(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(spec(MetricId::Accuracy).evaluate(&[0.0, 1.0, 1.0, 0.0], &[0.2, 0.7, 0.4, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn orientations_and_baselines() {
        for id in MetricId::ALL {
            let s = MetricSpec::new(id);
            let lower = matches!(id, MetricId::Mse | MetricId::Mae);
            assert_eq!(s.orientation == Orientation::LowerBetter, lower);
            assert_eq!(s.baseline.is_some(), id == MetricId::Auc);
            assert_eq!(id.name().parse::<MetricId>().unwrap(), id);
        }
        assert!("roc".parse::<MetricId>().is_err());
    }

    #[test]
    fn mann_whitney_examples() {
        assert_eq!(mann_whitney_u(0.75, 10, 5), 12.5);
        assert_eq!(mann_whitney_u(1.0, 7, 3), 0.0);
        assert_eq!(mann_whitney_u(0.5, 4, 4), 8.0);
    }

    #[test]
    fn auc_null_sd() {
        let (m, s) = auc_null_gaussian(50, 50);
        assert_eq!(m, 0.5);
        assert!((s - 0.058023).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for n in 1..200 {
            let (m, s) = auc_null_gaussian(n, n);
            assert_eq!(m, 0.5);
            assert!((s - ((2 * n + 1) as f64 / (12.0 * (n * n) as f64)).sqrt()).abs() < 1e-15);
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dcov2(&[2.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 0.0);
        assert_eq!(dcor2(&[2.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 0.0);
        let x = [0.3, -1.0, 2.2, 0.9, 5.0];
        assert!((dcor2(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let (x, y) = ([1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 2.0, 4.0]);
        assert!((dcov2(&x, &y).unwrap() - brute_dcov2(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn partial_correlation_reduces_when_orthogonal() {
        let x = [1.0, -1.0, -1.0, 1.0];
        let y = [2.0, -2.0, 1.0, -1.0];
        let c = [1.0, 1.0, -1.0, -1.0];
        assert_eq!(pearson(&x, &c).unwrap(), 0.0);
        assert_eq!(pearson(&y, &c).unwrap(), 0.0);
        assert!((partial_correlation(&x, &y, &c).unwrap() - pearson(&x, &y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn partial_correlation_matches_residual_definition() {
        let x = [1.0, 2.0, 4.0, 3.0];
        let y = [2.0, 1.0, 5.0, 7.0];
        let c = [0.0, 0.0, 1.0, 1.0];
        let resid = |v: &[f64]| -> Vec<f64> {
            let b = cov_pop(v, &c) / var_pop(&c);
            let (mv, mc) = (mean(v), mean(&c));
            v.iter().zip(&c).map(|(a, z)| a - mv - b * (z - mc)).collect()
        };
        let oracle = pearson(&resid(&x), &resid(&y)).unwrap();
        assert!((partial_correlation(&x, &y, &c).unwrap() - oracle).abs() < 1e-12);
        assert!(matches!(partial_correlation(&c, &y, &c), Err(Error::Degenerate(_))));
        assert!(matches!(partial_correlation(&[1.0; 4], &y, &c), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn partial_correlation_conditional_independence() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = c.iter().map(|z| 0.8 * z + rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = c.iter().map(|z| -1.2 * z + rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(partial_correlation(&x, &y, &c).unwrap().abs() < 0.02);
    }

    #[test]
    fn pdcov_matches_displayed_formula() {
        let x = [0.5, 1.5, -0.2, 2.0, 0.0, 1.1];
        let y = [1.0, 0.7, 0.1, 2.5, -0.4, 0.9];
        let c = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let b = |u: &[f64], v: &[f64]| brute_dcov2(u, v);
        let expected = b(&x, &y) - b(&x, &c) * b(&y, &c) / b(&c, &c);
        assert!((pdcov(&x, &y, &c).unwrap() - expected).abs() < 1e-12);
        let r = |u: &[f64], v: &[f64]| b(u, v) / (b(u, u) * b(v, v)).sqrt();
        let den = (b(&x, &x) * b(&y, &y)).sqrt()
            * ((1.0 - r(&x, &c).powi(2)) * (1.0 - r(&y, &c).powi(2))).sqrt();
        assert!((pdcor(&x, &y, &c).unwrap() - expected / den).abs() < 1e-12);
    }

    #[test]
    fn pdcov_large_sample_behaviour() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let c: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<bool>())).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let pd = pdcov(&x, &y, &c).unwrap();
        assert!((pd - dcov2(&x, &y).unwrap()).abs() < 0.01);
        assert!((pdcor(&x, &x, &c).unwrap() - 1.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn auc_rank_equals_pairwise(
            rows in proptest::collection::vec((any::<bool>(), -1e3f64..1e3), 2..60),
        ) {
            let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.0))).collect();
            let s: Vec<f64> = rows.iter().map(|r| r.1).collect();
            prop_assume!(y.contains(&0.0) && y.contains(&1.0));
            let a = auc(&y, &s).unwrap();
            prop_assert!((a - brute_auc(&y, &s)).abs() < 1e-12);
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let mut sorted = s.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            if sorted.len() == s.len() {
                prop_assert!((a + auc(&y, &neg).unwrap() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn metrics_permutation_invariant(
            rows in proptest::collection::vec((any::<bool>(), 0.0f64..1.0), 3..40),
            rot in 1usize..40,
        ) {
            let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.0))).collect();
            let s: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let n = y.len();
            let yp: Vec<f64> = (0..n).map(|i| y[(i + rot) % n]).collect();
            let sp: Vec<f64> = (0..n).map(|i| s[(i + rot) % n]).collect();
            for id in MetricId::ALL {
                let sp_ = MetricSpec::new(id);
                match (sp_.evaluate(&y, &s), sp_.evaluate(&yp, &sp)) {
                    (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn distance_invariants(
            rows in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..30),
            shift in -5.0f64..5.0,
        ) {
            let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let d = dcov2(&x, &y).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - brute_dcov2(&x, &y)).abs() < 1e-9);
            let r = dcor2(&x, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
            prop_assert!((dcov2(&xs, &y).unwrap() - d).abs() < 1e-9);
        }
    }
}
