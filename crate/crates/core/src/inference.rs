//! Decision procedures built on the permutation nulls.
//!
//! - the response-learning test (restricted-null p-value of the observed
//!   metric);
//! - the confounding test (mean of a restricted null with `b` equal to the
//!   test size, against a Gaussian reference), plus an exact two-level
//!   permutation form for small test sets;
//! - confounding-corrected metrics that map the observed value from the
//!   restricted null onto a reference null with the same tail probability;
//! - the population-of-interest workflow, where the reference is a
//!   restricted null on a subsample matched to a target joint table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split, split_with_test_size, subsample_to_joint, Dataset, JointTable, SplitIndexes, Stratify};
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::metrics::{auc_null_gaussian, MetricId, MetricSpec};
use crate::nulls::{fit_gaussian, fit_samples, p_value, GaussianFit, NullDistribution, NullProblem, Scheme};
use crate::shuffle::{derive_seed, standard_permutation, RngStream};
use crate::stats::{ecdf, mean, norm_sf, quantile_sorted, sorted_copy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestId {
    ResponseLearning,
    Confounding,
    ConfoundingExact,
    ConfoundingVsBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: TestId,
    pub statistic: f64,
    /// In `(0, 1]`.
    pub p_value: f64,
    /// Gaussian summary of the null the statistic is compared against.
    pub null_summary: GaussianFit,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMethod {
    Empirical,
    Gaussian,
    AnalyticAuc,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub m_o: f64,
    pub m_c: f64,
    pub method: CorrectionMethod,
    pub restricted_fit: GaussianFit,
    pub reference_fit: GaussianFit,
}

/// Reference null for the confounding test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reference {
    /// Mean and sd of a single-permutation reference null.
    Fit(GaussianFit),
    /// The large-sample AUC null for a test set with these label counts.
    AnalyticAuc { n_n: usize, n_p: usize },
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Mean and sd of the samples; sd is 0 for a single sample.
fn summary(samples: &[f64]) -> GaussianFit {
    fit_samples(samples).unwrap_or(GaussianFit {
        a: mean(samples),
        s: 0.0,
    })
}

/// Tests whether the learner picked up response signal beyond what the
/// confounder explains.
pub fn response_learning_test(null_r: &NullDistribution, m_o: f64) -> Result<TestResult> {
    if null_r.scheme != Scheme::Restricted {
        return Err(Error::Contract(format!(
            "the response-learning test needs a restricted null, got {:?}",
            null_r.scheme
        )));
    }
    Ok(TestResult {
        test_id: TestId::ResponseLearning,
        statistic: m_o,
        p_value: p_value(null_r, m_o),
        null_summary: summary(&null_r.samples),
        b: null_r.b,
    })
}

fn require_spread(fit: &GaussianFit, what: &str) -> Result<()> {
    if !(fit.s > 0.0) {
        return Err(Error::DegenerateNull(format!("{what} null has zero standard deviation")));
    }
    Ok(())
}

/// `m_c = (m_o - a_r) s_ref / s_r + a_ref`.
pub fn correct_gaussian(m_o: f64, fit_r: &GaussianFit, fit_s: &GaussianFit) -> Result<CorrectionResult> {
    require_spread(fit_r, "restricted")?;
    Ok(CorrectionResult {
        m_o,
        m_c: (m_o - fit_r.a) * fit_s.s / fit_r.s + fit_s.a,
        method: CorrectionMethod::Gaussian,
        restricted_fit: *fit_r,
        reference_fit: *fit_s,
    })
}

/// Maps `m_o` through the restricted-null ECDF and the reference-null
/// sample quantile function. The result never leaves the reference sample
/// range.
pub fn correct_empirical(m_o: f64, null_r: &NullDistribution, null_s: &NullDistribution) -> Result<CorrectionResult> {
    if null_r.metric.id != null_s.metric.id {
        return Err(Error::Contract("both nulls must use the same metric".into()));
    }
    if null_r.samples.len() < 20 || null_s.samples.len() < 20 {
        return Err(Error::InvalidParameter("empirical correction needs at least 20 samples per null".into()));
    }
    let q = ecdf(&sorted_copy(&null_r.samples), m_o);
    Ok(CorrectionResult {
        m_o,
        m_c: quantile_sorted(&sorted_copy(&null_s.samples), q),
        method: CorrectionMethod::Empirical,
        restricted_fit: fit_gaussian(null_r)?,
        reference_fit: fit_gaussian(null_s)?,
    })
}

/// Corrected AUC against the large-sample no-signal AUC null:
/// `(auc_o - a_r) sigma / s_r + 0.5`.
pub fn correct_auc_analytic(auc_o: f64, fit_r: &GaussianFit, n_n: usize, n_p: usize) -> Result<CorrectionResult> {
    if n_n < 1 || n_p < 1 {
        return Err(Error::InvalidParameter("both label counts must be positive".into()));
    }
    require_spread(fit_r, "restricted")?;
    let (a, sigma) = auc_null_gaussian(n_n, n_p);
    Ok(CorrectionResult {
        m_o: auc_o,
        m_c: (auc_o - fit_r.a) * sigma / fit_r.s + a,
        method: CorrectionMethod::AnalyticAuc,
        restricted_fit: *fit_r,
        reference_fit: GaussianFit { a, s: sigma },
    })
}

/// One-sided test that the restricted-null mean is better than the
/// reference mean, using `N(a, s^2 / b)` for the mean of `b` draws.
///
/// `b` must equal both `null_r.b` and the test-set size; with an analytic
/// AUC reference the test size is `n_n + n_p` and is checked too.
pub fn confounding_test(null_r: &NullDistribution, reference: Reference, b: usize) -> Result<TestResult> {
    if null_r.b != b || null_r.samples.len() != b {
        return Err(Error::Contract(format!(
            "confounding test needs b equal to the test size ({b}), but the null has {} permutations",
            null_r.b
        )));
    }
    let fit = match reference {
        Reference::Fit(f) => f,
        Reference::AnalyticAuc { n_n, n_p } => {
            if null_r.metric.id != MetricId::Auc {
                return Err(Error::Contract("the analytic reference applies to the AUC only".into()));
            }
            if n_n + n_p != b {
                return Err(Error::Contract(format!(
                    "b = {b} differs from the test size {}",
                    n_n + n_p
                )));
            }
            let (a, s) = auc_null_gaussian(n_n, n_p);
            GaussianFit { a, s }
        }
    };
    require_spread(&fit, "reference")?;
    let statistic = mean(&null_r.samples);
    let z = null_r.metric.sign() * (statistic - fit.a) / (fit.s / (b as f64).sqrt());
    Ok(TestResult {
        test_id: TestId::Confounding,
        statistic,
        p_value: clamp_p(norm_sf(z)),
        null_summary: fit,
        b,
    })
}

/// Output of the exact two-level confounding test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactConfounding {
    pub test: TestResult,
    /// Mean restricted-null metric for each confounder shuffle.
    pub null_means: Vec<f64>,
    /// Restricted permutations per mean (the test size).
    pub b_r: usize,
    /// Train/evaluate cycles spent on the null.
    pub cycles: usize,
}

/// Permutation version of the confounding test that needs no normal
/// approximation. The observed statistic is the mean of `b_r` restricted
/// draws (`b_r` = test size). Its null comes from `b_s` standard shuffles
/// of the confounder (train and test separately), each followed by `b_r`
/// restricted draws against the shuffled confounder.
pub fn confounding_test_exact(
    ds: &Dataset,
    split: &SplitIndexes,
    learner: &LearnerSpec,
    metric: &MetricSpec,
    b_s: usize,
    seed: u64,
) -> Result<ExactConfounding> {
    if b_s < 20 {
        return Err(Error::InvalidParameter(format!("b_s must be at least 20, got {b_s}")));
    }
    let problem = NullProblem::new(ds, split, learner, metric)?;
    let b_r = problem.test_size();
    let (c_train, c_test) = problem.confounders();
    let observed = mean(&problem.samples(Scheme::Restricted, c_train, c_test, b_r, derive_seed(seed, 0))?);
    let shuffle_seed = derive_seed(seed, 1);
    let inner_seed = derive_seed(seed, 2);
    let results: Vec<Result<Vec<f64>>> = (0..b_s)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngStream::new(shuffle_seed, k as u64).rng();
            let pt = standard_permutation(c_train.len(), &mut rng);
            let pv = standard_permutation(c_test.len(), &mut rng);
            let ct: Vec<u32> = pt.iter().map(|&j| c_train[j]).collect();
            let cv: Vec<u32> = pv.iter().map(|&j| c_test[j]).collect();
            problem
                .samples(Scheme::Restricted, &ct, &cv, b_r, derive_seed(inner_seed, k as u64))
                .map_err(|e| match e {
                    Error::Iteration { index, source } => Error::NestedIteration { outer: k, inner: index, source },
                    other => other,
                })
        })
        .collect();
    let mut null_means = Vec::with_capacity(b_s);
    let mut cycles = 0;
    for r in results {
        let s = r?;
        cycles += s.len();
        null_means.push(mean(&s));
    }
    let k = null_means.iter().filter(|&&m| metric.at_least_as_good(m, observed)).count();
    Ok(ExactConfounding {
        test: TestResult {
            test_id: TestId::ConfoundingExact,
            statistic: observed,
            p_value: (1 + k) as f64 / (b_s + 1) as f64,
            null_summary: summary(&null_means),
            b: b_s,
        },
        null_means,
        b_r,
        cycles,
    })
}

/// Result of the population-of-interest workflow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub observed: f64,
    /// Correction against the baseline null.
    pub correction: CorrectionResult,
    /// Confounding relative to the population of interest.
    pub test: TestResult,
    /// Correction against the standard null, for comparison.
    pub standard_correction: CorrectionResult,
    pub response_test: TestResult,
    pub baseline_size: usize,
    pub test_size: usize,
    pub baseline_null: NullDistribution,
    pub development_null: NullDistribution,
    pub standard_null: NullDistribution,
}

/// Compares development data against a population of interest described
/// by `target`.
///
/// A subsample of `dev` matched to `target` is split 50/50 (stratified by
/// the joint table) to give the baseline sets; `dev` itself is split with
/// the same test-set size. Both restricted nulls use the same seed and `b`
/// equal to the test size. `b`, if given, must equal that size.
pub fn baseline_workflow(
    dev: &Dataset,
    target: &JointTable,
    learner: &LearnerSpec,
    metric: &MetricSpec,
    b: Option<usize>,
    seed: u64,
) -> Result<BaselineReport> {
    let base = subsample_to_joint(dev, target, derive_seed(seed, 10))?;
    let split_seed = derive_seed(seed, 11);
    let base_split = split(&base, 0.5, Stratify::ByJoint, split_seed)?;
    let t = base_split.test.len();
    let dev_split = split_with_test_size(dev, t, Stratify::ByJoint, split_seed)?;
    let b = match b {
        None => t,
        Some(b) if b == t => b,
        Some(b) => {
            return Err(Error::Contract(format!(
                "b = {b} differs from the baseline test size {t}"
            )))
        }
    };
    let null_seed = derive_seed(seed, 12);
    let dev_problem = NullProblem::new(dev, &dev_split, learner, metric)?;
    let development_null = dev_problem.null(Scheme::Restricted, b, null_seed)?;
    let standard_null = dev_problem.null(Scheme::Standard, b, derive_seed(seed, 13))?;
    let baseline_null = NullProblem::new(&base, &base_split, learner, metric)?
        .null(Scheme::Restricted, b, null_seed)?
        .into_baseline();
    let observed = dev_problem.observed()?;

    let fit_r = fit_gaussian(&development_null)?;
    let fit_base = fit_gaussian(&baseline_null)?;
    let mut correction = correct_gaussian(observed, &fit_r, &fit_base)?;
    correction.method = CorrectionMethod::Baseline;
    let standard_correction = correct_gaussian(observed, &fit_r, &fit_gaussian(&standard_null)?)?;
    require_spread(&fit_base, "baseline")?;
    let z = metric.sign() * (fit_r.a - fit_base.a) / (fit_base.s / (b as f64).sqrt());
    let test = TestResult {
        test_id: TestId::ConfoundingVsBaseline,
        statistic: fit_r.a,
        p_value: clamp_p(norm_sf(z)),
        null_summary: fit_base,
        b,
    };
    let response_test = response_learning_test(&development_null, observed)?;
    Ok(BaselineReport {
        observed,
        correction,
        test,
        standard_correction,
        response_test,
        baseline_size: base.n(),
        test_size: t,
        baseline_null,
        development_null,
        standard_null,
    })
}

/// Summary of a null for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub scheme: Scheme,
    pub b: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl NullSummary {
    pub fn of(null: &NullDistribution) -> Self {
        let f = summary(&null.samples);
        Self {
            scheme: null.scheme,
            b: null.b,
            mean: f.a,
            sd: f.s,
            min: null.samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: null.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Everything computed for one dataset and split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metric: MetricId,
    pub observed: f64,
    pub test_size: usize,
    /// Gaussian correction; plus analytic (AUC) and empirical variants.
    pub corrected: Vec<CorrectionResult>,
    pub response_test: TestResult,
    pub confounding_test: TestResult,
    pub null_summaries: Vec<NullSummary>,
}

/// Nulls, tests and corrections for one split.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub restricted: NullDistribution,
    pub standard: NullDistribution,
}

/// Runs the restricted and standard nulls with `b` permutations, the
/// response-learning test, the confounding test (with its own restricted
/// null of test-size permutations when `b` differs) and all applicable
/// corrections.
pub fn analyze(
    ds: &Dataset,
    split: &SplitIndexes,
    learner: &LearnerSpec,
    metric: &MetricSpec,
    b: usize,
    seed: u64,
) -> Result<Analysis> {
    let problem = NullProblem::new(ds, split, learner, metric)?;
    let t = problem.test_size();
    let restricted = problem.null(Scheme::Restricted, b, derive_seed(seed, 20))?;
    let standard = problem.null(Scheme::Standard, b, derive_seed(seed, 21))?;
    let observed = problem.observed()?;
    let fit_r = fit_gaussian(&restricted)?;
    let fit_s = fit_gaussian(&standard)?;
    let mut corrected = vec![correct_gaussian(observed, &fit_r, &fit_s)?];
    let test_y: Vec<f64> = split.test.iter().map(|&i| ds.response()[i]).collect();
    let n_p = test_y.iter().filter(|&&v| v == 1.0).count();
    let n_n = t - n_p;
    if metric.id == MetricId::Auc {
        corrected.push(correct_auc_analytic(observed, &fit_r, n_n, n_p)?);
    }
    if b >= 20 {
        corrected.push(correct_empirical(observed, &restricted, &standard)?);
    }
    let conf_null = if b == t {
        restricted.clone()
    } else {
        problem.null(Scheme::Restricted, t, derive_seed(seed, 22))?
    };
    let reference = match metric.id {
        MetricId::Auc => Reference::AnalyticAuc { n_n, n_p },
        _ => Reference::Fit(fit_s),
    };
    let confounding_test = confounding_test(&conf_null, reference, t)?;
    let response_test = response_learning_test(&restricted, observed)?;
    Ok(Analysis {
        report: AnalysisReport {
            metric: metric.id,
            observed,
            test_size: t,
            corrected,
            response_test,
            confounding_test,
            null_summaries: vec![NullSummary::of(&restricted), NullSummary::of(&standard)],
        },
        restricted,
        standard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::norm_cdf;
    use proptest::prelude::*;

    fn null_of(samples: Vec<f64>, scheme: Scheme) -> NullDistribution {
        NullDistribution {
            b: samples.len(),
            samples,
            scheme,
            metric: MetricSpec::new(MetricId::Auc),
            master_seed: 0,
        }
    }

    #[test]
    fn gaussian_correction_examples() {
        let r = GaussianFit { a: 0.6, s: 0.05 };
        let s = GaussianFit { a: 0.5, s: 0.04 };
        assert!((correct_gaussian(0.7, &r, &s).unwrap().m_c - 0.58).abs() < 1e-12);
        assert_eq!(correct_gaussian(0.6, &r, &s).unwrap().m_c, 0.5);
        assert!(matches!(
            correct_gaussian(0.7, &GaussianFit { a: 0.6, s: 0.0 }, &s),
            Err(Error::DegenerateNull(_))
        ));
    }

    #[test]
    fn analytic_auc_examples() {
        let (_, sigma) = auc_null_gaussian(50, 50);
        let fit = GaussianFit { a: 0.9, s: sigma };
        assert!((correct_auc_analytic(0.98, &fit, 50, 50).unwrap().m_c - 0.58).abs() < 1e-12);
        assert_eq!(correct_auc_analytic(0.9, &fit, 50, 50).unwrap().m_c, 0.5);
    }

    #[test]
    fn empirical_correction_clamps_to_reference_range() {
        let r = null_of((0..50).map(|i| 0.6 + i as f64 * 0.002).collect(), Scheme::Restricted);
        let s = null_of((0..50).map(|i| 0.45 + i as f64 * 0.002).collect(), Scheme::Standard);
        let max_s = s.samples.iter().cloned().fold(f64::MIN, f64::max);
        let min_s = s.samples.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(correct_empirical(0.99, &r, &s).unwrap().m_c, max_s);
        assert_eq!(correct_empirical(0.1, &r, &s).unwrap().m_c, min_s);
        let mid = correct_empirical(0.65, &r, &s).unwrap().m_c;
        assert!(mid > min_s && mid < max_s);
    }

    #[test]
    fn confounding_test_examples() {
        let samples: Vec<f64> = (0..100).map(|i| 0.51 + if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let n = null_of(samples, Scheme::Restricted);
        let t = confounding_test(&n, Reference::AnalyticAuc { n_n: 50, n_p: 50 }, 100).unwrap();
        assert!((t.statistic - 0.51).abs() < 1e-12);
        // z = 0.01 / (0.058023 / 10) = 1.7235
        assert!((t.p_value - 0.042).abs() < 0.001, "{}", t.p_value);
        let centered = null_of(vec![0.5; 100], Scheme::Restricted);
        let t = confounding_test(&centered, Reference::AnalyticAuc { n_n: 50, n_p: 50 }, 100).unwrap();
        assert_eq!(t.p_value, 0.5);
        assert!(matches!(
            confounding_test(&centered, Reference::AnalyticAuc { n_n: 50, n_p: 50 }, 99),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            confounding_test(&null_of(vec![0.5; 90], Scheme::Restricted), Reference::AnalyticAuc { n_n: 50, n_p: 40 }, 100),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn response_test_needs_restricted_null() {
        let n = null_of(vec![0.5, 0.6], Scheme::Standard);
        assert!(matches!(response_learning_test(&n, 0.7), Err(Error::Contract(_))));
        let r = null_of(vec![0.5, 0.6], Scheme::Restricted);
        assert_eq!(response_learning_test(&r, 0.1).unwrap().p_value, 1.0);
    }

    proptest! {
        #[test]
        fn gaussian_correction_round_trips(
            m in -2.0f64..2.0, ar in -1.0f64..1.0, sr in 0.01f64..1.0, asd in -1.0f64..1.0, ss in 0.01f64..1.0,
        ) {
            let r = GaussianFit { a: ar, s: sr };
            let s = GaussianFit { a: asd, s: ss };
            let c = correct_gaussian(m, &r, &s).unwrap();
            let back = correct_gaussian(c.m_c, &s, &r).unwrap();
            prop_assert!((back.m_c - m).abs() < 1e-12);
            // tail probabilities are preserved
            let pr = norm_cdf((m - ar) / sr);
            let ps = norm_cdf((c.m_c - asd) / ss);
            prop_assert!((pr - ps).abs() < 1e-12);
        }

        #[test]
        fn empirical_correction_monotone(
            r in proptest::collection::vec(0.0f64..1.0, 20..60),
            s in proptest::collection::vec(0.0f64..1.0, 20..60),
            m in 0.0f64..1.0, d in 0.0f64..0.3,
        ) {
            let nr = null_of(r, Scheme::Restricted);
            let ns = null_of(s, Scheme::Standard);
            prop_assert!(correct_empirical(m, &nr, &ns).unwrap().m_c <= correct_empirical(m + d, &nr, &ns).unwrap().m_c);
        }

        #[test]
        fn confounding_statistic_order_free(samples in proptest::collection::vec(0.3f64..0.8, 10..40), rot in 0usize..40) {
            let b = samples.len();
            let rotated: Vec<f64> = (0..b).map(|i| samples[(i + rot) % b]).collect();
            let f = Reference::Fit(GaussianFit { a: 0.5, s: 0.1 });
            let a = confounding_test(&null_of(samples, Scheme::Restricted), f, b).unwrap();
            let c = confounding_test(&null_of(rotated, Scheme::Restricted), f, b).unwrap();
            prop_assert!((a.statistic - c.statistic).abs() < 1e-12);
            prop_assert!(a.p_value > 0.0 && a.p_value <= 1.0);
        }
    }
}
