//! Simulation studies: the four confounding/signal experiments, the
//! correlation-correction study, null asymptotics by test size and the
//! population-of-interest scenario. Every run is a pure function of its
//! configuration and seed; tables come out in a fixed row order.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{split, split_with_test_size, Dataset, JointTable, Stratify};
use crate::error::{Error, Result};
use crate::inference::{
    baseline_workflow, confounding_test, correct_auc_analytic, correct_empirical, correct_gaussian,
    response_learning_test, BaselineReport, Reference,
};
use crate::learners::LearnerSpec;
use crate::metrics::{partial_correlation, pearson, MetricId, MetricSpec};
use crate::nulls::{association_null, fit_gaussian, observed_metric, restricted_null, standard_null, Scheme};
use crate::partials::{pcor_perm, ExpectationMode};
use crate::shuffle::{derive_seed, RngStream};
use crate::stats::{ks_distance, max_atom, norm_cdf};
use crate::synthdata::{
    experiment_design, gen_classification, gen_correlation_model, gen_regression, BernoulliJoint, ClassGenParams,
    CorrGenParams, ErrorDist, RegGenParams,
};

/// Number of datasets used per experiment at full scale.
pub const FULL_SCALE_DATASETS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// 1: signal and confounding, 2: signal only, 3: confounding only, 4: neither.
    pub experiment_id: u8,
    pub n_datasets: usize,
    pub learner: LearnerSpec,
    pub metric: MetricId,
    pub seed: u64,
    /// Multiplies `n_datasets`; the result is rounded and floored at 10.
    pub scale_factor: f64,
    /// Maximin improvement sweeps for the parameter design.
    pub design_sweeps: usize,
}

impl ExperimentConfig {
    /// 200 datasets, logistic learner, AUC.
    pub fn desk(experiment_id: u8, seed: u64) -> Self {
        Self {
            experiment_id,
            n_datasets: FULL_SCALE_DATASETS,
            learner: LearnerSpec::logistic(),
            metric: MetricId::Auc,
            seed,
            scale_factor: 0.2,
            design_sweeps: 50,
        }
    }

    pub fn full(experiment_id: u8, seed: u64) -> Self {
        Self { scale_factor: 1.0, ..Self::desk(experiment_id, seed) }
    }

    pub fn effective_datasets(&self) -> usize {
        ((self.n_datasets as f64 * self.scale_factor).round() as usize).max(10)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.experiment_id) {
            return Err(Error::InvalidParameter(format!(
                "experiment_id must be 1..=4, got {}",
                self.experiment_id
            )));
        }
        if self.n_datasets < 10 {
            return Err(Error::InvalidParameter(format!(
                "n_datasets must be at least 10, got {}",
                self.n_datasets
            )));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "scale_factor must lie in (0, 1], got {}",
                self.scale_factor
            )));
        }
        if !self.metric.is_classification() {
            return Err(Error::InvalidParameter(format!(
                "experiments simulate classification data; {} is a regression metric",
                self.metric
            )));
        }
        self.learner.validate()
    }
}

/// One simulated dataset of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub dataset: usize,
    pub n: usize,
    pub p11: f64,
    pub p10: f64,
    pub p01: f64,
    pub p00: f64,
    pub beta: f64,
    pub theta: f64,
    pub rho: f64,
    pub test_size: usize,
    /// Permutations used; always the test size.
    pub b: usize,
    pub observed: f64,
    pub corrected: f64,
    pub restricted_mean: f64,
    pub response_p: f64,
    pub confounding_p: f64,
}

fn run_one_dataset(cfg: &ExperimentConfig, params: &crate::synthdata::ExperimentParams, index: usize) -> Result<ExperimentRow> {
    let seed = derive_seed(derive_seed(cfg.seed, 101), index as u64);
    let mut rng = RngStream::new(seed, 0).rng();
    let ds = gen_classification(&params.class_params(), &mut rng)?;
    let sp = split(&ds, 0.5, Stratify::ByJoint, derive_seed(seed, 1))?;
    let t = sp.test.len();
    let metric = MetricSpec::new(cfg.metric);
    let observed = observed_metric(&ds, &sp, &cfg.learner, &metric)?;
    let null_r = restricted_null(&ds, &sp, &cfg.learner, &metric, t, derive_seed(seed, 2))?;
    let fit_r = fit_gaussian(&null_r)?;
    let (corrected, confounding) = if cfg.metric == MetricId::Auc {
        let n_p = sp.test.iter().filter(|&&i| ds.response()[i] == 1.0).count();
        let n_n = t - n_p;
        (
            correct_auc_analytic(observed, &fit_r, n_n, n_p)?,
            confounding_test(&null_r, Reference::AnalyticAuc { n_n, n_p }, t)?,
        )
    } else {
        let null_s = standard_null(&ds, &sp, &cfg.learner, &metric, t, derive_seed(seed, 3))?;
        let fit_s = fit_gaussian(&null_s)?;
        (
            correct_gaussian(observed, &fit_r, &fit_s)?,
            confounding_test(&null_r, Reference::Fit(fit_s), t)?,
        )
    };
    let response = response_learning_test(&null_r, observed)?;
    let j = params.joint;
    Ok(ExperimentRow {
        dataset: index,
        n: params.n,
        p11: j.p11,
        p10: j.p10,
        p01: j.p01,
        p00: j.p00,
        beta: params.beta,
        theta: params.theta,
        rho: params.rho,
        test_size: t,
        b: t,
        observed,
        corrected: corrected.m_c,
        restricted_mean: fit_r.a,
        response_p: response.p_value,
        confounding_p: confounding.p_value,
    })
}

/// Generates the parameter design, then for every dataset: simulates,
/// splits 50/50 stratified by the joint cells, draws a restricted null with
/// as many permutations as test rows, corrects the metric and runs both
/// tests. Rows come back in dataset order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let mut design_rng = RngStream::new(derive_seed(cfg.seed, 100), 0).rng();
    let design = experiment_design(cfg.experiment_id, cfg.effective_datasets(), cfg.design_sweeps, &mut design_rng)?;
    let rows: Vec<Result<ExperimentRow>> = design
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_one_dataset(cfg, p, i))
        .collect();
    rows.into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Dataset { index, source: Box::new(e) }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub alpha: f64,
    pub response_rate: f64,
    pub confounding_rate: f64,
}

/// Evenly spaced levels `0, 1/k, ..., 1`.
pub fn alpha_grid(k: usize) -> Vec<f64> {
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

/// Share of rows with p-value at most `alpha`, for each test.
pub fn power_curve(rows: &[ExperimentRow], alphas: &[f64]) -> Result<Vec<PowerPoint>> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("power curve needs at least one row".into()));
    }
    let n = rows.len() as f64;
    let rate = |alpha: f64, p: fn(&ExperimentRow) -> f64| rows.iter().filter(|r| p(r) <= alpha).count() as f64 / n;
    Ok(alphas
        .iter()
        .map(|&alpha| PowerPoint {
            alpha,
            response_rate: rate(alpha, |r| r.response_p),
            confounding_rate: rate(alpha, |r| r.confounding_p),
        })
        .collect())
}

/// One dataset of the correlation study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub dataset: usize,
    pub p: f64,
    pub beta_xc: f64,
    pub beta_yc: f64,
    pub beta_xy: f64,
    pub sample_correlation: f64,
    /// Residual-based partial correlation given the confounder.
    pub partial_correlation: f64,
    pub gaussian_corrected: f64,
    pub empirical_corrected: f64,
    pub permutation_pcor: f64,
}

/// For random linear-Gaussian models, compares the permutation-corrected
/// correlation (Gaussian and empirical) and the restricted-expectation
/// partial correlation with the sample partial correlation. Nulls are
/// learner-free: the Pearson correlation of `x` with shuffled `y`.
pub fn run_correlation_study(n_datasets: usize, b: usize, seed: u64) -> Result<Vec<CorrelationRow>> {
    if n_datasets < 1 {
        return Err(Error::InvalidParameter("need at least one dataset".into()));
    }
    let metric = MetricSpec::new(MetricId::Pearson);
    let rows: Vec<Result<CorrelationRow>> = (0..n_datasets)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(derive_seed(seed, 200), i as u64);
            let mut rng = RngStream::new(s, 0).rng();
            let params = CorrGenParams::sample_study(&mut rng);
            let (x, y, c) = gen_correlation_model(&params, &mut rng)?;
            let cf: Vec<f64> = c.iter().map(|&v| v as f64).collect();
            let r = pearson(&x, &y)?;
            let null_r = association_null(&x, &y, &c, &metric, Scheme::Restricted, b, derive_seed(s, 1))?;
            let null_s = association_null(&x, &y, &c, &metric, Scheme::Standard, b, derive_seed(s, 2))?;
            let gaussian = correct_gaussian(r, &fit_gaussian(&null_r)?, &fit_gaussian(&null_s)?)?;
            let empirical = correct_empirical(r, &null_r, &null_s)?;
            Ok(CorrelationRow {
                dataset: i,
                p: params.p,
                beta_xc: params.beta_xc,
                beta_yc: params.beta_yc,
                beta_xy: params.beta_xy,
                sample_correlation: r,
                partial_correlation: partial_correlation(&x, &y, &cf)?,
                gaussian_corrected: gaussian.m_c,
                empirical_corrected: empirical.m_c,
                permutation_pcor: pcor_perm(&x, &y, &c, ExpectationMode::ClosedForm)?.value,
            })
        })
        .collect();
    rows.into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Dataset { index, source: Box::new(e) }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub rms_gaussian_vs_partial: f64,
    pub rms_permutation_vs_partial: f64,
    pub max_abs_empirical: f64,
    pub max_abs_partial: f64,
}

pub fn summarize_correlation_study(rows: &[CorrelationRow]) -> CorrelationSummary {
    let rms = |f: fn(&CorrelationRow) -> f64| {
        (rows.iter().map(|r| (f(r) - r.partial_correlation).powi(2)).sum::<f64>() / rows.len() as f64).sqrt()
    };
    let max_abs = |f: fn(&CorrelationRow) -> f64| rows.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
    CorrelationSummary {
        rms_gaussian_vs_partial: rms(|r| r.gaussian_corrected),
        rms_permutation_vs_partial: rms(|r| r.permutation_pcor),
        max_abs_empirical: max_abs(|r| r.empirical_corrected),
        max_abs_partial: max_abs(|r| r.partial_correlation),
    }
}

/// Normal approximation quality of one restricted null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsRow {
    pub metric: MetricId,
    pub test_size: usize,
    pub b: usize,
    pub mean: f64,
    pub sd: f64,
    /// Kolmogorov distance between the null and its fitted normal.
    pub ks: f64,
    /// Largest probability mass on a single value.
    pub max_atom: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

fn asymptotics_dataset(metric: MetricId, test_size: usize, seed: u64) -> Result<(Dataset, LearnerSpec)> {
    let n = 2 * test_size;
    let mut rng = RngStream::new(seed, 0).rng();
    if metric.is_classification() {
        let joint = BernoulliJoint::new(0.4, 0.1, 0.1, 0.4)?;
        let ds = gen_classification(&ClassGenParams::new(n, joint, 1.0, 1.0, 0.5), &mut rng)?;
        Ok((ds, LearnerSpec::logistic()))
    } else {
        // one feature: x = 3y + 3c + N(0, 1), y = 3c + (Exp(1) - 1)
        let params = RegGenParams { p: 1, gamma: 3.0, ..RegGenParams::new(n, 3.0, 3.0, ErrorDist::Exponential) };
        Ok((gen_regression(&params, &mut rng)?, LearnerSpec::ols()))
    }
}

/// For every (metric, test size): simulate data with equal training and
/// test sizes (classification metrics on the binary model, regression
/// metrics on a one-feature linear model with exponential response errors),
/// draw a restricted null of `b` permutations and measure its distance from
/// the fitted normal.
pub fn run_asymptotics_study(test_sizes: &[usize], metrics: &[MetricId], b: usize, seed: u64) -> Result<Vec<AsymptoticsRow>> {
    if b < 2 {
        return Err(Error::InvalidParameter("b must be at least 2".into()));
    }
    let cases: Vec<(MetricId, usize)> = metrics
        .iter()
        .flat_map(|&m| test_sizes.iter().map(move |&t| (m, t)))
        .collect();
    let rows: Vec<Result<AsymptoticsRow>> = cases
        .par_iter()
        .map(|&(metric, t)| {
            let s = derive_seed(derive_seed(seed, 300), (metric as u64) << 32 | t as u64);
            let (ds, learner) = asymptotics_dataset(metric, t, s)?;
            let sp = split_with_test_size(&ds, t, Stratify::ByJoint, derive_seed(s, 1))?;
            let null = restricted_null(&ds, &sp, &learner, &MetricSpec::new(metric), b, derive_seed(s, 2))?;
            let fit = fit_gaussian(&null)?;
            let ks = if fit.s > 0.0 {
                ks_distance(&null.samples, |v| norm_cdf((v - fit.a) / fit.s))
            } else {
                1.0
            };
            Ok(AsymptoticsRow {
                metric,
                test_size: t,
                b,
                mean: fit.a,
                sd: fit.s,
                ks,
                max_atom: max_atom(&null.samples),
                samples: null.samples,
            })
        })
        .collect();
    rows.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineScenarioConfig {
    pub n: usize,
    /// Development-sample joint of disease (response) and gender (confounder, 1 = male).
    pub development_joint: BernoulliJoint,
    pub beta: f64,
    pub theta: f64,
    pub rho: f64,
    /// Population of interest; `None` uses the two-to-one prevalence table.
    pub target: Option<JointTable>,
    pub learner: LearnerSpec,
}

impl Default for BaselineScenarioConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            development_joint: BernoulliJoint { p11: 0.4, p10: 0.1, p01: 0.1, p00: 0.4 },
            beta: 0.5,
            theta: 1.0,
            rho: 0.5,
            target: None,
            learner: LearnerSpec::logistic(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineScenario {
    pub development_joint: JointTable,
    pub target: JointTable,
    pub report: BaselineReport,
}

/// The disease population whose prevalence is twice as high in men.
pub fn two_to_one_target() -> JointTable {
    JointTable::two_to_one_prevalence("1", "0", "1", "0")
}

/// Simulates a development sample more strongly associated with the
/// confounder than the population of interest, then runs the baseline
/// workflow on it with the AUC.
pub fn run_baseline_scenario(cfg: &BaselineScenarioConfig, seed: u64) -> Result<BaselineScenario> {
    let mut rng = RngStream::new(derive_seed(seed, 400), 0).rng();
    let params = ClassGenParams::new(cfg.n, cfg.development_joint, cfg.beta, cfg.theta, cfg.rho);
    let dev = gen_classification(&params, &mut rng)?;
    let target = cfg.target.clone().unwrap_or_else(two_to_one_target);
    let report = baseline_workflow(&dev, &target, &cfg.learner, &MetricSpec::new(MetricId::Auc), None, derive_seed(seed, 401))?;
    Ok(BaselineScenario {
        development_joint: dev.joint_table()?,
        target,
        report,
    })
}

/// As [`run_baseline_scenario`] with the population of interest equal to
/// the development sample's own empirical joint.
pub fn run_baseline_null_case(cfg: &BaselineScenarioConfig, seed: u64) -> Result<BaselineScenario> {
    let mut rng = RngStream::new(derive_seed(seed, 400), 0).rng();
    let params = ClassGenParams::new(cfg.n, cfg.development_joint, cfg.beta, cfg.theta, cfg.rho);
    let dev = gen_classification(&params, &mut rng)?;
    let target = dev.joint_table()?;
    let report = baseline_workflow(&dev, &target, &cfg.learner, &MetricSpec::new(MetricId::Auc), None, derive_seed(seed, 401))?;
    Ok(BaselineScenario {
        development_joint: target.clone(),
        target,
        report,
    })
}

/// Writes serializable rows as a comma-separated table with a header.
pub fn write_table<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format `(label, test_size, value)` table of null samples.
pub fn write_null_samples(groups: &[(String, usize, &[f64])], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "group,test_size,value")?;
    for (label, t, samples) in groups {
        for v in *samples {
            writeln!(out, "{label},{t},{v}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reproducibility record written next to every set of outputs. Thread
/// count and timestamps are deliberately absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub version: String,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputDigest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    /// Hashes `files` (relative to `dir`) and writes `manifest.json` there.
    pub fn write(command: &str, seed: u64, config: serde_json::Value, dir: &Path, files: &[&str]) -> Result<PathBuf> {
        let outputs = files
            .iter()
            .map(|f| {
                Ok(OutputDigest {
                    file: f.to_string(),
                    sha256: sha256_file(&dir.join(f))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: command.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            outputs,
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}
