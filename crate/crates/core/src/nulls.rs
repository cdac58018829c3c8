//! Monte Carlo permutation nulls of a performance metric.
//!
//! Each iteration shuffles the training and test responses (within
//! confounder levels for the restricted scheme, freely for the standard
//! one), retrains the learner on the shuffled training response and scores
//! the test set against the shuffled test response. Iteration `i` draws all
//! of its randomness from `RngStream(seed, i)`, so the samples do not depend
//! on the number of worker threads.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitIndexes};
use crate::error::{Error, Result};
use crate::learners::{predict, train, Design, LearnerSpec};
use crate::metrics::{evaluate, MetricSpec};
use crate::shuffle::{derive_seed, restricted_permutation, standard_permutation, RngStream};
use crate::stats::{mean, var_sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Restricted,
    Standard,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub samples: Vec<f64>,
    pub scheme: Scheme,
    pub metric: MetricSpec,
    pub b: usize,
    pub master_seed: u64,
}

/// Mean and sample standard deviation (denominator `b - 1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub a: f64,
    pub s: f64,
}

impl NullDistribution {
    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }

    /// The same samples relabelled as a baseline null.
    pub fn into_baseline(mut self) -> Self {
        self.scheme = Scheme::Baseline;
        self
    }

    /// Writes the samples as a one-column delimited file.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([self.metric.id.name()])?;
        for s in &self.samples {
            w.write_record([format!("{s}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Add-one permutation p-value: `(1 + #{samples at least as good}) / (b + 1)`.
pub fn p_value(null: &NullDistribution, observed: f64) -> f64 {
    let k = null
        .samples
        .iter()
        .filter(|&&s| null.metric.at_least_as_good(s, observed))
        .count();
    (1 + k) as f64 / (null.samples.len() + 1) as f64
}

pub fn fit_gaussian(null: &NullDistribution) -> Result<GaussianFit> {
    fit_samples(&null.samples)
}

pub(crate) fn fit_samples(samples: &[f64]) -> Result<GaussianFit> {
    if samples.len() < 2 {
        return Err(Error::DegenerateNull(format!(
            "a Gaussian fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    Ok(GaussianFit {
        a: mean(samples),
        s: var_sample(samples).max(0.0).sqrt(),
    })
}

/// The train/test problem reused by every permutation.
pub(crate) struct NullProblem {
    design: Design,
    x_test: DMatrix<f64>,
    y_train: Vec<f64>,
    y_test: Vec<f64>,
    c_train: Vec<u32>,
    c_test: Vec<u32>,
    metric: MetricSpec,
}

/// Maximum redraws of a standard shuffle that leaves the metric undefined.
const MAX_REDRAWS: u64 = 100;

impl NullProblem {
    pub(crate) fn new(ds: &Dataset, split: &SplitIndexes, learner: &LearnerSpec, metric: &MetricSpec) -> Result<Self> {
        validate_split(ds, split)?;
        let train_ds = ds.subset(&split.train);
        let test_ds = ds.subset(&split.test);
        let pick = |idx: &[usize]| -> Vec<u32> { idx.iter().map(|&i| ds.confounder().codes()[i]).collect() };
        Ok(Self {
            design: Design::new(learner, train_ds.features())?,
            x_test: test_ds.features().clone(),
            y_train: train_ds.response().to_vec(),
            y_test: test_ds.response().to_vec(),
            c_train: pick(&split.train),
            c_test: pick(&split.test),
            metric: *metric,
        })
    }

    pub(crate) fn test_size(&self) -> usize {
        self.y_test.len()
    }

    pub(crate) fn confounders(&self) -> (&[u32], &[u32]) {
        (&self.c_train, &self.c_test)
    }

    pub(crate) fn observed(&self) -> Result<f64> {
        let m = self.design.fit(&self.y_train)?;
        evaluate(&self.metric, &self.y_test, &predict(&m, &self.x_test)?)
    }

    /// One permutation draw with responses shuffled against the given
    /// confounder codes (ignored by the standard scheme).
    pub(crate) fn draw(&self, scheme: Scheme, c_train: &[u32], c_test: &[u32], stream: RngStream) -> Result<f64> {
        let mut redraw = 0u64;
        loop {
            let s = if redraw == 0 {
                stream
            } else {
                RngStream::new(derive_seed(stream.master_seed, redraw), stream.stream_index)
            };
            let mut rng = s.rng();
            let (pt, pv) = match scheme {
                Scheme::Standard => (
                    standard_permutation(self.y_train.len(), &mut rng),
                    standard_permutation(self.y_test.len(), &mut rng),
                ),
                Scheme::Restricted | Scheme::Baseline => (
                    restricted_permutation(c_train, &mut rng),
                    restricted_permutation(c_test, &mut rng),
                ),
            };
            let yt: Vec<f64> = pt.iter().map(|&j| self.y_train[j]).collect();
            let yv: Vec<f64> = pv.iter().map(|&j| self.y_test[j]).collect();
            let model = self.design.fit(&yt)?;
            match evaluate(&self.metric, &yv, &predict(&model, &self.x_test)?) {
                Err(Error::UndefinedMetric(_)) if scheme == Scheme::Standard && redraw < MAX_REDRAWS => redraw += 1,
                other => return other,
            }
        }
    }

    pub(crate) fn samples(&self, scheme: Scheme, c_train: &[u32], c_test: &[u32], b: usize, seed: u64) -> Result<Vec<f64>> {
        let results: Vec<Result<f64>> = (0..b)
            .into_par_iter()
            .map(|i| self.draw(scheme, c_train, c_test, RngStream::new(seed, i as u64)))
            .collect();
        results
            .into_iter()
            .enumerate()
            .map(|(index, r)| r.map_err(|e| Error::Iteration { index, source: Box::new(e) }))
            .collect()
    }

    pub(crate) fn null(&self, scheme: Scheme, b: usize, seed: u64) -> Result<NullDistribution> {
        if b < 1 {
            return Err(Error::InvalidParameter("b must be at least 1".into()));
        }
        let samples = self.samples(scheme, &self.c_train, &self.c_test, b, seed)?;
        Ok(NullDistribution {
            samples,
            scheme,
            metric: self.metric,
            b,
            master_seed: seed,
        })
    }
}

fn validate_split(ds: &Dataset, split: &SplitIndexes) -> Result<()> {
    let n = ds.n();
    if split.train.len() < 2 || split.test.len() < 2 {
        return Err(Error::Split("train and test sets need at least 2 rows each".into()));
    }
    let mut seen = vec![false; n];
    for &i in split.train.iter().chain(&split.test) {
        if i >= n {
            return Err(Error::Split(format!("row index {i} out of range for n = {n}")));
        }
        if seen[i] {
            return Err(Error::Split(format!("row {i} appears twice in the split")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Metric of the learner trained on the unshuffled training response.
pub fn observed_metric(ds: &Dataset, split: &SplitIndexes, learner: &LearnerSpec, metric: &MetricSpec) -> Result<f64> {
    validate_split(ds, split)?;
    let tr = ds.subset(&split.train);
    let te = ds.subset(&split.test);
    let m = train(learner, tr.features(), tr.response())?;
    evaluate(metric, te.response(), &predict(&m, te.features())?)
}

/// Null distribution under within-confounder shuffles of both responses.
pub fn restricted_null(
    ds: &Dataset,
    split: &SplitIndexes,
    learner: &LearnerSpec,
    metric: &MetricSpec,
    b: usize,
    seed: u64,
) -> Result<NullDistribution> {
    NullProblem::new(ds, split, learner, metric)?.null(Scheme::Restricted, b, seed)
}

/// Null distribution under unrestricted shuffles of both responses.
pub fn standard_null(
    ds: &Dataset,
    split: &SplitIndexes,
    learner: &LearnerSpec,
    metric: &MetricSpec,
    b: usize,
    seed: u64,
) -> Result<NullDistribution> {
    NullProblem::new(ds, split, learner, metric)?.null(Scheme::Standard, b, seed)
}

/// Learner-free null of `metric(y*, x)`, where `y*` is `y` shuffled
/// restrictedly (within `c`) or freely. With the Pearson metric this is the
/// permutation null of the sample correlation.
pub fn association_null(
    x: &[f64],
    y: &[f64],
    c: &[u32],
    metric: &MetricSpec,
    scheme: Scheme,
    b: usize,
    seed: u64,
) -> Result<NullDistribution> {
    crate::error::check_len(x.len(), y.len())?;
    crate::error::check_len(x.len(), c.len())?;
    if b < 1 {
        return Err(Error::InvalidParameter("b must be at least 1".into()));
    }
    let results: Vec<Result<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64).rng();
            let perm = match scheme {
                Scheme::Standard => standard_permutation(y.len(), &mut rng),
                _ => restricted_permutation(c, &mut rng),
            };
            let ys: Vec<f64> = perm.iter().map(|&j| y[j]).collect();
            evaluate(metric, &ys, x)
        })
        .collect();
    let samples = results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|e| Error::Iteration { index, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(NullDistribution {
        samples,
        scheme,
        metric: *metric,
        b,
        master_seed: seed,
    })
}
