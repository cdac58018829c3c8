//! Synthetic data generators and the space-filling parameter design used by
//! the simulation studies.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Categorical, Dataset, JointCell, JointTable, Task};
use crate::error::{Error, Result};

/// Joint law of a binary response `Y` and binary confounder `C`, with
/// `pij = P(Y = i, C = j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliJoint {
    pub p11: f64,
    pub p10: f64,
    pub p01: f64,
    pub p00: f64,
}

impl BernoulliJoint {
    pub fn new(p11: f64, p10: f64, p01: f64, p00: f64) -> Result<Self> {
        let j = Self { p11, p10, p01, p00 };
        if j.cells().iter().any(|p| !(*p >= 0.0)) || (j.cells().iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "joint probabilities must be nonnegative and sum to 1, got {:?}",
                j.cells()
            )));
        }
        Ok(j)
    }

    /// Divides nonnegative weights by their sum; cell ratios are unchanged.
    pub fn renormalized(p11: f64, p10: f64, p01: f64, p00: f64) -> Result<Self> {
        let s = p11 + p10 + p01 + p00;
        if !(s > 0.0) {
            return Err(Error::InvalidParameter("joint weights sum to zero".into()));
        }
        Self::new(p11 / s, p10 / s, p01 / s, p00 / s)
    }

    /// Joint with the given correlation between `Y` and `C`, both with
    /// success probability 1/2.
    pub fn symmetric(cor: f64) -> Result<Self> {
        let d = (1.0 + cor) / 4.0;
        let o = (1.0 - cor) / 4.0;
        Self::new(d, o, o, d)
    }

    pub fn cells(&self) -> [f64; 4] {
        [self.p11, self.p10, self.p01, self.p00]
    }

    pub fn cov(&self) -> f64 {
        self.p11 * self.p00 - self.p01 * self.p10
    }

    pub fn cor(&self) -> f64 {
        let py = self.p11 + self.p10;
        let pc = self.p11 + self.p01;
        self.cov() / (py * (1.0 - py) * pc * (1.0 - pc)).sqrt()
    }

    /// Joint table with confounder levels and response labels "0"/"1".
    pub fn to_joint_table(&self) -> JointTable {
        let cell = |c: &str, r: &str, w: f64| JointCell {
            confounder: c.into(),
            response: r.into(),
            weight: w,
        };
        JointTable::from_weights(vec![
            cell("1", "1", self.p11),
            cell("0", "1", self.p10),
            cell("1", "0", self.p01),
            cell("0", "0", self.p00),
        ])
        .expect("valid joint")
    }
}

/// Draws `n` i.i.d. `(y, c)` pairs.
pub fn sample_bivariate_bernoulli<R: Rng + ?Sized>(joint: &BernoulliJoint, n: usize, rng: &mut R) -> (Vec<f64>, Vec<u32>) {
    let (mut y, mut c) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let t1 = joint.p11;
    let t2 = t1 + joint.p10;
    let t3 = t2 + joint.p01;
    for _ in 0..n {
        let u: f64 = rng.random();
        let (yi, ci) = if u < t1 {
            (1.0, 1)
        } else if u < t2 {
            (1.0, 0)
        } else if u < t3 {
            (0.0, 1)
        } else {
            (0.0, 0)
        };
        y.push(yi);
        c.push(ci);
    }
    (y, c)
}

/// Lower Cholesky factor of the AR(1) matrix with entries `rho^|i-j|`.
pub fn ar1_cholesky(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    sigma
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::Singular)
}

fn mvn_rows<R: Rng + ?Sized>(means: &[f64], chol: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let p = chol.nrows();
    let mut x = DMatrix::<f64>::zeros(means.len(), p);
    for (i, m) in means.iter().enumerate() {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let row = chol * z;
        for j in 0..p {
            x[(i, j)] = m + row[j];
        }
    }
    x
}

fn binary_confounder(c: Vec<u32>) -> Categorical {
    Categorical::from_codes(c, vec!["0".into(), "1".into()]).expect("binary codes")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGenParams {
    pub n: usize,
    pub joint: BernoulliJoint,
    /// Effect of the response on every feature.
    pub beta: f64,
    /// Effect of the confounder on every feature.
    pub theta: f64,
    pub rho: f64,
    /// Number of features.
    pub p: usize,
}

impl ClassGenParams {
    pub fn new(n: usize, joint: BernoulliJoint, beta: f64, theta: f64, rho: f64) -> Self {
        Self { n, joint, beta, theta, rho, p: 10 }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidParameter(format!("n must be at least 4, got {}", self.n)));
        }
        if self.p < 1 {
            return Err(Error::InvalidParameter("need at least one feature".into()));
        }
        Ok(())
    }
}

/// Binary classification data: `(y, c)` from the joint, then features
/// `N_p((y beta + c theta) 1, Sigma)` with AR(1) `Sigma`.
pub fn gen_classification<R: Rng + ?Sized>(params: &ClassGenParams, rng: &mut R) -> Result<Dataset> {
    params.validate()?;
    let chol = ar1_cholesky(params.p, params.rho)?;
    let (y, c) = sample_bivariate_bernoulli(&params.joint, params.n, rng);
    let means: Vec<f64> = y
        .iter()
        .zip(&c)
        .map(|(&yi, &ci)| yi * params.beta + ci as f64 * params.theta)
        .collect();
    let x = mvn_rows(&means, &chol, rng);
    Dataset::new(x, y, binary_confounder(c), Task::Classification)
}

/// Linear-Gaussian model for one feature, response and binary confounder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrGenParams {
    pub n: usize,
    /// Success probability of the confounder.
    pub p: f64,
    pub beta_xc: f64,
    pub beta_yc: f64,
    pub beta_xy: f64,
}

impl CorrGenParams {
    /// Random parameters: `p ~ U(0.3, 0.7)`, each beta `~ U(-3, 3)`, n = 1000.
    pub fn sample_study<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            n: 1000,
            p: rng.random_range(0.3..0.7),
            beta_xc: rng.random_range(-3.0..3.0),
            beta_yc: rng.random_range(-3.0..3.0),
            beta_xy: rng.random_range(-3.0..3.0),
        }
    }
}

/// `c ~ Bernoulli(p)`, `y ~ N(beta_yc c, 1)`, `x ~ N(beta_xc c + beta_xy y, 1)`.
pub fn gen_correlation_model<R: Rng + ?Sized>(params: &CorrGenParams, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>, Vec<u32>)> {
    if !(params.p > 0.0 && params.p < 1.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0, 1), got {}", params.p)));
    }
    let (mut x, mut y, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..params.n {
        let ci = u32::from(rng.random::<f64>() < params.p);
        let cf = ci as f64;
        let yi = params.beta_yc * cf + rng.sample::<f64, _>(StandardNormal);
        let xi = params.beta_xc * cf + params.beta_xy * yi + rng.sample::<f64, _>(StandardNormal);
        x.push(xi);
        y.push(yi);
        c.push(ci);
    }
    Ok((x, y, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    Gaussian,
    /// Rate-1 exponential shifted to mean zero.
    Exponential,
}

impl ErrorDist {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorDist::Gaussian => rng.sample(StandardNormal),
            ErrorDist::Exponential => rng.sample::<f64, _>(Exp1) - 1.0,
        }
    }
}

/// Regression counterpart of [`ClassGenParams`]: `c ~ Bernoulli(c_prob)`,
/// `y = gamma c + e`, features `N_p((y beta + c theta) 1, Sigma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegGenParams {
    pub n: usize,
    pub c_prob: f64,
    /// Effect of the confounder on the response.
    pub gamma: f64,
    pub beta: f64,
    pub theta: f64,
    pub rho: f64,
    pub p: usize,
    pub error: ErrorDist,
}

impl RegGenParams {
    pub fn new(n: usize, beta: f64, theta: f64, error: ErrorDist) -> Self {
        Self { n, c_prob: 0.5, gamma: 1.0, beta, theta, rho: 0.5, p: 10, error }
    }
}

pub fn gen_regression<R: Rng + ?Sized>(params: &RegGenParams, rng: &mut R) -> Result<Dataset> {
    if params.n < 4 || params.p < 1 {
        return Err(Error::InvalidParameter("need n >= 4 and at least one feature".into()));
    }
    if !(params.c_prob > 0.0 && params.c_prob < 1.0) {
        return Err(Error::InvalidParameter(format!("c_prob must lie in (0, 1), got {}", params.c_prob)));
    }
    let chol = ar1_cholesky(params.p, params.rho)?;
    let c: Vec<u32> = (0..params.n).map(|_| u32::from(rng.random::<f64>() < params.c_prob)).collect();
    let y: Vec<f64> = c.iter().map(|&ci| params.gamma * ci as f64 + params.error.draw(rng)).collect();
    let means: Vec<f64> = y
        .iter()
        .zip(&c)
        .map(|(&yi, &ci)| yi * params.beta + ci as f64 * params.theta)
        .collect();
    let x = mvn_rows(&means, &chol, rng);
    Dataset::new(x, y, binary_confounder(c), Task::Regression)
}

/// One axis of a design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Range {
    Continuous { lo: f64, hi: f64 },
    /// Inclusive integer range.
    Integer { lo: i64, hi: i64 },
}

impl Range {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Range::Continuous { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Range::Integer { lo, hi } => lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid range {self:?}")))
        }
    }

    /// Maps a unit-interval coordinate into the range.
    pub fn map(&self, u: f64) -> f64 {
        match *self {
            Range::Continuous { lo, hi } => lo + u * (hi - lo),
            Range::Integer { lo, hi } => {
                let width = (hi - lo + 1) as f64;
                (lo + (u * width).floor() as i64).min(hi) as f64
            }
        }
    }
}

fn min_sq_distance(d: &[f64], n: usize) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            m = m.min(d[i * n + j]);
        }
    }
    m
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Latin hypercube on the unit cube, improved by random within-column pair
/// swaps that are kept only when the minimum pairwise distance does not
/// drop. Each sweep proposes one swap per column.
pub fn lhs_unit<R: Rng + ?Sized>(d: usize, n_points: usize, n_sweeps: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n_points < 2 {
        return Err(Error::InvalidParameter("need at least 2 design points".into()));
    }
    let n = n_points;
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
        for (i, &k) in perm.iter().enumerate() {
            pts[i][j] = (k as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    if d == 0 || n_sweeps == 0 {
        return Ok(pts);
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for k in (i + 1)..n {
            let v = sq_dist(&pts[i], &pts[k]);
            dist[i * n + k] = v;
            dist[k * n + i] = v;
        }
    }
    let mut current = min_sq_distance(&dist, n);
    let mut row_a = vec![0.0; n];
    let mut row_b = vec![0.0; n];
    for _ in 0..n_sweeps {
        for j in 0..d {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let swap = |pts: &mut Vec<Vec<f64>>| {
                let t = pts[a][j];
                pts[a][j] = pts[b][j];
                pts[b][j] = t;
            };
            swap(&mut pts);
            for k in 0..n {
                row_a[k] = sq_dist(&pts[a], &pts[k]);
                row_b[k] = sq_dist(&pts[b], &pts[k]);
            }
            let mut candidate = f64::INFINITY;
            for i in 0..n {
                if i == a || i == b {
                    continue;
                }
                candidate = candidate.min(row_a[i]).min(row_b[i]);
                for k in (i + 1)..n {
                    if k != a && k != b {
                        candidate = candidate.min(dist[i * n + k]);
                    }
                }
            }
            candidate = candidate.min(row_a[b]);
            if candidate >= current {
                current = candidate;
                for k in 0..n {
                    dist[a * n + k] = row_a[k];
                    dist[k * n + a] = row_a[k];
                    dist[b * n + k] = row_b[k];
                    dist[k * n + b] = row_b[k];
                }
                dist[a * n + a] = 0.0;
                dist[b * n + b] = 0.0;
            } else {
                swap(&mut pts);
            }
        }
    }
    Ok(pts)
}

/// Maximin Latin hypercube over `ranges`; rows are design points.
pub fn lhs_maximin<R: Rng + ?Sized>(ranges: &[Range], n_points: usize, n_sweeps: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    for r in ranges {
        r.validate()?;
    }
    let unit = lhs_unit(ranges.len(), n_points, n_sweeps, rng)?;
    Ok(unit
        .into_iter()
        .map(|row| row.iter().zip(ranges).map(|(&u, r)| r.map(u)).collect())
        .collect())
}

/// Minimum Euclidean distance between rows.
pub fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..points.len() {
        for k in (i + 1)..points.len() {
            m = m.min(sq_dist(&points[i], &points[k]));
        }
    }
    m.sqrt()
}

/// Parameters of one simulated classification dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub n: usize,
    pub joint: BernoulliJoint,
    pub beta: f64,
    pub theta: f64,
    pub rho: f64,
}

impl ExperimentParams {
    pub fn class_params(&self) -> ClassGenParams {
        ClassGenParams::new(self.n, self.joint, self.beta, self.theta, self.rho)
    }
}

/// Which effects are present in a simulation experiment:
/// 1 has both, 2 has response signal only, 3 confounding only, 4 neither.
fn experiment_flags(experiment: u8) -> Result<(bool, bool)> {
    match experiment {
        1 => Ok((true, true)),
        2 => Ok((true, false)),
        3 => Ok((false, true)),
        4 => Ok((false, false)),
        _ => Err(Error::InvalidParameter(format!("experiment must be 1..=4, got {experiment}"))),
    }
}

/// Varying design axes for an experiment, in column order.
pub fn experiment_ranges(experiment: u8) -> Result<Vec<(&'static str, Range)>> {
    let (signal, confounded) = experiment_flags(experiment)?;
    let effect = Range::Continuous { lo: 0.1, hi: 1.0 };
    let mut cols = vec![
        ("n", Range::Integer { lo: 200, hi: 600 }),
        ("p11", Range::Continuous { lo: 0.40, hi: 0.45 }),
        ("p00", Range::Continuous { lo: 0.40, hi: 0.45 }),
    ];
    if confounded {
        cols.push(("p10", Range::Continuous { lo: 0.050, hi: 0.075 }));
    }
    if signal {
        cols.push(("beta", effect));
    }
    if confounded {
        cols.push(("theta", effect));
    }
    cols.push(("rho", Range::Continuous { lo: 0.2, hi: 0.8 }));
    Ok(cols)
}

/// Maximin Latin hypercube parameter sets for one of the four experiments.
/// In the unconfounded experiments `p10 = p11`, `p01 = p00` and the four
/// cells are renormalized, giving zero response/confounder covariance.
pub fn experiment_design<R: Rng + ?Sized>(
    experiment: u8,
    n_points: usize,
    n_sweeps: usize,
    rng: &mut R,
) -> Result<Vec<ExperimentParams>> {
    let (signal, confounded) = experiment_flags(experiment)?;
    let cols = experiment_ranges(experiment)?;
    let ranges: Vec<Range> = cols.iter().map(|c| c.1).collect();
    let rows = lhs_maximin(&ranges, n_points, n_sweeps, rng)?;
    rows.into_iter()
        .map(|row| {
            let get = |name: &str| cols.iter().position(|c| c.0 == name).map(|k| row[k]);
            let (p11, p00) = (get("p11").unwrap(), get("p00").unwrap());
            let joint = if confounded {
                let p10 = get("p10").unwrap();
                let p01 = 1.0 - p11 - p00 - p10;
                BernoulliJoint::renormalized(p11, p10, p01, p00)?
            } else {
                BernoulliJoint::renormalized(p11, p11, p00, p00)?
            };
            Ok(ExperimentParams {
                n: get("n").unwrap() as usize,
                joint,
                beta: if signal { get("beta").unwrap() } else { 0.0 },
                theta: if confounded { get("theta").unwrap() } else { 0.0 },
                rho: get("rho").unwrap(),
            })
        })
        .collect()
}

/// Writes parameter sets with header `n,p11,p10,p01,p00,beta,theta,rho`.
pub fn write_design_csv(params: &[ExperimentParams], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "n,p11,p10,p01,p00,beta,theta,rho")?;
    for p in params {
        let j = p.joint;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.n, j.p11, j.p10, j.p01, j.p00, p.beta, p.theta, p.rho
        )?;
    }
    out.flush()?;
    Ok(())
}
