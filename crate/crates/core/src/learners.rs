//! Built-in learners: L2-penalized logistic regression and (ridge) least
//! squares.
//!
//! Features are standardized internally with training means and population
//! standard deviations; fitted weights are mapped back to the original
//! scale, so callers never see the transform. Columns with zero variance
//! carry weight 0.
//!
//! Permutation loops refit the same design against many shuffled
//! responses. [`Design`] caches the standardized matrix (and for least
//! squares the factorized normal equations) so only the response changes
//! between fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    Ols,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    /// Penalty on standardized slopes; the intercept is never penalized.
    pub l2_penalty: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl LearnerSpec {
    pub fn logistic() -> Self {
        Self {
            kind: LearnerKind::Logistic,
            l2_penalty: 1e-3,
            max_iters: 100,
            tol: 1e-8,
        }
    }

    pub fn ols() -> Self {
        Self {
            kind: LearnerKind::Ols,
            l2_penalty: 0.0,
            max_iters: 1,
            tol: 1e-8,
        }
    }

    pub fn with_l2(mut self, l2: f64) -> Self {
        self.l2_penalty = l2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l2_penalty >= 0.0) || !self.l2_penalty.is_finite() {
            return Err(Error::InvalidParameter("learner.l2 must be finite and nonnegative".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("learner.tol must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("learner.max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fitted linear model: `weights[0]` is the intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: LearnerKind,
    pub weights: Vec<f64>,
}

impl Model {
    pub fn n_features(&self) -> usize {
        self.weights.len() - 1
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Linear predictor for every row of `x`; rejects wrong column counts.
fn linear(m: &Model, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != m.n_features() {
        return Err(Error::Dimension {
            expected: m.n_features(),
            found: x.ncols(),
        });
    }
    Ok((0..x.nrows())
        .map(|i| m.weights[0] + x.row(i).iter().zip(&m.weights[1..]).map(|(a, w)| a * w).sum::<f64>())
        .collect())
}

/// Probabilities for logistic models, fitted values for least squares.
pub fn predict(m: &Model, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let eta = linear(m, x)?;
    Ok(match m.kind {
        LearnerKind::Logistic => eta.into_iter().map(sigmoid).collect(),
        LearnerKind::Ols => eta,
    })
}

fn column_moments(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|col| {
            let m = col.sum() / n;
            let v = col.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
            (m, v.sqrt())
        })
        .unzip()
}

/// Column sd below this (relative to scale) counts as constant.
fn is_constant(sd: f64, mean: f64) -> bool {
    sd <= 1e-12 * mean.abs().max(1.0)
}

/// Penalized mean negative log-likelihood in the original weight scale:
/// `mean(softplus(eta) - y eta) + (l2/2) sum_j (sd_j w_j)^2`.
pub fn logistic_objective(weights: &[f64], x: &DMatrix<f64>, y: &[f64], l2: f64) -> f64 {
    let m = Model {
        kind: LearnerKind::Logistic,
        weights: weights.to_vec(),
    };
    let eta = linear(&m, x).expect("weights match features");
    let (_, sds) = column_moments(x);
    let nll = eta.iter().zip(y).map(|(e, t)| softplus(*e) - t * e).sum::<f64>() / y.len() as f64;
    let pen: f64 = weights[1..].iter().zip(&sds).map(|(w, s)| (s * w).powi(2)).sum();
    nll + 0.5 * l2 * pen
}

/// Gradient of [`logistic_objective`].
pub fn logistic_gradient(weights: &[f64], x: &DMatrix<f64>, y: &[f64], l2: f64) -> Vec<f64> {
    let m = Model {
        kind: LearnerKind::Logistic,
        weights: weights.to_vec(),
    };
    let p = predict(&m, x).expect("weights match features");
    let (_, sds) = column_moments(x);
    let n = y.len() as f64;
    let r: Vec<f64> = p.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut g = vec![r.iter().sum::<f64>() / n];
    for (j, col) in x.column_iter().enumerate() {
        let d = col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / n;
        g.push(d + l2 * sds[j] * sds[j] * weights[j + 1]);
    }
    g
}

/// A feature matrix prepared for repeated fits against different responses.
#[derive(Clone, Debug)]
pub struct Design {
    spec: LearnerSpec,
    n_features: usize,
    active: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
    /// Standardized active columns; for logistic a leading column of ones.
    z: DMatrix<f64>,
    /// Factorized normal equations (least squares only).
    normal: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl Design {
    pub fn new(spec: &LearnerSpec, x: &DMatrix<f64>) -> Result<Self> {
        spec.validate()?;
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("training needs at least 2 rows, got {n}")));
        }
        let (means, sds) = column_moments(x);
        let active: Vec<usize> = (0..x.ncols()).filter(|&j| !is_constant(sds[j], means[j])).collect();
        let offset = usize::from(spec.kind == LearnerKind::Logistic);
        let mut z = DMatrix::<f64>::zeros(n, active.len() + offset);
        if offset == 1 {
            z.column_mut(0).fill(1.0);
        }
        for (k, &j) in active.iter().enumerate() {
            for i in 0..n {
                z[(i, k + offset)] = (x[(i, j)] - means[j]) / sds[j];
            }
        }
        let normal = match spec.kind {
            LearnerKind::Logistic => None,
            LearnerKind::Ols => {
                let k = active.len();
                let mut a = z.tr_mul(&z) / n as f64;
                for d in 0..k {
                    a[(d, d)] += spec.l2_penalty;
                }
                let chol = nalgebra::Cholesky::new(a).ok_or(Error::Singular)?;
                if spec.l2_penalty == 0.0 && k > 0 {
                    let diag: Vec<f64> = (0..k).map(|d| chol.l_dirty()[(d, d)].powi(2)).collect();
                    let max = diag.iter().cloned().fold(0.0, f64::max);
                    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
                    if min < 1e-12 * max {
                        return Err(Error::Singular);
                    }
                }
                Some(chol)
            }
        };
        Ok(Self {
            spec: *spec,
            n_features: x.ncols(),
            active,
            means,
            sds,
            z,
            normal,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.z.nrows()
    }

    pub fn fit(&self, y: &[f64]) -> Result<Model> {
        crate::error::check_len(self.n_rows(), y.len())?;
        let (intercept, slopes) = match self.spec.kind {
            LearnerKind::Ols => self.fit_ols(y)?,
            LearnerKind::Logistic => self.fit_logistic(y)?,
        };
        let mut weights = vec![0.0; self.n_features + 1];
        let mut b0 = intercept;
        for (k, &j) in self.active.iter().enumerate() {
            let w = slopes[k] / self.sds[j];
            weights[j + 1] = w;
            b0 -= w * self.means[j];
        }
        weights[0] = b0;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Degenerate("fitted weights are not finite".into()));
        }
        Ok(Model {
            kind: self.spec.kind,
            weights,
        })
    }

    fn fit_ols(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = y.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ybar));
        let rhs = self.z.tr_mul(&yc) / n;
        let v = self.normal.as_ref().expect("least-squares design").solve(&rhs);
        Ok((ybar, v.iter().copied().collect()))
    }

    fn objective(&self, v: &DVector<f64>, y: &[f64]) -> f64 {
        let eta = &self.z * v;
        let n = y.len() as f64;
        let nll = eta.iter().zip(y).map(|(e, t)| softplus(*e) - t * e).sum::<f64>() / n;
        nll + 0.5 * self.spec.l2_penalty * v.rows(1, v.len() - 1).norm_squared()
    }

    fn gradient(&self, v: &DVector<f64>, y: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let eta = &self.z * v;
        let p = eta.map(sigmoid);
        let r = DVector::from_iterator(y.len(), p.iter().zip(y).map(|(a, b)| a - b));
        let mut g = self.z.tr_mul(&r) / y.len() as f64;
        for k in 1..g.len() {
            g[k] += self.spec.l2_penalty * v[k];
        }
        (g, p)
    }

    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let n = p.len();
        let mut zw = self.z.clone();
        for i in 0..n {
            let w = p[i] * (1.0 - p[i]);
            zw.row_mut(i).scale_mut(w);
        }
        let mut h = self.z.tr_mul(&zw) / n as f64;
        for k in 1..h.nrows() {
            h[(k, k)] += self.spec.l2_penalty;
        }
        h
    }

    fn fit_logistic(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter("logistic response must be coded 0/1".into()));
        }
        let pos = y.iter().filter(|&&v| v == 1.0).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::SingleClass);
        }
        let dim = self.z.ncols();
        let mut v = DVector::<f64>::zeros(dim);
        let mut f = self.objective(&v, y);
        let mut converged = false;
        for _ in 0..self.spec.max_iters {
            let (g, p) = self.gradient(&v, y);
            if g.norm() <= self.spec.tol {
                converged = true;
                break;
            }
            if !self.step(&mut v, &mut f, &g, &p, y) {
                break;
            }
        }
        if converged {
            // one more Newton step drives the gradient to rounding level
            let (g, p) = self.gradient(&v, y);
            self.step(&mut v, &mut f, &g, &p, y);
        }
        Ok((v[0], v.iter().skip(1).copied().collect()))
    }

    /// One damped Newton step (gradient step if the Hessian is unusable).
    /// Returns false when no step decreases the objective.
    fn step(&self, v: &mut DVector<f64>, f: &mut f64, g: &DVector<f64>, p: &DVector<f64>, y: &[f64]) -> bool {
        let h = self.hessian(p);
        let newton = nalgebra::Cholesky::new(h)
            .map(|c| c.solve(g))
            .filter(|d| d.iter().all(|x| x.is_finite()));
        let is_newton = newton.is_some();
        let dir = newton.unwrap_or_else(|| g.clone());
        // a full Newton step may look flat or slightly uphill at rounding level
        let slack = if is_newton { 8.0 * f64::EPSILON * f.abs().max(1.0) } else { 0.0 };
        let mut t = 1.0;
        for i in 0..60 {
            let cand = &*v - &dir * t;
            let fc = self.objective(&cand, y);
            if fc.is_finite() && fc <= *f + if i == 0 { slack } else { 0.0 } {
                *v = cand;
                *f = fc;
                return true;
            }
            t *= 0.5;
        }
        false
    }
}

/// Fits a model of `spec.kind` to `(x, y)`.
pub fn train(spec: &LearnerSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<Model> {
    crate::error::check_len(x.nrows(), y.len())?;
    Design::new(spec, x)?.fit(y)
}
