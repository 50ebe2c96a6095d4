//! Built-in regression learners: Gaussian-kernel ridge regression with an
//! unpenalised intercept, and rectangular-kernel k-nearest neighbours. Both
//! standardise features with the training means and standard deviations.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrrParams {
    /// Ridge scale `c` in `λ = c · n^{−α}`.
    #[serde(default = "KrrParams::default_c_lambda")]
    pub c_lambda: f64,
    /// Ridge decay exponent `α`.
    #[serde(default = "KrrParams::default_alpha")]
    pub alpha: f64,
}

impl KrrParams {
    fn default_c_lambda() -> f64 {
        0.01
    }

    fn default_alpha() -> f64 {
        0.5
    }

    /// `λ = c_λ n^{−α}`.
    pub fn ridge(&self, n: usize) -> f64 {
        self.c_lambda * (n as f64).powf(-self.alpha)
    }

    /// Gaussian lengthscale `√(2d)`.
    pub fn lengthscale(d: usize) -> f64 {
        (2.0 * d as f64).sqrt()
    }
}

impl Default for KrrParams {
    fn default() -> Self {
        KrrParams {
            c_lambda: Self::default_c_lambda(),
            alpha: Self::default_alpha(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnParams {
    #[serde(default = "KnnParams::default_k")]
    pub k: usize,
}

impl KnnParams {
    fn default_k() -> usize {
        15
    }
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: Self::default_k() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Krr(KrrParams),
    Knn(KnnParams),
    /// Predictions supplied in a prediction-set CSV instead of trained here.
    External { predictions_path: PathBuf },
}

impl LearnerSpec {
    pub fn krr() -> Self {
        LearnerSpec::Krr(KrrParams::default())
    }

    pub fn knn() -> Self {
        LearnerSpec::Knn(KnnParams::default())
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LearnerSpec::Krr(_) => "krr",
            LearnerSpec::Knn(_) => "knn",
            LearnerSpec::External { .. } => "external",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Krr(p) => {
                if !(p.c_lambda > 0.0 && p.c_lambda.is_finite()) {
                    return Err(Error::invalid(format!("krr c_lambda must be > 0, got {}", p.c_lambda)));
                }
                if !(p.alpha > 0.0 && p.alpha <= 1.0) {
                    return Err(Error::invalid(format!("krr alpha must lie in (0, 1], got {}", p.alpha)));
                }
            }
            LearnerSpec::Knn(p) => {
                if p.k == 0 {
                    return Err(Error::invalid("knn k must be at least 1"));
                }
            }
            LearnerSpec::External { .. } => {}
        }
        Ok(())
    }

    /// Trains on `(x, y)`. Not available for external predictions.
    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FittedModel> {
        self.validate()?;
        match self {
            LearnerSpec::Krr(p) => FittedKrr::fit(x, y, p).map(FittedModel::Krr),
            LearnerSpec::Knn(p) => FittedKnn::fit(x, y, p).map(FittedModel::Knn),
            LearnerSpec::External { predictions_path } => Err(Error::invalid(format!(
                "external learner cannot be trained; predictions come from {}",
                predictions_path.display()
            ))),
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::Krr(p) if *p == KrrParams::default() => f.write_str("krr"),
            LearnerSpec::Krr(p) => write!(f, "krr:{}:{}", p.c_lambda, p.alpha),
            LearnerSpec::Knn(p) if *p == KnnParams::default() => f.write_str("knn"),
            LearnerSpec::Knn(p) => write!(f, "knn:{}", p.k),
            LearnerSpec::External { predictions_path } => {
                write!(f, "external:{}", predictions_path.display())
            }
        }
    }
}

impl FromStr for LearnerSpec {
    type Err = Error;

    /// `krr`, `krr:<c_lambda>:<alpha>`, `knn`, `knn:<k>`, `external:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        let bad = || Error::invalid(format!("cannot parse learner {s:?}"));
        let spec = match (kind.to_ascii_lowercase().as_str(), rest) {
            ("krr", None) => LearnerSpec::krr(),
            ("krr", Some(r)) => {
                let (c, a) = r.split_once(':').ok_or_else(bad)?;
                LearnerSpec::Krr(KrrParams {
                    c_lambda: c.parse().map_err(|_| bad())?,
                    alpha: a.parse().map_err(|_| bad())?,
                })
            }
            ("knn", None) => LearnerSpec::knn(),
            ("knn", Some(k)) => LearnerSpec::Knn(KnnParams {
                k: k.parse().map_err(|_| bad())?,
            }),
            ("external", Some(p)) if !p.is_empty() => LearnerSpec::External {
                predictions_path: PathBuf::from(p),
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-column centring and scaling fitted on training covariates.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Sample standard deviations (divisor `n − 1`); zero-variance columns
    /// and single-row inputs get scale 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
            means.push(mean);
            scales.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Standardizer { means, scales }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::invalid(format!(
                "expected {} covariate columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.clone();
        for (c, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[c], self.scales[c]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }
}

fn check_training(x: &DMatrix<f64>, y: &DVector<f64>, min_n: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "covariates have {} rows but outcome has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < min_n {
        return Err(Error::invalid(format!(
            "need at least {min_n} training rows, got {}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("covariate matrix has no columns"));
    }
    Ok(())
}

fn sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.ncols() {
        let diff = a[(i, c)] - b[(j, c)];
        acc += diff * diff;
    }
    acc
}

#[derive(Clone, Debug)]
pub enum FittedModel {
    Krr(FittedKrr),
    Knn(FittedKnn),
}

impl FittedModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            FittedModel::Krr(m) => m.predict(x),
            FittedModel::Knn(m) => m.predict(x),
        }
    }
}

/// Kernel ridge regression `m(x) = k(x)ᵀA⁻¹(I − 1wᵀ)Y + wᵀY` with
/// `A = K + nλI` and `w = A⁻¹1 / (1ᵀA⁻¹1)`.
#[derive(Clone, Debug)]
pub struct FittedKrr {
    train: DMatrix<f64>,
    coef: DVector<f64>,
    intercept_weights: DVector<f64>,
    intercept: f64,
    lengthscale: f64,
    ridge: f64,
    standardizer: Standardizer,
}

impl FittedKrr {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, params: &KrrParams) -> Result<Self> {
        check_training(x, y, 2)?;
        let n = x.nrows();
        let standardizer = Standardizer::fit(x);
        let train = standardizer.apply(x)?;
        let lengthscale = KrrParams::lengthscale(x.ncols());
        let ridge = params.ridge(n);
        let a = gram(&train, lengthscale) + DMatrix::identity(n, n) * (n as f64 * ridge);
        let chol = Cholesky::new(a)
            .ok_or_else(|| Error::Numeric("kernel ridge system is not positive definite".into()))?;
        let a_inv_one = chol.solve(&DVector::from_element(n, 1.0));
        let w = &a_inv_one / a_inv_one.sum();
        let intercept = w.dot(y);
        let coef = chol.solve(&y.add_scalar(-intercept));
        Ok(FittedKrr {
            train,
            coef,
            intercept_weights: w,
            intercept,
            lengthscale,
            ridge,
            standardizer,
        })
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn intercept_weights(&self) -> &DVector<f64> {
        &self.intercept_weights
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let q = self.standardizer.apply(x)?;
        let scale = -0.5 / (self.lengthscale * self.lengthscale);
        let n = self.train.nrows();
        Ok(DVector::from_fn(q.nrows(), |i, _| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += (scale * sq_dist(&q, i, &self.train, j)).exp() * self.coef[j];
            }
            acc + self.intercept
        }))
    }

    /// Effective degrees of freedom `tr(H)` of the in-sample smoother
    /// `H = KA⁻¹(I − 1wᵀ) + 1wᵀ`.
    pub fn degrees_of_freedom(&self) -> Result<f64> {
        let n = self.train.nrows();
        let k = gram(&self.train, self.lengthscale);
        let a = &k + DMatrix::identity(n, n) * (n as f64 * self.ridge);
        let chol = Cholesky::new(a)
            .ok_or_else(|| Error::Numeric("kernel ridge system is not positive definite".into()))?;
        // tr(K A⁻¹) = tr(A⁻¹ K); wᵀ K A⁻¹ 1 = wᵀ K a1
        let a_inv_k = chol.solve(&k);
        let a1 = chol.solve(&DVector::from_element(n, 1.0));
        let w = &self.intercept_weights;
        Ok(a_inv_k.trace() - w.dot(&(&k * a1)) + w.sum())
    }
}

fn gram(x: &DMatrix<f64>, lengthscale: f64) -> DMatrix<f64> {
    let n = x.nrows();
    let scale = -0.5 / (lengthscale * lengthscale);
    let mut k = DMatrix::<f64>::zeros_generic(Dyn(n), Dyn(n));
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = (scale * sq_dist(x, i, x, j)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Rectangular-kernel kNN: the uniform average of every training outcome
/// whose distance is at most the k-th smallest distance.
#[derive(Clone, Debug)]
pub struct FittedKnn {
    train: DMatrix<f64>,
    y: DVector<f64>,
    k: usize,
    standardizer: Standardizer,
}

impl FittedKnn {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, params: &KnnParams) -> Result<Self> {
        check_training(x, y, 1)?;
        if params.k == 0 {
            return Err(Error::invalid("knn k must be at least 1"));
        }
        let standardizer = Standardizer::fit(x);
        Ok(FittedKnn {
            train: standardizer.apply(x)?,
            y: y.clone(),
            k: params.k.min(x.nrows()),
            standardizer,
        })
    }

    /// Neighbour count actually used, `min(k, n)`.
    pub fn effective_k(&self) -> usize {
        self.k
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let q = self.standardizer.apply(x)?;
        let n = self.train.nrows();
        let mut dist = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut out = DVector::zeros(q.nrows());
        for i in 0..q.nrows() {
            for (j, d) in dist.iter_mut().enumerate() {
                *d = sq_dist(&q, i, &self.train, j);
            }
            scratch.copy_from_slice(&dist);
            let (_, radius, _) = scratch.select_nth_unstable_by(self.k - 1, f64::total_cmp);
            let radius = *radius;
            let (mut sum, mut count) = (0.0, 0usize);
            for (j, &d) in dist.iter().enumerate() {
                if d <= radius {
                    sum += self.y[j];
                    count += 1;
                }
            }
            out[i] = sum / count as f64;
        }
        Ok(out)
    }
}

/// Fits kNN on `(x, y)` and predicts at `x_new`.
pub fn fit_predict_knn(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    x_new: &DMatrix<f64>,
    params: &KnnParams,
) -> Result<DVector<f64>> {
    FittedKnn::fit(x, y, params)?.predict(x_new)
}
