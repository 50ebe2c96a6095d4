//! Point estimators of the mean outcome with Wald intervals.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bregman::Generator;
use crate::calibration::{independent_columns, CalibrationProblem, SolveOptions};
use crate::crossfit::{cross_predict, full_sample_predict, FoldAssignment, PredictionSet, DEFAULT_FOLDS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::learners::LearnerSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Classical,
    Ppi,
    CfPpi,
    Mec,
    Greg,
    Oracle,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Classical => "classical",
            Method::Ppi => "ppi",
            Method::CfPpi => "cfppi",
            Method::Mec => "mec",
            Method::Greg => "greg",
            Method::Oracle => "oracle",
        }
    }

    /// Whether the estimator consumes cross-fitted predictions.
    pub fn uses_crossfit(self) -> bool {
        matches!(self, Method::CfPpi | Method::Mec | Method::Greg)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "classical" => Method::Classical,
            "ppi" => Method::Ppi,
            "cfppi" | "cf-ppi" => Method::CfPpi,
            "mec" => Method::Mec,
            "greg" => Method::Greg,
            "oracle" => Method::Oracle,
            _ => return Err(Error::invalid(format!("unknown method {s:?}"))),
        })
    }
}

/// Method-specific extras carried alongside the headline numbers.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    /// GREG value reported next to a calibrated estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greg_theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_weight: Option<f64>,
    /// `D_G(ω̂‖d)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_weights: Option<usize>,
    pub collapsed_basis: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    pub theta_hat: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub population: usize,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learner: Option<String>,
    pub diagnostics: Diagnostics,
}

pub const CSV_HEADER: [&str; 11] = [
    "method",
    "generator",
    "theta_hat",
    "se",
    "ci_lower",
    "ci_upper",
    "n",
    "N",
    "f",
    "K",
    "learner",
];

impl EstimateReport {
    fn new(method: Method, theta_hat: f64, se: f64, alpha: f64, n: usize, population: usize) -> Self {
        let (ci_lower, ci_upper) = wald_interval(theta_hat, se, alpha);
        EstimateReport {
            method,
            generator: None,
            theta_hat,
            se,
            ci_lower,
            ci_upper,
            alpha,
            n,
            population,
            folds: None,
            learner: None,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }

    pub fn covers(&self, target: f64) -> bool {
        self.ci_lower <= target && target <= self.ci_upper
    }

    pub fn fraction(&self) -> f64 {
        self.n as f64 / self.population as f64
    }

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.method.to_string(),
            self.generator.map(|g| g.to_string()).unwrap_or_default(),
            fmt_num(self.theta_hat),
            fmt_num(self.se),
            fmt_num(self.ci_lower),
            fmt_num(self.ci_upper),
            self.n.to_string(),
            self.population.to_string(),
            fmt_num(self.fraction()),
            self.folds.map(|k| k.to_string()).unwrap_or_default(),
            self.learner.clone().unwrap_or_default(),
        ]
    }
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.method)?;
        if let Some(g) = self.generator {
            write!(f, " [{g}]")?;
        }
        if let Some(l) = &self.learner {
            write!(f, " learner={l}")?;
        }
        writeln!(f)?;
        writeln!(f, "  theta_hat = {}", fmt_num(self.theta_hat))?;
        writeln!(f, "  se        = {}", fmt_num(self.se))?;
        writeln!(
            f,
            "  {}% CI    = [{}, {}]",
            fmt_num(100.0 * (1.0 - self.alpha)),
            fmt_num(self.ci_lower),
            fmt_num(self.ci_upper)
        )?;
        write!(f, "  n = {}, N = {}", self.n, self.population)?;
        if let Some(k) = self.folds {
            write!(f, ", K = {k}")?;
        }
        let d = &self.diagnostics;
        if let Some(b) = d.beta1 {
            write!(f, "\n  beta1 = {}", fmt_num(b))?;
        }
        if let (Some(lo), Some(hi)) = (d.min_weight, d.max_weight) {
            write!(f, "\n  weights in [{}, {}]", fmt_num(lo), fmt_num(hi))?;
        }
        for w in &d.warnings {
            write!(f, "\n  warning: {w}")?;
        }
        Ok(())
    }
}

pub fn write_reports_csv<W: Write>(reports: &[EstimateReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// `θ̂ ∓ z_{1−α/2}·se`.
pub fn wald_interval(theta: f64, se: f64, alpha: f64) -> (f64, f64) {
    let half = normal_quantile(1.0 - alpha / 2.0) * se;
    (theta - half, theta + half)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Label-only sample mean with `se = sd/√n`.
pub fn classical_mean(y: &DVector<f64>, alpha: f64) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    let n = y.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 labeled units, got {n}")));
    }
    let theta = mean(y.as_slice());
    let se = (sample_variance(y.as_slice()) / n as f64).sqrt();
    Ok(EstimateReport::new(Method::Classical, theta, se, alpha, n, n))
}

/// [`classical_mean`] on the labeled part of `data`, reported against the
/// frame size `N`.
pub fn classical(data: &Dataset, alpha: f64) -> Result<EstimateReport> {
    let mut r = classical_mean(data.labeled_y(), alpha)?;
    r.population = data.population();
    Ok(r)
}

/// Plug-in mean of `all` plus the labeled residual mean, with
/// `se² = Var(all)/N + Var(y − m_S)/n`.
fn rectified_mean(y: &DVector<f64>, m_s: &DVector<f64>, all: &DVector<f64>) -> (f64, f64) {
    let resid: Vec<f64> = y.iter().zip(m_s.iter()).map(|(a, b)| a - b).collect();
    let theta = mean(all.as_slice()) + mean(&resid);
    let var = sample_variance(all.as_slice()) / all.len() as f64 + sample_variance(&resid) / y.len() as f64;
    (theta, var.sqrt())
}

fn prediction_report(
    method: Method,
    data: &Dataset,
    preds: &PredictionSet,
    alpha: f64,
) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    preds.check_aligned(data)?;
    let (theta, se) = rectified_mean(data.labeled_y(), &preds.labeled, &preds.unified());
    let mut r = EstimateReport::new(method, theta, se, alpha, data.n(), data.population());
    r.folds = preds.k;
    r.learner = Some(preds.learner.clone());
    Ok(r)
}

/// Prediction-powered estimate from one full-sample fit, reusing the labels
/// that trained the model.
pub fn ppi_vanilla(data: &Dataset, learner: &LearnerSpec, alpha: f64) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    let preds = full_sample_predict(data, learner)?;
    prediction_report(Method::Ppi, data, &preds, alpha)
}

/// Cross-fit PPI: labeled units scored out of fold, unlabeled units by the
/// aggregate model.
pub fn ppi_crossfit(data: &Dataset, preds: &PredictionSet, alpha: f64) -> Result<EstimateReport> {
    prediction_report(Method::CfPpi, data, preds, alpha)
}

/// PPI with the true regression function (simulation reference).
pub fn ppi_oracle(
    data: &Dataset,
    m0_labeled: &DVector<f64>,
    m0_unlabeled: &DVector<f64>,
    alpha: f64,
) -> Result<EstimateReport> {
    let preds = PredictionSet::new(m0_labeled.clone(), m0_unlabeled.clone(), None, "true-regression")?;
    let mut r = prediction_report(Method::Oracle, data, &preds, alpha)?;
    r.learner = None;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GregFit {
    pub beta0: f64,
    pub beta1: f64,
    /// WLS weights `1/g′(d_j)`.
    pub q: DVector<f64>,
    /// Set when the predictions carry no direction beyond the intercept.
    pub degenerate: bool,
}

/// Weighted least squares of `y` on `(1, m_s)` with weights `1/g′(d_j)`.
/// A prediction vector that is constant (to the calibration rank tolerance)
/// gives `β̂₁ = 0`.
pub fn greg_fit(y: &DVector<f64>, m_s: &DVector<f64>, generator: Generator, d: &DVector<f64>) -> Result<GregFit> {
    let n = y.len();
    if n < 2 || m_s.len() != n || d.len() != n {
        return Err(Error::invalid(format!(
            "greg fit needs n >= 2 aligned vectors, got {}, {}, {}",
            n,
            m_s.len(),
            d.len()
        )));
    }
    let q = d
        .iter()
        .map(|&dj| generator.curvature(dj).map(|c| 1.0 / c))
        .collect::<Result<Vec<f64>>>()?;
    let q = DVector::from_vec(q);
    let sw = q.sum();
    let mw = q.dot(m_s) / sw;
    let yw = q.dot(y) / sw;
    let degenerate = independent_columns(&basis(m_s))?.len() < 2;
    let beta1 = if degenerate {
        0.0
    } else {
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for j in 0..n {
            let dm = m_s[j] - mw;
            sxx += q[j] * dm * dm;
            sxy += q[j] * dm * (y[j] - yw);
        }
        sxy / sxx
    };
    Ok(GregFit {
        beta0: yw - beta1 * mw,
        beta1,
        q,
        degenerate,
    })
}

fn basis(m_s: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m_s.len(), 2, |i, c| if c == 0 { 1.0 } else { m_s[i] })
}

/// `β̂₁·mean(all) + mean(y − β̂₁ m_S)`.
fn greg_value(beta1: f64, y: &DVector<f64>, m_s: &DVector<f64>, all: &DVector<f64>) -> f64 {
    let resid: Vec<f64> = y.iter().zip(m_s.iter()).map(|(a, b)| a - beta1 * b).collect();
    beta1 * mean(all.as_slice()) + mean(&resid)
}

/// `se² = Var_U(β̂₁ m_U)/N + Var_S(y − β̂₁ m_S)/n`, the first variance taken
/// over the unlabeled units.
fn greg_se(beta1: f64, y: &DVector<f64>, m_s: &DVector<f64>, m_u: &DVector<f64>, population: usize) -> f64 {
    let scaled: Vec<f64> = m_u.iter().map(|m| beta1 * m).collect();
    let resid: Vec<f64> = y.iter().zip(m_s.iter()).map(|(a, b)| a - beta1 * b).collect();
    (sample_variance(&scaled) / population as f64 + sample_variance(&resid) / y.len() as f64).sqrt()
}

fn uniform_baseline(data: &Dataset) -> DVector<f64> {
    DVector::from_element(data.n(), data.population() as f64 / data.n() as f64)
}

/// GREG estimator with slope from [`greg_fit`]; the intercept cancels.
pub fn greg_estimate(
    data: &Dataset,
    preds: &PredictionSet,
    generator: Generator,
    alpha: f64,
) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    preds.check_aligned(data)?;
    let y = data.labeled_y();
    let fit = greg_fit(y, &preds.labeled, generator, &uniform_baseline(data))?;
    let theta = greg_value(fit.beta1, y, &preds.labeled, &preds.unified());
    let se = greg_se(fit.beta1, y, &preds.labeled, &preds.unlabeled, data.population());
    let mut r = EstimateReport::new(Method::Greg, theta, se, alpha, data.n(), data.population());
    r.generator = Some(generator);
    r.folds = preds.k;
    r.learner = Some(preds.learner.clone());
    r.diagnostics.beta0 = Some(fit.beta0);
    r.diagnostics.beta1 = Some(fit.beta1);
    r.diagnostics.collapsed_basis = fit.degenerate;
    Ok(r)
}

/// Calibration estimator `θ̂ = N⁻¹ Σ ω̂_j y_j` with weights calibrated on the
/// basis `(1, m̂)` to the frame totals `(N, Σ m̂)`.
///
/// If the prediction vector is constant on the labeled sample the basis
/// collapses to the intercept; the estimate then falls back to cross-fit PPI
/// and a warning is attached.
pub fn mec(data: &Dataset, preds: &PredictionSet, generator: Generator, alpha: f64) -> Result<EstimateReport> {
    mec_with_options(data, preds, generator, alpha, &SolveOptions::default())
}

pub fn mec_with_options(
    data: &Dataset,
    preds: &PredictionSet,
    generator: Generator,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    preds.check_aligned(data)?;
    let y = data.labeled_y();
    let m_s = &preds.labeled;
    let all = preds.unified();
    let population = data.population() as f64;
    let fit = greg_fit(y, m_s, generator, &uniform_baseline(data))?;

    let (basis, totals) = if fit.degenerate {
        (DMatrix::from_element(data.n(), 1, 1.0), DVector::from_element(1, population))
    } else {
        (basis(m_s), DVector::from_vec(vec![population, all.sum()]))
    };
    let problem = CalibrationProblem::with_uniform_baseline(basis, totals, population, generator)?;
    let sol = problem.solve(opts)?;
    if !sol.converged {
        return Err(Error::SolverFailure {
            iteration: sol.iterations,
            reason: format!(
                "no convergence within {} iterations (residual {:e})",
                opts.max_iter, sol.residual_norm
            ),
        });
    }

    let (theta, se, warnings) = if fit.degenerate {
        let (theta, se) = rectified_mean(y, m_s, &all);
        let w = "predictions are constant on the labeled sample; reporting the cross-fit PPI estimate".to_string();
        (theta, se, vec![w])
    } else {
        let theta = sol.omega.iter().zip(y.iter()).map(|(w, v)| w * v).sum::<f64>() / population;
        let se = greg_se(fit.beta1, y, m_s, &preds.unlabeled, data.population());
        (theta, se, Vec::new())
    };

    let mut r = EstimateReport::new(Method::Mec, theta, se, alpha, data.n(), data.population());
    r.generator = Some(generator);
    r.folds = preds.k;
    r.learner = Some(preds.learner.clone());
    r.diagnostics = Diagnostics {
        greg_theta: Some(greg_value(fit.beta1, y, m_s, &all)),
        min_weight: Some(sol.min_weight()),
        max_weight: Some(sol.max_weight()),
        divergence: Some(sol.objective),
        iterations: Some(sol.iterations),
        residual_norm: Some(sol.residual_norm),
        negative_weights: Some(sol.negative_weights),
        lambda: Some(sol.lambda),
        beta0: Some(fit.beta0),
        beta1: Some(fit.beta1),
        collapsed_basis: fit.degenerate,
        warnings,
    };
    Ok(r)
}

/// Everything needed to run any estimator on a dataset.
#[derive(Clone, Debug)]
pub struct EstimateOptions {
    pub learner: LearnerSpec,
    pub generator: Generator,
    pub alpha: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            learner: LearnerSpec::krr(),
            generator: Generator::Quadratic,
            alpha: 0.05,
            folds: DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

/// Cross-fitted predictions for `data`, or the imported prediction file when
/// the learner is external.
pub fn predictions_for(data: &Dataset, opts: &EstimateOptions) -> Result<PredictionSet> {
    let preds = match &opts.learner {
        LearnerSpec::External { predictions_path } => PredictionSet::read_csv(predictions_path)?,
        learner => {
            let folds = FoldAssignment::new(data.n(), opts.folds, opts.seed)?;
            cross_predict(data, &folds, learner)?
        }
    };
    preds.check_aligned(data)?;
    Ok(preds)
}

/// Runs one estimator. The oracle method needs the true regression and is
/// only available from the simulation harness.
pub fn estimate(method: Method, data: &Dataset, opts: &EstimateOptions) -> Result<EstimateReport> {
    match method {
        Method::Classical => classical(data, opts.alpha),
        Method::Ppi => match &opts.learner {
            LearnerSpec::External { .. } => {
                let preds = predictions_for(data, opts)?;
                prediction_report(Method::Ppi, data, &preds, opts.alpha)
            }
            learner => ppi_vanilla(data, learner, opts.alpha),
        },
        Method::CfPpi => ppi_crossfit(data, &predictions_for(data, opts)?, opts.alpha),
        Method::Mec => mec(data, &predictions_for(data, opts)?, opts.generator, opts.alpha),
        Method::Greg => greg_estimate(data, &predictions_for(data, opts)?, opts.generator, opts.alpha),
        Method::Oracle => Err(Error::invalid(
            "the oracle estimator needs the true regression function; use the simulation harness",
        )),
    }
}
