//! Synthetic data with a known mean and the Monte Carlo coverage harness.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bregman::Generator;
use crate::crossfit::{cross_predict, FoldAssignment, DEFAULT_FOLDS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{classical, mec, ppi_crossfit, ppi_oracle, ppi_vanilla, EstimateReport, Method};
use crate::io::fmt_num;
use crate::learners::LearnerSpec;

/// Environment variable overriding the worker-thread count.
pub const WORKERS_ENV: &str = "MEC_WORKERS";

/// Number of covariates that enter the true regression.
pub const ACTIVE_COVARIATES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Frame size: labeled plus unlabeled units.
    #[serde(rename = "N")]
    pub population: usize,
    pub f_grid: Vec<f64>,
    pub d: usize,
    #[serde(default)]
    pub rho: f64,
    pub sigma_y: f64,
    #[serde(rename = "R")]
    pub replications: usize,
    #[serde(rename = "K", default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_learners")]
    pub learners: Vec<LearnerSpec>,
    #[serde(default = "default_generators")]
    pub generators: Vec<Generator>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_learners() -> Vec<LearnerSpec> {
    vec![LearnerSpec::krr(), LearnerSpec::knn()]
}

fn default_generators() -> Vec<Generator> {
    vec![Generator::Quadratic]
}

fn default_alpha() -> f64 {
    0.05
}

impl SimulationConfig {
    /// The main experiment: `N = 1000`, `d = 10`, independent covariates,
    /// `σ_y = 5`, label fractions `0.10, 0.15, …, 0.50`, 2000 replications.
    pub fn main_experiment() -> Self {
        SimulationConfig {
            population: 1000,
            f_grid: (2..=10).map(|i| i as f64 / 20.0).collect(),
            d: 10,
            rho: 0.0,
            sigma_y: 5.0,
            replications: 2000,
            folds: DEFAULT_FOLDS,
            learners: default_learners(),
            generators: default_generators(),
            alpha: default_alpha(),
            seed: 20_240_601,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.f_grid.is_empty() {
            return bad("f_grid is empty".into());
        }
        if let Some(f) = self.f_grid.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return bad(format!("f_grid values must lie in (0, 1), got {f}"));
        }
        if self.population < 3 {
            return bad(format!("N must be at least 3, got {}", self.population));
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.sigma_y >= 0.0 && self.sigma_y.is_finite()) {
            return bad(format!("sigma_y must be finite and >= 0, got {}", self.sigma_y));
        }
        if self.replications == 0 {
            return bad("R must be at least 1".into());
        }
        if self.folds < 2 {
            return bad(format!("K must be at least 2, got {}", self.folds));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        for l in &self.learners {
            if matches!(l, LearnerSpec::External { .. }) {
                return bad("external learners cannot be used in simulations".into());
            }
            l.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Labeled size `round(f·N)`.
    pub fn labeled_size(&self, f: f64) -> usize {
        (f * self.population as f64).round() as usize
    }

    /// Why the cell at label fraction `f` cannot run, if it cannot.
    pub fn cell_problem(&self, f: f64) -> Option<String> {
        let n = self.labeled_size(f);
        if n < self.folds.max(2) {
            Some(format!("n = {n} is below K = {}", self.folds))
        } else if n >= self.population {
            Some(format!("n = {n} leaves no unlabeled units"))
        } else {
            None
        }
    }
}

/// `e^{−x₁} + x₂² + x₃ + 1{x₄ > 0} + cos x₅`; coordinates beyond the fifth are
/// ignored and shorter inputs use the leading terms only.
pub fn true_regression(x: &[f64]) -> f64 {
    let terms: [fn(f64) -> f64; ACTIVE_COVARIATES] = [
        |v| (-v).exp(),
        |v| v * v,
        |v| v,
        |v| if v > 0.0 { 1.0 } else { 0.0 },
        f64::cos,
    ];
    x.iter().zip(terms).map(|(&v, t)| t(v)).sum()
}

/// `E[m₀(X)]` for standard normal marginals: `e^{1/2} + 1 + 0 + 1/2 + e^{−1/2}`,
/// truncated to the first `d` terms.
pub fn true_mean(d: usize) -> f64 {
    let terms = [0.5f64.exp(), 1.0, 0.0, 0.5, (-0.5f64).exp()];
    terms.iter().take(d).sum()
}

/// Simulated truth for one replication.
#[derive(Clone, Debug)]
pub struct Truth {
    pub theta0: f64,
    pub m0_labeled: DVector<f64>,
    pub m0_unlabeled: DVector<f64>,
}

/// Draws one covariate row with `Cov(x_i, x_j) = ρ^{|i−j|}` by the AR(1)
/// recursion `x_k = ρ x_{k−1} + √(1−ρ²) z_k`, which equals multiplying by the
/// Cholesky factor of the covariance.
pub fn draw_covariates<R: rand::Rng>(rng: &mut R, d: usize, rho: f64, out: &mut [f64]) {
    let scale = (1.0 - rho * rho).sqrt();
    for k in 0..d {
        let z: f64 = StandardNormal.sample(rng);
        out[k] = if k == 0 { z } else { rho * out[k - 1] + scale * z };
    }
}

/// `N` covariate rows, the first `n = round(f·N)` labeled with
/// `Y = m₀(X) + σ_y ε`.
pub fn draw_dataset(cfg: &SimulationConfig, f: f64, rep_seed: u64) -> Result<(Dataset, Truth)> {
    if let Some(problem) = cfg.cell_problem(f) {
        return Err(Error::Config(problem));
    }
    let (big_n, n, d) = (cfg.population, cfg.labeled_size(f), cfg.d);
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    let mut x = DMatrix::zeros(big_n, d);
    let mut row = vec![0.0; d];
    let mut m0 = Vec::with_capacity(big_n);
    for i in 0..big_n {
        draw_covariates(&mut rng, d, cfg.rho, &mut row);
        for (k, &v) in row.iter().enumerate() {
            x[(i, k)] = v;
        }
        m0.push(true_regression(&row));
    }
    let y = DVector::from_fn(n, |j, _| {
        let eps: f64 = StandardNormal.sample(&mut rng);
        m0[j] + cfg.sigma_y * eps
    });
    let data = Dataset::new(x.rows(0, n).into_owned(), y, x.rows(n, big_n - n).into_owned())?;
    let truth = Truth {
        theta0: true_mean(d),
        m0_labeled: DVector::from_column_slice(&m0[..n]),
        m0_unlabeled: DVector::from_column_slice(&m0[n..]),
    };
    Ok((data, truth))
}

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` in grid cell `cell`:
/// `mix64(mix64(mix64(seed) ^ cell) ^ rep)`.
pub fn replication_seed(seed: u64, cell: usize, rep: usize) -> u64 {
    mix64(mix64(mix64(seed) ^ cell as u64) ^ rep as u64)
}

/// Seed for the fold assignment inside a replication.
fn fold_seed(rep_seed: u64) -> u64 {
    mix64(rep_seed ^ 0x5EED_F01D)
}

/// Identifies one estimator arm of the study.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub method: Method,
    pub learner: Option<String>,
    pub generator: Option<Generator>,
}

impl Arm {
    fn new(method: Method, learner: Option<&LearnerSpec>, generator: Option<Generator>) -> Self {
        Arm {
            method,
            learner: learner.map(|l| l.to_string()),
            generator,
        }
    }
}

/// Arms evaluated in every replication, in output order.
pub fn arms(cfg: &SimulationConfig) -> Vec<Arm> {
    let mut out = vec![Arm::new(Method::Classical, None, None), Arm::new(Method::Oracle, None, None)];
    for l in &cfg.learners {
        out.push(Arm::new(Method::Ppi, Some(l), None));
        out.push(Arm::new(Method::CfPpi, Some(l), None));
        for &g in &cfg.generators {
            out.push(Arm::new(Method::Mec, Some(l), Some(g)));
        }
    }
    out
}

/// One replication's result for one arm.
#[derive(Clone, Debug)]
pub struct ArmOutcome {
    pub theta_hat: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl From<&EstimateReport> for ArmOutcome {
    fn from(r: &EstimateReport) -> Self {
        ArmOutcome {
            theta_hat: r.theta_hat,
            ci_lower: r.ci_lower,
            ci_upper: r.ci_upper,
        }
    }
}

/// Outcomes of every arm (aligned with [`arms`]) for one replication; failed
/// arms hold the error message.
pub fn run_replication(cfg: &SimulationConfig, f: f64, rep_seed: u64) -> Result<Vec<std::result::Result<ArmOutcome, String>>> {
    let (data, truth) = draw_dataset(cfg, f, rep_seed)?;
    let alpha = cfg.alpha;
    let keep = |r: Result<EstimateReport>| r.map(|r| ArmOutcome::from(&r)).map_err(|e| e.to_string());
    let mut out = vec![
        keep(classical(&data, alpha)),
        keep(ppi_oracle(&data, &truth.m0_labeled, &truth.m0_unlabeled, alpha)),
    ];
    let folds = FoldAssignment::new(data.n(), cfg.folds, fold_seed(rep_seed));
    for learner in &cfg.learners {
        out.push(keep(ppi_vanilla(&data, learner, alpha)));
        let preds = match &folds {
            Ok(folds) => cross_predict(&data, folds, learner).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        match &preds {
            Ok(p) => out.push(keep(ppi_crossfit(&data, p, alpha))),
            Err(e) => out.push(Err(e.clone())),
        }
        for &g in &cfg.generators {
            match &preds {
                Ok(p) => out.push(keep(mec(&data, p, g, alpha))),
                Err(e) => out.push(Err(e.clone())),
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub learner: Option<String>,
    pub generator: Option<Generator>,
    pub f: f64,
    /// Share of successful replications whose interval contains `θ₀`.
    pub coverage: f64,
    /// Mean width over the mean classical width at the same `f`.
    pub width_ratio: f64,
    pub mean_width: f64,
    pub mean_bias: f64,
    /// Empirical variance of the point estimates (divisor `R − 1`).
    pub estimate_variance: f64,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedCell {
    pub f: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub rows: Vec<SummaryRow>,
    pub skipped: Vec<SkippedCell>,
    /// First failure message per arm and cell, for reporting.
    pub failure_examples: Vec<String>,
}

impl SimulationSummary {
    pub fn row(&self, method: Method, learner: Option<&str>, generator: Option<Generator>, f: f64) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| {
            r.method == method && r.learner.as_deref() == learner && r.generator == generator && r.f == f
        })
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "method",
        "learner",
        "generator",
        "f",
        "coverage",
        "width_ratio",
        "mean_width",
        "mean_bias",
        "failures",
        "replications",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.method.to_string(),
                r.learner.clone().unwrap_or_default(),
                r.generator.map(|g| g.to_string()).unwrap_or_default(),
                fmt_num(r.f),
                fmt_num(r.coverage),
                fmt_num(r.width_ratio),
                fmt_num(r.mean_width),
                fmt_num(r.mean_bias),
                r.failures.to_string(),
                r.replications.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width text table, one line per row.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<10} {:<8} {:<16} {:>6} {:>9} {:>11} {:>11} {:>11} {:>8}\n",
            "method", "learner", "generator", "f", "coverage", "width_ratio", "mean_width", "mean_bias", "failures"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:<8} {:<16} {:>6} {:>9.4} {:>11.4} {:>11.4} {:>11.4} {:>8}",
                r.method.to_string(),
                r.learner.as_deref().unwrap_or("-"),
                r.generator.map(|g| g.to_string()).unwrap_or_else(|| "-".into()),
                fmt_num(r.f),
                r.coverage,
                r.width_ratio,
                r.mean_width,
                r.mean_bias,
                r.failures
            );
        }
        for c in &self.skipped {
            let _ = writeln!(s, "skipped f = {}: {}", fmt_num(c.f), c.reason);
        }
        s
    }
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `op` on a pool sized by [`WORKERS_ENV`], or on the global pool.
pub fn with_workers<T: Send>(op: impl FnOnce() -> T + Send) -> Result<T> {
    match workers_from_env() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(op))
        }
        None => Ok(op()),
    }
}

/// Every arm at every feasible label fraction. Replications run in parallel
/// and are reduced in replication order, so the summary is bit-identical for
/// any worker count.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let arm_list = arms(cfg);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut failure_examples = Vec::new();
    for (cell, &f) in cfg.f_grid.iter().enumerate() {
        if let Some(reason) = cfg.cell_problem(f) {
            skipped.push(SkippedCell { f, reason });
            continue;
        }
        let reps: Vec<Result<Vec<std::result::Result<ArmOutcome, String>>>> = with_workers(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|rep| run_replication(cfg, f, replication_seed(cfg.seed, cell, rep)))
                .collect()
        })?;
        let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
        let theta0 = true_mean(cfg.d);

        let mut cell_rows: Vec<SummaryRow> = Vec::with_capacity(arm_list.len());
        for (a, arm) in arm_list.iter().enumerate() {
            let mut ok: Vec<&ArmOutcome> = Vec::new();
            let mut failures = 0;
            for rep in &reps {
                match &rep[a] {
                    Ok(o) => ok.push(o),
                    Err(e) => {
                        if failures == 0 {
                            failure_examples.push(format!(
                                "{} {} {} f={}: {e}",
                                arm.method,
                                arm.learner.as_deref().unwrap_or("-"),
                                arm.generator.map(|g| g.to_string()).unwrap_or_else(|| "-".into()),
                                fmt_num(f)
                            ));
                        }
                        failures += 1;
                    }
                }
            }
            let count = ok.len() as f64;
            let covered = ok.iter().filter(|o| o.ci_lower <= theta0 && theta0 <= o.ci_upper).count();
            let thetas: Vec<f64> = ok.iter().map(|o| o.theta_hat).collect();
            cell_rows.push(SummaryRow {
                method: arm.method,
                learner: arm.learner.clone(),
                generator: arm.generator,
                f,
                coverage: covered as f64 / count,
                width_ratio: f64::NAN,
                mean_width: ok.iter().map(|o| o.ci_upper - o.ci_lower).sum::<f64>() / count,
                mean_bias: thetas.iter().map(|t| t - theta0).sum::<f64>() / count,
                estimate_variance: crate::estimators::sample_variance(&thetas),
                replications: ok.len(),
                failures,
            });
        }
        // the classical arm is always first
        let classical_width = cell_rows[0].mean_width;
        for r in &mut cell_rows {
            r.width_ratio = r.mean_width / classical_width;
        }
        rows.extend(cell_rows);
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "no feasible cell in f_grid: {}",
            skipped.iter().map(|c| c.reason.clone()).collect::<Vec<_>>().join("; ")
        )));
    }
    Ok(SimulationSummary {
        rows,
        skipped,
        failure_examples,
    })
}

/// Brute-force mean and variance of `m₀(X)` over `samples` draws; the
/// reference for [`true_mean`] and for efficiency-bound checks.
pub fn population_moments(d: usize, rho: f64, samples: usize, seed: u64) -> (f64, f64) {
    let d_eff = d.min(ACTIVE_COVARIATES);
    let chunks = 64usize;
    let per = samples.div_ceil(chunks);
    // per-chunk shifted sums, combined in chunk order
    let parts: Vec<(usize, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ c as u64));
            let count = per.min(samples.saturating_sub(c * per));
            let mut row = vec![0.0; d_eff];
            let (mut s1, mut s2) = (0.0, 0.0);
            let shift = true_mean(d);
            for _ in 0..count {
                draw_covariates(&mut rng, d_eff, rho, &mut row);
                let v = true_regression(&row) - shift;
                s1 += v;
                s2 += v * v;
            }
            (count, s1, s2)
        })
        .collect();
    let total: usize = parts.iter().map(|p| p.0).sum();
    let s1: f64 = parts.iter().map(|p| p.1).sum();
    let s2: f64 = parts.iter().map(|p| p.2).sum();
    let t = total as f64;
    let mean_shifted = s1 / t;
    let var = (s2 - t * mean_shifted * mean_shifted) / (t - 1.0);
    (true_mean(d) + mean_shifted, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Cholesky;

    fn small_config() -> SimulationConfig {
        SimulationConfig {
            population: 120,
            f_grid: vec![0.25],
            d: 6,
            rho: 0.0,
            sigma_y: 1.0,
            replications: 4,
            folds: 3,
            learners: vec![LearnerSpec::knn()],
            generators: vec![Generator::Quadratic, Generator::KullbackLeibler],
            alpha: 0.05,
            seed: 7,
        }
    }

    #[test]
    fn regression_examples() {
        assert_eq!(true_regression(&[0.0; 10]), 2.0);
        let mut x = [0.0; 10];
        x[1] = 1.0;
        assert_eq!(true_regression(&x), 3.0);
        let mut y = x;
        for v in &mut y[5..] {
            *v = 17.3;
        }
        assert_eq!(true_regression(&y), 3.0);
        assert_eq!(true_regression(&[0.0, 0.0]), 1.0);
        assert!((true_mean(10) - 3.7552519304).abs() < 1e-9);
        assert_eq!(true_mean(2), 0.5f64.exp() + 1.0);
    }

    #[test]
    fn population_oracle_agrees_with_closed_form() {
        let (mean, var) = population_moments(10, 0.0, 2_000_000, 1);
        let e = std::f64::consts::E;
        let closed_var = (e * e - e) + 2.0 + 1.0 + 0.25 + ((1.0 + (-2.0f64).exp()) / 2.0 - (-1.0f64).exp());
        assert!((mean - true_mean(10)).abs() < 0.01, "{mean}");
        assert!((var - closed_var).abs() / closed_var < 0.02, "{var} vs {closed_var}");
        // correlated covariates keep standard normal marginals, so the mean holds
        let (mean_rho, _) = population_moments(10, 0.6, 2_000_000, 2);
        assert!((mean_rho - true_mean(10)).abs() < 0.01, "{mean_rho}");
    }

    #[test]
    fn recursion_matches_cholesky_factor() {
        let (d, rho) = (6, 0.7f64);
        let sigma = DMatrix::from_fn(d, d, |i, j| rho.powi((i as i32 - j as i32).abs()));
        let l = Cholesky::new(sigma).unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rec = vec![0.0; d];
        draw_covariates(&mut rng, d, rho, &mut rec);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let chol = l * z;
        for k in 0..d {
            assert!((rec[k] - chol[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn ar1_sample_covariance() {
        let (d, rho, m) = (5, 0.5f64, 100_000);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut row = vec![0.0; d];
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for _ in 0..m {
            draw_covariates(&mut rng, d, rho, &mut row);
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += row[i] * row[j];
                }
            }
        }
        cov /= m as f64;
        for i in 0..d {
            for j in 0..d {
                let target = rho.powi((i as i32 - j as i32).abs());
                assert!((cov[(i, j)] - target).abs() < 0.02, "({i},{j}) {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn noiseless_outcomes_equal_regression() {
        let mut cfg = small_config();
        cfg.sigma_y = 0.0;
        let (data, truth) = draw_dataset(&cfg, 0.25, 5).unwrap();
        assert_eq!(data.n(), 30);
        assert_eq!(data.labeled_y(), &truth.m0_labeled);
        let oracle = ppi_oracle(&data, &truth.m0_labeled, &truth.m0_unlabeled, 0.05).unwrap();
        let all: Vec<f64> = truth.m0_labeled.iter().chain(truth.m0_unlabeled.iter()).copied().collect();
        let expected_se = (crate::estimators::sample_variance(&all) / 120.0).sqrt();
        assert!((oracle.se - expected_se).abs() < 1e-14);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(replication_seed(1, 2, 3), replication_seed(1, 2, 3));
        let mut seen = std::collections::HashSet::new();
        for cell in 0..5 {
            for rep in 0..200 {
                assert!(seen.insert(replication_seed(42, cell, rep)));
            }
        }
    }

    #[test]
    fn summary_is_deterministic_and_complete() {
        let cfg = small_config();
        let a = run_monte_carlo(&cfg).unwrap();
        let b = run_monte_carlo(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        // classical, oracle, ppi, cfppi, two mec arms
        assert_eq!(a.rows.len(), 6);
        let classical = a.row(Method::Classical, None, None, 0.25).unwrap();
        assert_eq!(classical.width_ratio, 1.0);
        for r in &a.rows {
            assert_eq!(r.replications + r.failures, 4);
            assert!((0.0..=1.0).contains(&r.coverage));
        }
        assert!(a.table().contains("mec"));
    }

    #[test]
    fn single_replication_oracle() {
        let mut cfg = small_config();
        cfg.replications = 1;
        cfg.sigma_y = 0.0;
        let s = run_monte_carlo(&cfg).unwrap();
        let o = s.row(Method::Oracle, None, None, 0.25).unwrap();
        assert!(o.coverage == 0.0 || o.coverage == 1.0);
    }

    #[test]
    fn infeasible_cells() {
        let mut cfg = small_config();
        cfg.f_grid = vec![0.01, 0.25];
        let s = run_monte_carlo(&cfg).unwrap();
        assert_eq!(s.skipped.len(), 1);
        cfg.f_grid = vec![0.01];
        assert!(run_monte_carlo(&cfg).is_err());
        cfg.f_grid.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn boundary_cell_with_n_equal_k() {
        let mut cfg = small_config();
        cfg.population = 40;
        cfg.f_grid = vec![0.075];
        let s = run_monte_carlo(&cfg).unwrap();
        assert_eq!(s.rows[0].f, 0.075);
        assert_eq!(cfg.labeled_size(0.075), 3);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SimulationConfig::main_experiment();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"N\":1000") && text.contains("\"R\":2000"));
        let back: SimulationConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.f_grid.len(), 9);
        let minimal: SimulationConfig =
            serde_json::from_str(r#"{"N":100,"f_grid":[0.2],"d":3,"sigma_y":1,"R":2,"seed":1}"#).unwrap();
        assert_eq!(minimal.folds, 5);
        assert_eq!(minimal.learners.len(), 2);
        assert!(serde_json::from_str::<SimulationConfig>(r#"{"N":100,"bogus":1}"#).is_err());
    }
}
