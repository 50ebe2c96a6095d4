//! Calibration weights as a Bregman projection, solved in the dual.
//!
//! The primal problem minimises `Σ_j D_G(ω_j‖d_j)` subject to `Zᵀω = μ`.
//! Stationarity gives `ω_j(λ) = g⁻¹(g(d_j) + z_jᵀλ)`, and the multipliers
//! minimise the convex dual `ℓ(λ) = Σ_j F(g(d_j) + z_jᵀλ) − λᵀμ` whose
//! gradient is the constraint residual `Zᵀω(λ) − μ` and whose Hessian is
//! `Zᵀ diag(1/g'(ω(λ))) Z`. We run damped Newton on `ℓ` from `λ = 0`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::bregman::Generator;
use crate::error::{Error, Result};
use crate::io::fmt_num;

/// Dual points must keep every `ν_j` this far inside `g(domain)`.
pub const DUAL_MARGIN: f64 = 1e-12;
/// Maximum number of step halvings in the line search.
pub const MAX_HALVINGS: usize = 60;
/// Columns whose Gram–Schmidt remainder falls below this multiple of `‖Z‖_F`
/// are treated as collinear with earlier columns.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CalibrationProblem {
    basis: DMatrix<f64>,
    totals: DVector<f64>,
    baseline: DVector<f64>,
    generator: Generator,
    // g(d_j), cached
    anchor: DVector<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    /// Record one [`TraceRow`] per iteration.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-10,
            max_iter: 100,
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual_norm: f64,
    /// Primal objective `D_G(ω‖d)` at the current iterate.
    pub objective: f64,
    pub dual_objective: f64,
    /// Step length accepted to reach this iterate (1 for the starting point).
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationSolution {
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub iterations: usize,
    /// `‖Zᵀω − μ‖₂` over every column of the original basis.
    pub residual_norm: f64,
    /// `D_G(ω‖d)`.
    pub objective: f64,
    pub converged: bool,
    /// Basis columns removed as collinear before solving; their multipliers are 0.
    pub dropped_columns: Vec<usize>,
    /// Count of negative weights (only possible with the quadratic generator).
    pub negative_weights: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl CalibrationSolution {
    pub fn min_weight(&self) -> f64 {
        self.omega.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.omega.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl CalibrationProblem {
    /// `basis` is `n × p` with rows `z_j`, `totals` is `μ`, `baseline` is `d`.
    pub fn new(
        basis: DMatrix<f64>,
        totals: DVector<f64>,
        baseline: DVector<f64>,
        generator: Generator,
    ) -> Result<Self> {
        let (n, p) = basis.shape();
        if p == 0 || n < p {
            return Err(Error::invalid(format!(
                "calibration basis must satisfy n >= p >= 1, got n = {n}, p = {p}"
            )));
        }
        if totals.len() != p {
            return Err(Error::invalid(format!(
                "expected {p} population totals, got {}",
                totals.len()
            )));
        }
        if baseline.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} baseline weights, got {}",
                baseline.len()
            )));
        }
        if basis.iter().chain(totals.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("basis and totals must be finite"));
        }
        if let Some(&bad) = baseline
            .iter()
            .find(|&&d| !(d > 0.0 && generator.in_domain(d)))
        {
            return Err(Error::invalid(format!(
                "baseline weight {bad} must be positive and inside the {generator} domain"
            )));
        }
        let anchor = baseline.map(|d| generator.derivative_unchecked(d));
        Ok(CalibrationProblem {
            basis,
            totals,
            baseline,
            generator,
            anchor,
        })
    }

    /// Constant baseline `d_j = population / n`.
    pub fn with_uniform_baseline(
        basis: DMatrix<f64>,
        totals: DVector<f64>,
        population: f64,
        generator: Generator,
    ) -> Result<Self> {
        let n = basis.nrows();
        if n == 0 {
            return Err(Error::invalid("calibration basis has no rows"));
        }
        let d = DVector::from_element(n, population / n as f64);
        Self::new(basis, totals, d, generator)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn totals(&self) -> &DVector<f64> {
        &self.totals
    }

    pub fn baseline(&self) -> &DVector<f64> {
        &self.baseline
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn p(&self) -> usize {
        self.basis.ncols()
    }

    fn check_lambda(&self, lambda: &DVector<f64>) -> Result<()> {
        if lambda.len() != self.p() {
            return Err(Error::invalid(format!(
                "multiplier has length {}, expected {}",
                lambda.len(),
                self.p()
            )));
        }
        Ok(())
    }

    /// `ν = g(d) + Zλ`, rejecting points outside the dual image.
    fn dual_point(&self, lambda: &DVector<f64>, margin: f64) -> Result<DVector<f64>> {
        let nu = &self.anchor + &self.basis * lambda;
        if let Some(&bad) = nu
            .iter()
            .find(|&&v| !self.generator.in_dual_image(v, margin))
        {
            return Err(Error::Domain {
                generator: self.generator.to_string(),
                what: "nu",
                value: bad,
            });
        }
        Ok(nu)
    }

    /// Weights `ω(λ)` from the stationarity map.
    pub fn weights(&self, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_lambda(lambda)?;
        let nu = self.dual_point(lambda, 0.0)?;
        Ok(nu.map(|v| self.generator.derivative_inverse_unchecked(v)))
    }

    /// `ℓ(λ) = Σ_j F(ν_j) − λᵀμ`.
    pub fn dual_objective(&self, lambda: &DVector<f64>) -> Result<f64> {
        self.check_lambda(lambda)?;
        let nu = self.dual_point(lambda, 0.0)?;
        Ok(self.objective_at(&nu, lambda))
    }

    fn objective_at(&self, nu: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        let conj: f64 = nu.iter().map(|&v| self.generator.conjugate_unchecked(v)).sum();
        conj - lambda.dot(&self.totals)
    }

    /// `∇ℓ(λ) = Zᵀω(λ) − μ`.
    pub fn dual_gradient(&self, lambda: &DVector<f64>) -> Result<DVector<f64>> {
        let omega = self.weights(lambda)?;
        Ok(self.residual(&omega))
    }

    fn residual(&self, omega: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(omega) - &self.totals
    }

    /// `∇²ℓ(λ) = Zᵀ diag(1/g'(ω(λ))) Z`.
    pub fn dual_hessian(&self, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        let omega = self.weights(lambda)?;
        Ok(self.hessian_at(&omega))
    }

    fn hessian_at(&self, omega: &DVector<f64>) -> DMatrix<f64> {
        let p = self.p();
        let mut h = DMatrix::zeros(p, p);
        for (j, &w) in omega.iter().enumerate() {
            let q = 1.0 / self.generator.curvature_unchecked(w);
            for a in 0..p {
                let za = q * self.basis[(j, a)];
                for b in 0..=a {
                    h[(a, b)] += za * self.basis[(j, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        h
    }

    /// Column subset of the basis with the given indices.
    fn restrict(&self, keep: &[usize]) -> CalibrationProblem {
        let basis = self.basis.select_columns(keep);
        let totals = DVector::from_iterator(keep.len(), keep.iter().map(|&c| self.totals[c]));
        CalibrationProblem {
            basis,
            totals,
            baseline: self.baseline.clone(),
            generator: self.generator,
            anchor: self.anchor.clone(),
        }
    }

    /// Stopping threshold on `‖Zᵀω − μ‖₂`.
    pub fn threshold(&self, tolerance: f64) -> f64 {
        tolerance * self.totals.norm().max(1.0)
    }

    /// Damped Newton on the dual, starting at `λ = 0`.
    ///
    /// Converged once `‖Zᵀω − μ‖₂` is within [`threshold`](Self::threshold).
    /// Non-quadratic generators then take one further Newton step, so the
    /// returned weights do not depend on which iteration first met the
    /// tolerance (and hence not on how the basis is parameterised).
    ///
    /// Collinear basis columns are dropped first (keeping the earliest column of
    /// each collinear group); the dropped constraints must then hold
    /// automatically or the problem is reported infeasible.
    pub fn solve(&self, opts: &SolveOptions) -> Result<CalibrationSolution> {
        let keep = independent_columns(&self.basis)?;
        let dropped: Vec<usize> = (0..self.p()).filter(|c| !keep.contains(c)).collect();
        let reduced;
        let work = if dropped.is_empty() {
            self
        } else {
            reduced = self.restrict(&keep);
            &reduced
        };

        let threshold = work.threshold(opts.tolerance);
        let mut lambda = DVector::zeros(work.p());
        let nu = work.anchor.clone();
        let mut omega = self.baseline.clone();
        let mut grad = work.residual(&omega);
        let mut obj = work.objective_at(&nu, &lambda);
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut step = 1.0;
        let mut converged = false;
        let mut polishing = false;

        loop {
            let res = grad.norm();
            if opts.trace {
                trace.push(TraceRow {
                    iteration: iterations,
                    residual_norm: res,
                    objective: self.divergence_of(&omega),
                    dual_objective: obj,
                    step,
                });
            }
            if polishing {
                break;
            }
            if res <= threshold {
                converged = true;
                // The quadratic Newton step is exact; otherwise one more step
                // takes the residual from the tolerance down to roundoff.
                if self.generator.is_quadratic() || iterations >= opts.max_iter {
                    break;
                }
                polishing = true;
            } else if iterations >= opts.max_iter {
                break;
            }

            let hess = work.hessian_at(&omega);
            let direction = match newton_direction(hess, &grad) {
                Ok(dir) => dir,
                Err(_) if polishing => break,
                Err(reason) => {
                    return Err(Error::SolverFailure {
                        iteration: iterations,
                        reason,
                    })
                }
            };

            let slack = 1e-12 * (1.0 + obj.abs());
            let mut eta = 1.0;
            let mut accepted = None;
            let mut saw_feasible = false;
            for _ in 0..=MAX_HALVINGS {
                let cand = &lambda + &direction * eta;
                if let Ok(cand_nu) = work.dual_point(&cand, DUAL_MARGIN) {
                    saw_feasible = true;
                    let cand_obj = work.objective_at(&cand_nu, &cand);
                    if cand_obj <= obj + slack {
                        accepted = Some((cand, cand_nu, cand_obj));
                        break;
                    }
                }
                eta *= 0.5;
            }
            let Some((cand, cand_nu, cand_obj)) = accepted else {
                if polishing {
                    break;
                }
                return Err(if saw_feasible {
                    Error::SolverFailure {
                        iteration: iterations,
                        reason: "line search found no non-increasing step".into(),
                    }
                } else {
                    Error::Infeasible {
                        iteration: iterations,
                        residual_norm: res,
                        reason: format!(
                            "every backtracked step leaves the {} dual domain",
                            self.generator
                        ),
                    }
                });
            };
            let cand_omega = cand_nu.map(|v| self.generator.derivative_inverse_unchecked(v));
            let cand_grad = work.residual(&cand_omega);
            if polishing && cand_grad.norm() > res {
                break;
            }
            lambda = cand;
            obj = cand_obj;
            omega = cand_omega;
            grad = cand_grad;
            step = eta;
            iterations += 1;
        }

        let full_residual = self.residual(&omega).norm();
        if converged && !dropped.is_empty() && full_residual > self.threshold(opts.tolerance) {
            return Err(Error::Infeasible {
                iteration: iterations,
                residual_norm: full_residual,
                reason: format!("collinear basis columns {dropped:?} carry inconsistent totals"),
            });
        }

        let mut full_lambda = vec![0.0; self.p()];
        for (k, &c) in keep.iter().enumerate() {
            full_lambda[c] = lambda[k];
        }
        let negative_weights = omega.iter().filter(|&&w| w < 0.0).count();
        Ok(CalibrationSolution {
            lambda: full_lambda,
            objective: self.divergence_of(&omega),
            omega: omega.as_slice().to_vec(),
            iterations,
            residual_norm: full_residual,
            converged,
            dropped_columns: dropped,
            negative_weights,
            trace,
        })
    }

    fn divergence_of(&self, omega: &DVector<f64>) -> f64 {
        omega
            .iter()
            .zip(self.baseline.iter())
            .map(|(&w, &d)| self.generator.divergence_unchecked(w, d))
            .sum()
    }
}

/// Solve `H Δ = −∇` by Cholesky, adding ridge jitter `c·tr(H)/p` with
/// `c = 1e-12, 1e-11, …, 1e-4` if the plain factorisation fails.
fn newton_direction(
    hess: DMatrix<f64>,
    grad: &DVector<f64>,
) -> std::result::Result<DVector<f64>, String> {
    if hess.iter().any(|v| !v.is_finite()) {
        return Err("Hessian has non-finite entries".into());
    }
    let p = hess.nrows();
    if let Some(chol) = Cholesky::new(hess.clone()) {
        return Ok(-chol.solve(grad));
    }
    let scale = hess.trace() / p as f64;
    if scale.is_nan() || scale <= 0.0 {
        return Err("Hessian has non-positive trace".into());
    }
    let mut c = 1e-12;
    while c <= 1e-4 * (1.0 + 1e-9) {
        let mut h = hess.clone();
        for i in 0..p {
            h[(i, i)] += c * scale;
        }
        if let Some(chol) = Cholesky::new(h) {
            return Ok(-chol.solve(grad));
        }
        c *= 10.0;
    }
    Err("Hessian is not positive definite after ridge repair".into())
}

/// Indices of a maximal set of linearly independent columns, scanned left to
/// right by Gram–Schmidt.
pub fn independent_columns(z: &DMatrix<f64>) -> Result<Vec<usize>> {
    let tol = RANK_TOLERANCE * z.norm();
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for c in 0..z.ncols() {
        let mut v = z.column(c).into_owned();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &ortho {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > tol {
            ortho.push(v / norm);
            keep.push(c);
        }
    }
    if keep.is_empty() {
        return Err(Error::invalid("calibration basis is identically zero"));
    }
    Ok(keep)
}

/// Per-iteration trace as CSV with header `iteration,residual_norm,objective`.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "residual_norm", "objective"])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            fmt_num(r.residual_norm),
            fmt_num(r.objective),
        ])?;
    }
    w.flush()?;
    Ok(())
}
