//! L1-penalized generalized linear models.
//!
//! Gaussian (identity link) problems are solved by cyclic coordinate descent
//! with soft-thresholding, minimizing
//!
//! ```text
//! (1/2n) * sum_i (y_i - b0 - x_i . b)^2 + lambda * sum_j |b_j|
//! ```
//!
//! Poisson (exponential link) problems are solved by proximal gradient with a
//! backtracking line search on the penalized negative log-likelihood
//!
//! ```text
//! (1/n) * sum_i (exp(eta_i) - y_i * eta_i) + lambda * sum_j |b_j|,  eta_i = b0 + x_i . b
//! ```
//!
//! The intercept is never penalized. The penalty applies to coefficients of
//! the centered (and, when requested, unit-variance) design; results are
//! always reported back on the original column scale.

use thiserror::Error;

use crate::stats;
use crate::types::{LinkFamily, POISSON_MEAN_FLOOR};

/// Linear predictor guard for the exponential link.
pub const ETA_MAX: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("design has no usable rows")]
    EmptyDesign,
    #[error("design or response contains NaN or infinite values")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Poisson response must be non-negative")]
    NegativeResponse,
    #[error("invalid penalty: {0}")]
    InvalidLambda(String),
    #[error("solver diverged: {0}")]
    Diverged(String),
}

/// Solver knobs. Defaults depend on the family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// First trial step of the proximal-gradient line search.
    pub initial_step: f64,
    /// Step multiplier applied on each backtracking rejection.
    pub shrink: f64,
    /// Poisson intercepts are clamped at `ln(mean_floor)`.
    pub mean_floor: f64,
}

impl SolverOptions {
    pub fn gaussian() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 10_000,
            initial_step: 1.0,
            shrink: 0.5,
            mean_floor: POISSON_MEAN_FLOOR,
        }
    }

    pub fn poisson() -> Self {
        Self {
            tol: 1e-6,
            ..Self::gaussian()
        }
    }

    pub fn for_family(family: LinkFamily) -> Self {
        match family {
            LinkFamily::GaussianIdentity => Self::gaussian(),
            LinkFamily::PoissonExp => Self::poisson(),
        }
    }
}

/// Complete-case regression data: candidate parent columns first, then
/// covariates.
///
/// Columns are stored centered and, if `standardize` is set, scaled to unit
/// population standard deviation. Constant columns are kept as zeros and
/// excluded from fitting.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
    column_means: Vec<f64>,
    column_scales: Vec<f64>,
    active: Vec<bool>,
    response_mean: f64,
    n_parent_columns: usize,
}

impl DesignMatrix {
    /// Builds a design from column-major predictors.
    pub fn new(
        columns: Vec<Vec<f64>>,
        response: Vec<f64>,
        n_parent_columns: usize,
        standardize: bool,
    ) -> Result<Self, FitError> {
        let n = response.len();
        if n == 0 {
            return Err(FitError::EmptyDesign);
        }
        if n_parent_columns > columns.len() {
            return Err(FitError::DimensionMismatch(format!(
                "{n_parent_columns} parent columns but only {} columns",
                columns.len()
            )));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(FitError::DimensionMismatch(format!(
                "column of length {} for {n} rows",
                c.len()
            )));
        }
        if response.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }

        let response_mean = stats::mean(response.iter().copied()).unwrap_or(0.0);
        let mut column_means = Vec::with_capacity(columns.len());
        let mut column_scales = Vec::with_capacity(columns.len());
        let mut active = Vec::with_capacity(columns.len());
        let mut stored = Vec::with_capacity(columns.len());
        for col in columns {
            let mean = stats::mean(col.iter().copied()).unwrap_or(0.0);
            let centered: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let sd = (stats::sum(centered.iter().map(|v| v * v)) / n as f64).sqrt();
            let constant = sd <= 1e-10 * mean.abs().max(1.0);
            let scale = if standardize && !constant { sd } else { 1.0 };
            let values = if constant {
                vec![0.0; n]
            } else {
                centered.iter().map(|v| v / scale).collect()
            };
            column_means.push(mean);
            column_scales.push(scale);
            active.push(!constant);
            stored.push(values);
        }

        Ok(Self {
            columns: stored,
            response,
            column_means,
            column_scales,
            active,
            response_mean,
            n_parent_columns,
        })
    }

    /// Builds a design from row-major predictors.
    pub fn from_rows(
        rows: &[Vec<f64>],
        response: Vec<f64>,
        n_parent_columns: usize,
        standardize: bool,
    ) -> Result<Self, FitError> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(FitError::DimensionMismatch("ragged rows".into()));
        }
        if rows.len() != response.len() {
            return Err(FitError::DimensionMismatch(format!(
                "{} rows but {} responses",
                rows.len(),
                response.len()
            )));
        }
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(columns, response, n_parent_columns, standardize)
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_parent_columns(&self) -> usize {
        self.n_parent_columns
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn response_mean(&self) -> f64 {
        self.response_mean
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    /// Divisor applied to each centered column (1 when not standardizing).
    pub fn column_scales(&self) -> &[f64] {
        &self.column_scales
    }

    /// Stored (centered, possibly scaled) column.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    /// `false` for constant columns, which never enter the model.
    pub fn is_active(&self, j: usize) -> bool {
        self.active[j]
    }

    fn inv_n(&self) -> f64 {
        1.0 / self.n_rows() as f64
    }

    /// Smallest penalty at which every coefficient is zero:
    /// `max_j |(1/n) x_j . (y - mean(y))|` over the stored columns.
    ///
    /// The same value bounds the Poisson gradient at the null model.
    pub fn lambda_max(&self) -> f64 {
        let centered: Vec<f64> = self.response.iter().map(|y| y - self.response_mean).collect();
        (0..self.n_columns())
            .filter(|&j| self.active[j])
            .map(|j| (dot(&self.columns[j], &centered) * self.inv_n()).abs())
            .fold(0.0, f64::max)
    }

    fn linear_part(&self, coeffs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &b) in coeffs.iter().enumerate() {
            if b != 0.0 {
                for (o, x) in out.iter_mut().zip(&self.columns[j]) {
                    *o += b * x;
                }
            }
        }
    }

    /// Maps stored-scale coefficients and intercept to the original scale.
    fn to_original(&self, scaled: &[f64], scaled_intercept: f64) -> (Vec<f64>, f64) {
        let coeffs: Vec<f64> = scaled.iter().zip(&self.column_scales).map(|(b, s)| b / s).collect();
        let shift = stats::sum(
            coeffs
                .iter()
                .zip(&self.column_means)
                .filter(|(c, _)| **c != 0.0)
                .map(|(c, m)| c * m),
        );
        (coeffs, scaled_intercept - shift)
    }

    /// Maps original-scale coefficients to the stored scale (for warm starts).
    pub fn to_scaled(&self, coeffs: &[f64]) -> Vec<f64> {
        coeffs
            .iter()
            .zip(&self.column_scales)
            .enumerate()
            .map(|(j, (c, s))| if self.active[j] { c * s } else { 0.0 })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn soft_threshold(x: f64, threshold: f64) -> f64 {
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Coefficients on the original column scale.
    pub coeffs: Vec<f64>,
    pub intercept: f64,
    /// Coefficients on the stored (centered/standardized) scale, the scale
    /// the penalty acts on.
    pub scaled_coeffs: Vec<f64>,
    pub lambda: f64,
    pub n_nonzero: usize,
    /// Nonzero coefficients among the parent columns only.
    pub n_parents_nonzero: usize,
    pub objective: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// Penalized objective after every sweep / accepted step.
    pub trace: Vec<f64>,
}

impl FitResult {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        design: &DesignMatrix,
        lambda: f64,
        scaled: Vec<f64>,
        scaled_intercept: f64,
        objective: f64,
        converged: bool,
        n_iter: usize,
        trace: Vec<f64>,
    ) -> Self {
        let (coeffs, intercept) = design.to_original(&scaled, scaled_intercept);
        let n_nonzero = coeffs.iter().filter(|c| c.abs() > 0.0).count();
        let n_parents_nonzero = coeffs[..design.n_parent_columns]
            .iter()
            .filter(|c| c.abs() > 0.0)
            .count();
        Self {
            coeffs,
            intercept,
            scaled_coeffs: scaled,
            lambda,
            n_nonzero,
            n_parents_nonzero,
            objective,
            converged,
            n_iter,
            trace,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<(), FitError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(FitError::InvalidLambda(format!(
            "{lambda} is not a finite non-negative value"
        )))
    }
}

fn check_start(design: &DesignMatrix, start: Option<&[f64]>) -> Result<Vec<f64>, FitError> {
    match start {
        None => Ok(vec![0.0; design.n_columns()]),
        Some(s) if s.len() != design.n_columns() => Err(FitError::DimensionMismatch(format!(
            "start has {} entries for {} columns",
            s.len(),
            design.n_columns()
        ))),
        Some(s) if s.iter().any(|v| !v.is_finite()) => Err(FitError::NonFinite),
        Some(s) => Ok(s
            .iter()
            .enumerate()
            .map(|(j, v)| if design.active[j] { *v } else { 0.0 })
            .collect()),
    }
}

fn l1(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c.abs()).sum()
}

/// Gaussian lasso by cyclic coordinate descent from the null model.
pub fn fit_gaussian_lasso(design: &DesignMatrix, lambda: f64, opts: &SolverOptions) -> Result<FitResult, FitError> {
    fit_gaussian_lasso_from(design, lambda, opts, None)
}

/// Gaussian lasso starting from `start` (stored-scale coefficients).
///
/// Stops once the KKT conditions hold within `opts.tol`: for active `j`,
/// `|g_j + lambda * sign(b_j)| <= tol`; for inactive `j`, `|g_j| <= lambda + tol`,
/// with `g_j = -(1/n) x_j . r`.
pub fn fit_gaussian_lasso_from(
    design: &DesignMatrix,
    lambda: f64,
    opts: &SolverOptions,
    start: Option<&[f64]>,
) -> Result<FitResult, FitError> {
    check_lambda(lambda)?;
    let mut coeffs = check_start(design, start)?;
    let n = design.n_rows();
    let inv_n = design.inv_n();
    let ybar = design.response_mean;

    let mut fitted = vec![0.0; n];
    design.linear_part(&coeffs, &mut fitted);
    let mut resid: Vec<f64> = design
        .response
        .iter()
        .zip(&fitted)
        .map(|(y, f)| (y - ybar) - f)
        .collect();
    let curvature: Vec<f64> = design.columns.iter().map(|c| dot(c, c) * inv_n).collect();
    let active: Vec<usize> = (0..design.n_columns()).filter(|&j| design.active[j]).collect();

    let objective = |resid: &[f64], coeffs: &[f64]| 0.5 * inv_n * dot(resid, resid) + lambda * l1(coeffs);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut n_iter = 0;
    if active.is_empty() {
        converged = true;
    }
    while !converged && n_iter < opts.max_iter {
        n_iter += 1;
        for &j in &active {
            let x = &design.columns[j];
            let old = coeffs[j];
            let rho = dot(x, &resid) * inv_n + curvature[j] * old;
            let new = soft_threshold(rho, lambda) / curvature[j];
            if new != old {
                let delta = new - old;
                for (r, xi) in resid.iter_mut().zip(x) {
                    *r -= delta * xi;
                }
                coeffs[j] = new;
            }
        }
        trace.push(objective(&resid, &coeffs));

        converged = active.iter().all(|&j| {
            let grad = -dot(&design.columns[j], &resid) * inv_n;
            let b = coeffs[j];
            if b != 0.0 {
                (grad + lambda * b.signum()).abs() <= opts.tol
            } else {
                grad.abs() <= lambda + opts.tol
            }
        });
    }

    let obj = objective(&resid, &coeffs);
    Ok(FitResult::assemble(
        design, lambda, coeffs, ybar, obj, converged, n_iter, trace,
    ))
}

#[derive(Clone)]
struct PoissonEval {
    eta: Vec<f64>,
    mu: Vec<f64>,
    loss: f64,
}

fn poisson_eval(design: &DesignMatrix, coeffs: &[f64], intercept: f64) -> Option<PoissonEval> {
    let mut eta = vec![0.0; design.n_rows()];
    design.linear_part(coeffs, &mut eta);
    for e in eta.iter_mut() {
        *e += intercept;
    }
    if eta.iter().any(|e| !e.is_finite() || *e > ETA_MAX) {
        return None;
    }
    let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let loss = design.inv_n() * stats::sum(mu.iter().zip(&eta).zip(&design.response).map(|((m, e), y)| m - y * e));
    Some(PoissonEval { eta, mu, loss })
}

/// L1-penalized Poisson regression by proximal gradient from the null model.
pub fn fit_poisson_l1(design: &DesignMatrix, lambda: f64, opts: &SolverOptions) -> Result<FitResult, FitError> {
    fit_poisson_l1_from(design, lambda, opts, None)
}

/// L1-penalized Poisson regression starting from `start`.
///
/// Accelerated proximal gradient with backtracking and function-value
/// restart: a step is only accepted when it does not increase the penalized
/// objective, otherwise the momentum is reset. The intercept is initialized
/// at its optimum given the starting coefficients and is projected onto
/// `[ln(mean_floor), inf)` after every step, so an all-zero response
/// converges to the clamp instead of drifting to minus infinity. Stops once
/// the gradient mapping `(y - prox(y - t grad)) / t` has max-norm at most
/// `opts.tol`.
pub fn fit_poisson_l1_from(
    design: &DesignMatrix,
    lambda: f64,
    opts: &SolverOptions,
    start: Option<&[f64]>,
) -> Result<FitResult, FitError> {
    check_lambda(lambda)?;
    if design.response.iter().any(|y| *y < 0.0) {
        return Err(FitError::NegativeResponse);
    }
    let mut coeffs = check_start(design, start)?;
    let floor = opts.mean_floor.ln();
    let p = design.n_columns();
    let inv_n = design.inv_n();

    let total = stats::sum(design.response.iter().copied());
    let mut lin = vec![0.0; design.n_rows()];
    design.linear_part(&coeffs, &mut lin);
    if lin.iter().any(|e| *e > ETA_MAX) {
        return Err(FitError::Diverged(
            "starting point overflows the exponential link".into(),
        ));
    }
    let denom = stats::sum(lin.iter().map(|e| e.exp()));
    let mut intercept = if total > 0.0 {
        (total / denom).ln().max(floor)
    } else {
        floor
    };

    let mut current = poisson_eval(design, &coeffs, intercept)
        .ok_or_else(|| FitError::Diverged("linear predictor overflow at start".into()))?;
    let penalized = |loss: f64, c: &[f64]| loss + lambda * l1(c);
    let mut obj = penalized(current.loss, &coeffs);

    // Extrapolated point and momentum.
    let mut y_coeffs = coeffs.clone();
    let mut y_intercept = intercept;
    let mut y_eval = current.clone();
    let mut theta = 1.0f64;

    let mut step = opts.initial_step;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut n_iter = 0;
    let mut grad = vec![0.0; p];

    while n_iter < opts.max_iter {
        n_iter += 1;
        let diff: Vec<f64> = y_eval.mu.iter().zip(&design.response).map(|(m, y)| m - y).collect();
        for (j, g) in grad.iter_mut().enumerate() {
            *g = if design.active[j] {
                dot(&design.columns[j], &diff) * inv_n
            } else {
                0.0
            };
        }
        let grad0 = stats::sum(diff.iter().copied()) * inv_n;

        let mut t = (step / opts.shrink).min(opts.initial_step);
        let (cand, cand0, cand_eval) = loop {
            let cand: Vec<f64> = (0..p)
                .map(|j| {
                    if design.active[j] {
                        soft_threshold(y_coeffs[j] - t * grad[j], t * lambda)
                    } else {
                        0.0
                    }
                })
                .collect();
            let cand0 = (y_intercept - t * grad0).max(floor);
            if let Some(eval) = poisson_eval(design, &cand, cand0) {
                let d0 = cand0 - y_intercept;
                let dj: Vec<f64> = cand.iter().zip(&y_coeffs).map(|(a, b)| a - b).collect();
                let lin_term = grad0 * d0 + dot(&grad, &dj);
                let quad = (d0 * d0 + dot(&dj, &dj)) / (2.0 * t);
                if eval.loss <= y_eval.loss + lin_term + quad {
                    break (cand, cand0, eval);
                }
            }
            t *= opts.shrink;
            if t < 1e-30 {
                return Err(FitError::Diverged("line search step underflow".into()));
            }
        };
        step = t;

        let residual = cand
            .iter()
            .zip(&y_coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold((cand0 - y_intercept).abs(), f64::max)
            / t;
        let cand_obj = penalized(cand_eval.loss, &cand);
        if !cand_obj.is_finite() {
            return Err(FitError::Diverged("objective is not finite".into()));
        }

        if cand_obj <= obj {
            let next_theta = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / next_theta;
            y_coeffs = cand.iter().zip(&coeffs).map(|(c, x)| c + beta * (c - x)).collect();
            y_intercept = (cand0 + beta * (cand0 - intercept)).max(floor);
            coeffs = cand;
            intercept = cand0;
            current = cand_eval;
            obj = cand_obj;
            theta = next_theta;
            y_eval = if beta == 0.0 {
                current.clone()
            } else if let Some(e) = poisson_eval(design, &y_coeffs, y_intercept) {
                e
            } else {
                y_coeffs.clone_from(&coeffs);
                y_intercept = intercept;
                theta = 1.0;
                current.clone()
            };
            trace.push(obj);
            if residual <= opts.tol {
                converged = true;
                break;
            }
        } else {
            // Restart from the last accepted point without momentum. A
            // rejected step from that point itself is rounding noise, so the
            // next trial starts smaller.
            if y_coeffs == coeffs && y_intercept == intercept {
                step = t * opts.shrink * opts.shrink;
            }
            y_coeffs.clone_from(&coeffs);
            y_intercept = intercept;
            y_eval = current.clone();
            theta = 1.0;
            trace.push(obj);
        }
    }

    if current.eta.iter().any(|e| e.exp().is_infinite()) {
        return Err(FitError::Diverged("fitted means are not finite".into()));
    }
    Ok(FitResult::assemble(
        design, lambda, coeffs, intercept, obj, converged, n_iter, trace,
    ))
}

/// Fits one penalty for either family, optionally warm-started.
pub fn fit(
    design: &DesignMatrix,
    lambda: f64,
    family: LinkFamily,
    opts: &SolverOptions,
    start: Option<&[f64]>,
) -> Result<FitResult, FitError> {
    match family {
        LinkFamily::GaussianIdentity => fit_gaussian_lasso_from(design, lambda, opts, start),
        LinkFamily::PoissonExp => fit_poisson_l1_from(design, lambda, opts, start),
    }
}

/// Fits a strictly descending sequence of penalties, warm-starting each fit
/// from the previous solution.
pub fn fit_path(
    design: &DesignMatrix,
    lambdas: &[f64],
    family: LinkFamily,
    opts: &SolverOptions,
) -> Result<Vec<FitResult>, FitError> {
    for l in lambdas {
        check_lambda(*l)?;
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(FitError::InvalidLambda("path must be strictly descending".into()));
    }
    let mut out: Vec<FitResult> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let start = out.last().map(|r| r.scaled_coeffs.as_slice());
        out.push(fit(design, lambda, family, opts, start)?);
    }
    Ok(out)
}

/// Geometric grid from `lambda_max` down to `lambda_max * min_ratio`.
/// A zero `lambda_max` (nothing to select) yields the single penalty 0.
pub fn lambda_grid(lambda_max: f64, n_lambdas: usize, min_ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 || n_lambdas == 0 {
        return vec![0.0];
    }
    if n_lambdas == 1 {
        return vec![lambda_max];
    }
    let ratio = min_ratio.ln() / (n_lambdas - 1) as f64;
    let mut grid: Vec<f64> = (0..n_lambdas).map(|k| lambda_max * (ratio * k as f64).exp()).collect();
    grid[0] = lambda_max;
    grid.dedup_by(|b, a| *b >= *a);
    grid
}

/// Picks the smallest-penalty fit with at most `max_parents` nonzero parent
/// coefficients, falling back to the largest-penalty (sparsest) fit.
pub fn select_by_max_parents(path: &[FitResult], max_parents: usize) -> Option<&FitResult> {
    path.iter()
        .filter(|r| r.n_parents_nonzero <= max_parents)
        .min_by(|a, b| a.lambda.total_cmp(&b.lambda))
        .or_else(|| path.iter().max_by(|a, b| a.lambda.total_cmp(&b.lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal.sample(rng)).collect()).collect();
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = (0..n)
            .map(|i| 1.5 + (0..p).map(|j| beta[j] * cols[j][i]).sum::<f64>() + 0.3 * normal.sample(rng))
            .collect();
        (cols, y)
    }

    #[test]
    fn zero_response_gives_zero_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (cols, _) = random_design(&mut rng, 20, 3);
        let d = DesignMatrix::new(cols, vec![0.0; 20], 3, true).unwrap();
        let r = fit_gaussian_lasso(&d, 0.1, &SolverOptions::gaussian()).unwrap();
        assert!(r.coeffs.iter().all(|c| *c == 0.0));
        assert_eq!(r.intercept, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn lambda_max_gives_null_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (cols, y) = random_design(&mut rng, 40, 4);
        let ybar = y.iter().sum::<f64>() / 40.0;
        let d = DesignMatrix::new(cols, y, 4, true).unwrap();
        // Oracle: max_j |(1/n) x_j . (y - ybar)| on the standardized columns.
        let oracle = (0..4)
            .map(|j| {
                d.column(j)
                    .iter()
                    .zip(d.response())
                    .map(|(x, y)| x * (y - ybar))
                    .sum::<f64>()
                    .abs()
                    / 40.0
            })
            .fold(0.0, f64::max);
        assert!((d.lambda_max() - oracle).abs() < 1e-12);
        let r = fit_gaussian_lasso(&d, d.lambda_max(), &SolverOptions::gaussian()).unwrap();
        assert_eq!(r.n_nonzero, 0);
        assert!((r.intercept - ybar).abs() < 1e-12);
        let r = fit_gaussian_lasso(&d, d.lambda_max() * 0.99, &SolverOptions::gaussian()).unwrap();
        assert_eq!(r.n_nonzero, 1);
    }

    #[test]
    fn single_predictor_matches_closed_form() {
        let x = vec![-1.0, 0.5, 2.0, 3.5, -0.5];
        let y = vec![0.2, 1.1, 2.9, 4.8, 0.1];
        let n = 5.0;
        let d = DesignMatrix::new(vec![x.clone()], y.clone(), 1, true).unwrap();
        // Independent standardization and closed form.
        let xm = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / n).sqrt();
        let ym = y.iter().sum::<f64>() / n;
        let rho = x.iter().zip(&y).map(|(a, b)| (a - xm) / sd * (b - ym)).sum::<f64>() / n;
        for lambda in [0.0, 0.1, 0.5, rho.abs() * 0.9, rho.abs() * 1.1] {
            let r = fit_gaussian_lasso(&d, lambda, &SolverOptions::gaussian()).unwrap();
            let expected = soft_threshold(rho, lambda);
            assert!((r.scaled_coeffs[0] - expected).abs() < 1e-9, "lambda {lambda}");
            assert!((r.coeffs[0] - expected / sd).abs() < 1e-9);
            assert!((r.intercept - (ym - expected / sd * xm)).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_is_excluded() {
        let d = DesignMatrix::new(
            vec![vec![3.0; 6], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]],
            vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            2,
            true,
        )
        .unwrap();
        assert!(!d.is_active(0));
        let r = fit_gaussian_lasso(&d, 0.0, &SolverOptions::gaussian()).unwrap();
        assert_eq!(r.coeffs[0], 0.0);
        assert!((r.coeffs[1] - 2.0).abs() < 1e-6);
        assert!(r.intercept.abs() < 1e-6);
    }

    #[test]
    fn design_errors() {
        assert_eq!(
            DesignMatrix::new(vec![], vec![], 0, true).unwrap_err(),
            FitError::EmptyDesign
        );
        assert_eq!(
            DesignMatrix::new(vec![vec![1.0, f64::NAN]], vec![1.0, 2.0], 1, true).unwrap_err(),
            FitError::NonFinite
        );
        assert!(matches!(
            DesignMatrix::new(vec![vec![1.0]], vec![1.0, 2.0], 1, true),
            Err(FitError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn coordinate_descent_is_monotone_and_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut cols, y) = random_design(&mut rng, 50, 6);
        // Correlated columns slow coordinate descent down.
        let c0 = cols[0].clone();
        for (a, b) in cols[1].iter_mut().zip(&c0) {
            *a = 0.9 * b + 0.1 * *a;
        }
        let d = DesignMatrix::new(cols, y, 6, true).unwrap();
        let r = fit_gaussian_lasso(&d, 0.05, &SolverOptions::gaussian()).unwrap();
        assert!(r.converged);
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn different_starts_reach_the_same_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (cols, y) = random_design(&mut rng, 60, 5);
        let d = DesignMatrix::new(cols, y, 5, true).unwrap();
        let opts = SolverOptions::gaussian();
        let a = fit_gaussian_lasso(&d, 0.2, &opts).unwrap();
        let b = fit_gaussian_lasso_from(&d, 0.2, &opts, Some(&[5.0, -5.0, 3.0, 1.0, -2.0])).unwrap();
        assert!((a.objective - b.objective).abs() <= 10.0 * opts.tol);
    }

    #[test]
    fn poisson_constant_response_is_null_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (cols, _) = random_design(&mut rng, 30, 3);
        let d = DesignMatrix::new(cols, vec![4.0; 30], 3, true).unwrap();
        let r = fit_poisson_l1(&d, 10.0, &SolverOptions::poisson()).unwrap();
        assert_eq!(r.n_nonzero, 0);
        assert!((r.intercept - 4.0f64.ln()).abs() < 1e-9);
        assert!(r.converged);
    }

    #[test]
    fn poisson_zero_response_clamps_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (cols, _) = random_design(&mut rng, 30, 2);
        let d = DesignMatrix::new(cols, vec![0.0; 30], 2, true).unwrap();
        // The unpenalized objective exp(b0) is strictly increasing in b0, so
        // its infimum is only approached as b0 -> -inf.
        let loss = |b0: f64| b0.exp();
        assert!(loss(-30.0) < loss(-20.0) && loss(-20.0) < loss(1e-8f64.ln()));
        let r = fit_poisson_l1(&d, 0.0, &SolverOptions::poisson()).unwrap();
        assert!((r.intercept - 1e-8f64.ln()).abs() < 1e-12);
        assert!(r.coeffs.iter().all(|c| c.abs() < 1e-12));
        assert!(r.converged);
    }

    #[test]
    fn poisson_recovers_generating_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 2000;
        let x1: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let x2: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                Poisson::new((1.0 + 0.5 * x1[i] - 0.3 * x2[i]).exp())
                    .unwrap()
                    .sample(&mut rng)
            })
            .collect();
        let d = DesignMatrix::new(vec![x1, x2], y, 2, false).unwrap();
        let r = fit_poisson_l1(&d, 0.0, &SolverOptions::poisson()).unwrap();
        assert!(r.converged);
        assert!((r.coeffs[0] - 0.5).abs() < 0.05, "{:?}", r.coeffs);
        assert!((r.coeffs[1] + 0.3).abs() < 0.05);
        assert!((r.intercept - 1.0).abs() < 0.05);
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn poisson_overflowing_start_diverges() {
        let d = DesignMatrix::new(vec![vec![-1.0, 1.0, 3.0]], vec![1.0, 2.0, 3.0], 1, false).unwrap();
        let err = fit_poisson_l1_from(&d, 0.0, &SolverOptions::poisson(), Some(&[1000.0])).unwrap_err();
        assert!(matches!(err, FitError::Diverged(_)));
    }

    #[test]
    fn path_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (cols, y) = random_design(&mut rng, 40, 4);
        let d = DesignMatrix::new(cols, y, 4, true).unwrap();
        let lm = d.lambda_max();
        let opts = SolverOptions::gaussian();
        let path = fit_path(&d, &[2.0 * lm, lm, lm / 2.0], LinkFamily::GaussianIdentity, &opts).unwrap();
        assert_eq!(path[0].n_nonzero, 0);
        assert_eq!(path[1].n_nonzero, 0);
        assert!(path[2].n_nonzero > 0);

        assert!(fit_path(&d, &[], LinkFamily::GaussianIdentity, &opts)
            .unwrap()
            .is_empty());
        assert!(fit_path(&d, &[0.1, 0.2], LinkFamily::GaussianIdentity, &opts).is_err());

        let single = fit_path(&d, &[0.1], LinkFamily::GaussianIdentity, &opts).unwrap();
        let direct = fit_gaussian_lasso(&d, 0.1, &opts).unwrap();
        for (a, b) in single[0].coeffs.iter().zip(&direct.coeffs) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn grid_shape() {
        let g = lambda_grid(2.0, 5, 0.01);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 2.0);
        assert!((g[4] - 0.02).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(lambda_grid(0.0, 5, 0.01), vec![0.0]);
    }

    fn fake(lambda: f64, n_parents: usize) -> FitResult {
        FitResult {
            coeffs: vec![],
            intercept: 0.0,
            scaled_coeffs: vec![],
            lambda,
            n_nonzero: n_parents,
            n_parents_nonzero: n_parents,
            objective: 0.0,
            converged: true,
            n_iter: 1,
            trace: vec![],
        }
    }

    #[test]
    fn max_parents_selection() {
        let path = vec![fake(3.0, 0), fake(2.0, 3), fake(1.0, 6)];
        assert_eq!(select_by_max_parents(&path, 5).unwrap().lambda, 2.0);
        assert_eq!(select_by_max_parents(&path, 0).unwrap().lambda, 3.0);
        let over = vec![fake(3.0, 7), fake(2.0, 8)];
        assert_eq!(select_by_max_parents(&over, 5).unwrap().lambda, 3.0);
        assert!(select_by_max_parents(&[], 5).is_none());
    }
}
