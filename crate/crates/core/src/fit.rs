//! Maximum-likelihood and Firth-corrected fitting of the working models,
//! plus hat values, bread/meat matrices, per-observation influence vectors,
//! and the separation heuristic.
//!
//! Both solvers take Newton steps with the expected information of the
//! unpenalized likelihood as the Hessian (for canonical links this equals
//! the observed information), re-evaluating the Firth augmentation each
//! iteration, with step-halving on score-norm increase. Non-convergence is
//! not an error: the solver returns the best iterate seen with
//! `converged = false`.

use crate::design::{pooled_view, DesignMatrix};
use crate::error::{Error, Result};
use crate::linalg::{weighted_gram, SymFactor};
use crate::link::LinkFamily;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Mle,
    Firth,
}

/// Solver controls. Convergence is declared when the relative
/// coefficient-change max-norm drops below `tol`.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub separation: SeparationThresholds,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, separation: SeparationThresholds::default() }
    }
}

/// Cutoffs for the separation heuristic.
#[derive(Debug, Clone, Copy)]
pub struct SeparationThresholds {
    /// Flag when any |coefficient| exceeds this.
    pub coef_cutoff: f64,
    /// A fitted mean within this distance of {0, 1} sits on the boundary.
    pub prob_eps: f64,
    /// Flag when the boundary fraction exceeds this.
    pub boundary_cutoff: f64,
}

impl Default for SeparationThresholds {
    fn default() -> Self {
        Self { coef_cutoff: 10.0, prob_eps: 1e-8, boundary_cutoff: 0.95 }
    }
}

/// Outcome of the separation heuristic. Firth fits are never flagged
/// (their estimates exist for full-rank canonical designs); the magnitudes
/// are still reported.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeparationReport {
    pub flagged: bool,
    pub max_abs_coef: f64,
    pub boundary_fraction: f64,
}

/// A fitted working model together with the byproducts the estimators and
/// variance machinery consume. For stratified designs everything is in the
/// stacked parameterization (per-arm blocks concatenated); `hat` then holds
/// the per-arm leverage of each row.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub method: FitMethod,
    pub link: LinkFamily,
    /// Stacked coefficient vector.
    pub beta: Array1<f64>,
    /// Fitted mean of each row at its observed arm.
    pub fitted: Array1<f64>,
    /// Leverage of each row.
    pub hat: Array1<f64>,
    /// Inverse bread matrix `B^{-1}`, with `B = n^{-1} sum m'_i X_i X_i^T`.
    pub bread_inv: Array2<f64>,
    /// Meat matrix `M = n^{-1} sum (Y_i - m_i)^2 X_i X_i^T`.
    pub meat: Array2<f64>,
    /// Rows are the estimated influence vectors `B^{-1} X_i (Y_i - m_i)`.
    pub if_beta: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: SeparationReport,
}

impl FittedModel {
    pub fn n(&self) -> usize {
        self.fitted.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Residuals `Y_i - m_i`.
    pub fn residuals(&self, y: &Array1<f64>) -> Array1<f64> {
        y - &self.fitted
    }
}

// ---------------------------------------------------------------------------
// single-block Newton solver

struct BlockFit {
    beta: Array1<f64>,
    fitted: Array1<f64>,
    hat: Array1<f64>,
    gram_inv: Array2<f64>,
    converged: bool,
    iterations: usize,
}

struct ScoreState {
    score_norm: f64,
    score: Array1<f64>,
    mean: Array1<f64>,
    weight: Array1<f64>,
    factor: SymFactor,
    hat: Array1<f64>,
}

fn eval_state(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    link: LinkFamily,
    method: FitMethod,
    eta: &Array1<f64>,
) -> Option<ScoreState> {
    let nrows = x.nrows();
    let p = x.ncols();
    let mut mean = Array1::zeros(nrows);
    let mut weight = Array1::zeros(nrows);
    for i in 0..nrows {
        let m = link.mean(eta[i]);
        let w = link.mean_deriv(eta[i]);
        if !m.is_finite() || !w.is_finite() {
            return None;
        }
        mean[i] = m;
        weight[i] = w;
    }
    let gram = weighted_gram(&x.to_owned(), &weight);
    let factor = SymFactor::new(&gram).ok()?;
    let mut hat = Array1::zeros(nrows);
    let mut pseudo = Array1::zeros(nrows);
    if matches!(method, FitMethod::Firth) {
        for i in 0..nrows {
            hat[i] = weight[i] * factor.inv_quad_form(x.row(i));
            pseudo[i] = 0.5 * hat[i] * link.curvature_ratio(mean[i]);
        }
    }
    let mut score = Array1::zeros(p);
    for i in 0..nrows {
        let r = y[i] - mean[i] + pseudo[i];
        for j in 0..p {
            score[j] += r * x[(i, j)];
        }
    }
    let score_norm = score.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !score_norm.is_finite() {
        return None;
    }
    Some(ScoreState { score_norm, score, mean, weight, factor, hat })
}

const MAX_HALVINGS: usize = 10;

fn solve_block(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    link: LinkFamily,
    method: FitMethod,
    opts: &FitOptions,
) -> Result<BlockFit> {
    let nrows = x.nrows();
    let p = x.ncols();
    if nrows == 0 || p == 0 {
        return Err(Error::InvalidInput("empty design block".into()));
    }
    link.check_outcome(y)?;

    let mut beta = Array1::zeros(p);
    beta[0] = link.init_intercept(y.mean().unwrap_or(0.0));
    let mut eta = x.dot(&beta);

    let mut state = match eval_state(x, y, link, method, &eta) {
        Some(st) => st,
        None => return Err(Error::InvalidInput("non-finite state at the starting point".into())),
    };
    // a failed factorization at the starting weights means the design
    // itself is rank deficient (the weights there are bounded away from 0)
    // -- eval_state above already surfaced that as None, so re-check with
    // an explicit error carrying the pivot diagnostics.
    // (eval_state returned Some, so factorization succeeded)

    let mut best_beta = beta.clone();
    let mut best_norm = state.score_norm;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        let step = state.factor.solve(state.score.view());
        let dir_eta = x.dot(&step);
        let mut accepted: Option<(f64, Array1<f64>, ScoreState)> = None;
        let mut scale = 1.0;
        for halving in 0..=MAX_HALVINGS {
            let cand_eta = &eta + &(scale * &dir_eta);
            if let Some(cand) = eval_state(x, y, link, method, &cand_eta) {
                if cand.score_norm < state.score_norm || halving == MAX_HALVINGS {
                    accepted = Some((scale, cand_eta, cand));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((scale, cand_eta, cand_state)) = accepted else {
            break; // every candidate degenerate; stay at the current iterate
        };
        iterations += 1;
        let mut rel_change = 0.0f64;
        for j in 0..p {
            let new = beta[j] + scale * step[j];
            rel_change = rel_change.max((scale * step[j]).abs() / new.abs().max(1.0));
            beta[j] = new;
        }
        eta = cand_eta;
        state = cand_state;
        if state.score_norm <= best_norm {
            best_norm = state.score_norm;
            best_beta = beta.clone();
        }
        if rel_change < opts.tol {
            converged = true;
            break;
        }
    }

    if !converged && best_beta != beta {
        // return the best iterate by (modified-)score norm
        eta = x.dot(&best_beta);
        if let Some(st) = eval_state(x, y, link, method, &eta) {
            beta = best_beta;
            state = st;
        }
    }

    let mut hat = state.hat;
    if matches!(method, FitMethod::Mle) {
        for i in 0..nrows {
            hat[i] = state.weight[i] * state.factor.inv_quad_form(x.row(i));
        }
    }
    Ok(BlockFit {
        beta,
        fitted: state.mean,
        hat,
        gram_inv: state.factor.inverse(),
        converged,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// public fitting entry points

/// Fit by maximum likelihood (Newton / IRLS on the canonical score).
pub fn fit_mle(
    design: &DesignMatrix,
    y: &Array1<f64>,
    link: LinkFamily,
    opts: &FitOptions,
) -> Result<FittedModel> {
    fit_design(design, y, link, FitMethod::Mle, opts)
}

/// Fit by Firth's modified score equation; estimates are finite for
/// full-rank canonical designs even under data separation.
pub fn fit_firth(
    design: &DesignMatrix,
    y: &Array1<f64>,
    link: LinkFamily,
    opts: &FitOptions,
) -> Result<FittedModel> {
    fit_design(design, y, link, FitMethod::Firth, opts)
}

fn fit_design(
    design: &DesignMatrix,
    y: &Array1<f64>,
    link: LinkFamily,
    method: FitMethod,
    opts: &FitOptions,
) -> Result<FittedModel> {
    let n = design.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} rows, design has {n}",
            y.len()
        )));
    }
    let nf = n as f64;
    let p = design.p();

    let (beta, fitted, hat, bread_inv, converged, iterations) = if !design.is_stratified() {
        let x = pooled_view(design);
        let block = solve_block(x, y.view(), link, method, opts)?;
        // gram = sum w x x^T = n * bread  =>  bread_inv = n * gram_inv
        let bread_inv = block.gram_inv.mapv(|v| v * nf);
        (block.beta, block.fitted, block.hat, bread_inv, block.converged, block.iterations)
    } else {
        let pa = design.p_arm();
        let mut beta = Array1::zeros(p);
        let mut fitted = Array1::zeros(n);
        let mut hat = Array1::zeros(n);
        let mut bread_inv = Array2::zeros((p, p));
        let mut converged = true;
        let mut iterations = 0;
        for a in 0..design.k() {
            let (xa, ya, rows) = design.gather_arm(a, y.view());
            let block = solve_block(xa.view(), ya.view(), link, method, opts)?;
            beta.slice_mut(s![a * pa..(a + 1) * pa]).assign(&block.beta);
            for (r, &i) in rows.iter().enumerate() {
                fitted[i] = block.fitted[r];
                hat[i] = block.hat[r];
            }
            // stacked bread block: B^{-1}_aa = n * gram_a^{-1}
            bread_inv
                .slice_mut(s![a * pa..(a + 1) * pa, a * pa..(a + 1) * pa])
                .assign(&block.gram_inv.mapv(|v| v * nf));
            converged &= block.converged;
            iterations = iterations.max(block.iterations);
        }
        (beta, fitted, hat, bread_inv, converged, iterations)
    };

    let if_beta = if_beta_from_parts(design, y, &fitted, &bread_inv);
    let meat = meat_matrix(design, y, &fitted);
    let separation = separation_from_parts(method, link, &beta, &fitted, &opts.separation);

    Ok(FittedModel {
        method,
        link,
        beta,
        fitted,
        hat,
        bread_inv,
        meat,
        if_beta,
        converged,
        iterations,
        separation,
    })
}

fn if_beta_from_parts(
    design: &DesignMatrix,
    y: &Array1<f64>,
    fitted: &Array1<f64>,
    bread_inv: &Array2<f64>,
) -> Array2<f64> {
    let n = design.n();
    let p = design.p();
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        let xi = design.row_observed(i);
        let v = bread_inv.dot(&xi);
        let r = y[i] - fitted[i];
        out.row_mut(i).assign(&(r * &v));
    }
    out
}

fn meat_matrix(design: &DesignMatrix, y: &Array1<f64>, fitted: &Array1<f64>) -> Array2<f64> {
    let n = design.n();
    let p = design.p();
    let mut meat = Array2::zeros((p, p));
    for i in 0..n {
        let xi = design.row_observed(i);
        let r2 = (y[i] - fitted[i]).powi(2);
        for a in 0..p {
            let ra = r2 * xi[a];
            if ra == 0.0 {
                continue;
            }
            for b in 0..=a {
                meat[(a, b)] += ra * xi[b];
            }
        }
    }
    let nf = n as f64;
    for a in 0..p {
        for b in 0..=a {
            meat[(a, b)] /= nf;
            meat[(b, a)] = meat[(a, b)];
        }
    }
    meat
}

fn separation_from_parts(
    method: FitMethod,
    link: LinkFamily,
    beta: &Array1<f64>,
    fitted: &Array1<f64>,
    thresholds: &SeparationThresholds,
) -> SeparationReport {
    let max_abs_coef = beta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let boundary_fraction = match link {
        LinkFamily::LogitBinomial => {
            let eps = thresholds.prob_eps;
            let nb = fitted.iter().filter(|&&m| m < eps || m > 1.0 - eps).count();
            nb as f64 / fitted.len().max(1) as f64
        }
        LinkFamily::LogPoisson => 0.0,
    };
    let flagged = matches!(method, FitMethod::Mle)
        && (max_abs_coef > thresholds.coef_cutoff
            || boundary_fraction > thresholds.boundary_cutoff);
    SeparationReport { flagged, max_abs_coef, boundary_fraction }
}

// ---------------------------------------------------------------------------
// standalone byproduct operations

/// Leverage scores `h_ii(beta)`; per-arm for stratified designs. Every
/// value lies in [0, 1] and they sum to the parameter count.
pub fn hat_values(design: &DesignMatrix, beta: &Array1<f64>, link: LinkFamily) -> Result<Array1<f64>> {
    if beta.len() != design.p() {
        return Err(Error::DimensionMismatch("beta length must match design".into()));
    }
    let mut hat = Array1::zeros(design.n());
    if !design.is_stratified() {
        let x = pooled_view(design);
        let eta = design.eta_observed(beta);
        let w = eta.mapv(|e| link.mean_deriv(e));
        let factor = SymFactor::new(&weighted_gram(&x.to_owned(), &w))?;
        for i in 0..design.n() {
            hat[i] = w[i] * factor.inv_quad_form(x.row(i));
        }
    } else {
        let pa = design.p_arm();
        let z = design.stratified_z().unwrap();
        for a in 0..design.k() {
            let rows = design.arm_rows(a);
            let ba = beta.slice(s![a * pa..(a + 1) * pa]).to_owned();
            let mut xa = Array2::zeros((rows.len(), pa));
            for (r, &i) in rows.iter().enumerate() {
                xa.row_mut(r).assign(&z.row(i));
            }
            let w = xa.dot(&ba).mapv(|e| link.mean_deriv(e));
            let factor = SymFactor::new(&weighted_gram(&xa, &w))?;
            for (r, &i) in rows.iter().enumerate() {
                hat[i] = w[r] * factor.inv_quad_form(xa.row(r));
            }
        }
    }
    Ok(hat)
}

/// Bread matrix, its inverse, and the meat matrix at `beta`.
pub fn bread_meat(
    design: &DesignMatrix,
    beta: &Array1<f64>,
    link: LinkFamily,
    y: &Array1<f64>,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    if beta.len() != design.p() {
        return Err(Error::DimensionMismatch("beta length must match design".into()));
    }
    let n = design.n();
    let nf = n as f64;
    let p = design.p();
    let eta_own = design.eta_observed(beta);
    let mut bread = Array2::zeros((p, p));
    for i in 0..n {
        let xi = design.row_observed(i);
        let w = link.mean_deriv(eta_own[i]);
        for a in 0..p {
            let ra = w * xi[a];
            if ra == 0.0 {
                continue;
            }
            for b in 0..=a {
                bread[(a, b)] += ra * xi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            bread[(a, b)] /= nf;
            bread[(b, a)] = bread[(a, b)];
        }
    }
    let factor = SymFactor::new(&bread)?;
    let bread_inv = factor.inverse();
    let fitted = eta_own.mapv(|e| link.mean(e));
    let meat = meat_matrix(design, y, &fitted);
    Ok((bread, bread_inv, meat))
}

/// Per-observation influence vectors for the coefficient estimator:
/// row `i` is `B^{-1} X_i (Y_i - m_i)`.
pub fn influence_beta(fitted: &FittedModel, design: &DesignMatrix, y: &Array1<f64>) -> Array2<f64> {
    if_beta_from_parts(design, y, &fitted.fitted, &fitted.bread_inv)
}

/// Re-run the separation heuristic with custom thresholds.
pub fn detect_separation(fitted: &FittedModel, thresholds: &SeparationThresholds) -> SeparationReport {
    separation_from_parts(fitted.method, fitted.link, &fitted.beta, &fitted.fitted, thresholds)
}
