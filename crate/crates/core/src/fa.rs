//! Maximum-likelihood exploratory factor analysis on a correlation matrix.
//!
//! For fixed uniquenesses Ψ the loadings are profiled out through the
//! eigendecomposition of `Ψ^(−1/2) R Ψ^(−1/2)`, leaving a smooth objective
//! in Ψ alone:
//!
//! ```text
//! F(Ψ) = Σ_{j>k} (θ_j − ln θ_j − 1)
//! ```
//!
//! where θ are the eigenvalues in descending order. `F` is minimised over
//! `ln ψ` with a box-constrained BFGS, bounds `ψ ∈ [0.005, 1]`. No rotation
//! is applied to the loadings.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::linalg::{correlation_matrix, normalize_signs, spd_inverse, spd_log_det, sym_eigen, LinalgError, Matrix};
use crate::par::Execution;

/// Lower bound on uniquenesses; solutions at the bound are Heywood cases.
pub const PSI_FLOOR: f64 = 0.005;
/// Default largest off-diagonal residual for an adequate fit.
pub const ADEQUACY_THRESHOLD: f64 = 0.05;

const GRAD_TOL: f64 = 1e-10;
const MAX_ITER: usize = 1000;
/// Accepted when the objective no longer changes in floating point.
const STALL_GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum FaError {
    #[error("{0} factors leave negative degrees of freedom")]
    DofNegative(usize),
    #[error("factor count must be at least 1")]
    ZeroFactors,
    #[error("correlation matrix is singular")]
    SingularCorrelation,
    #[error("need more rows ({rows}) than variables ({vars})")]
    TooFewRows { rows: usize, vars: usize },
    #[error("model did not converge")]
    NotConverged,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `((p−k)² − p − k) / 2`, negative when the model is not identified.
pub fn degrees_of_freedom(p: usize, k: usize) -> i64 {
    let (p, k) = (p as i64, k as i64);
    ((p - k) * (p - k) - p - k) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaModel {
    /// variables × factors
    pub loadings: Matrix,
    pub uniquenesses: Vec<f64>,
    pub k: usize,
    /// Bartlett-corrected likelihood-ratio statistic
    pub statistic: f64,
    pub dof: usize,
    /// Upper chi-square tail; `None` for a saturated model (dof = 0).
    pub p_value: Option<f64>,
    /// `R − (ΛΛᵀ + Ψ)`
    pub residual: Matrix,
    pub converged: bool,
    /// Some uniqueness sits on the 0.005 floor.
    pub heywood: bool,
    /// Minimised discrepancy `F`.
    pub objective: f64,
    pub iterations: usize,
    pub n_obs: usize,
    correlation: Matrix,
}

impl FaModel {
    /// The zero-factor model `Σ = I`. Its loadings are a single zero column.
    pub fn null(r: &Matrix, n_obs: usize) -> Result<Self, FaError> {
        check_correlation(r)?;
        let p = r.rows();
        let psi = vec![1.0; p];
        let loadings = Matrix::zeros(p, 1);
        let mut m = FaModel {
            residual: r.sub(&Matrix::identity(p))?,
            loadings,
            uniquenesses: psi,
            k: 0,
            statistic: 0.0,
            dof: degrees_of_freedom(p, 0) as usize,
            p_value: None,
            converged: true,
            heywood: false,
            objective: 0.0,
            iterations: 0,
            n_obs,
            correlation: r.clone(),
        };
        m.objective = discrepancy(r, &m.fitted())?;
        let (stat, _, pv) = lr_test(&m, n_obs)?;
        m.statistic = stat;
        m.p_value = pv;
        Ok(m)
    }

    /// `ΛΛᵀ + Ψ`.
    pub fn fitted(&self) -> Matrix {
        let mut s = self
            .loadings
            .matmul(&self.loadings.transpose())
            .expect("loadings are conformable");
        for (i, u) in self.uniquenesses.iter().enumerate() {
            s[(i, i)] += u;
        }
        s
    }

    pub fn communalities(&self) -> Vec<f64> {
        self.uniquenesses.iter().map(|u| 1.0 - u).collect()
    }

    pub fn correlation(&self) -> &Matrix {
        &self.correlation
    }

    /// Largest off-diagonal absolute residual.
    pub fn max_offdiag_residual(&self) -> f64 {
        max_offdiag(&self.residual)
    }

    pub fn is_adequate(&self, threshold: f64) -> bool {
        self.max_offdiag_residual() <= threshold
    }
}

fn max_offdiag(m: &Matrix) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if i != j {
                best = best.max(m[(i, j)].abs());
            }
        }
    }
    best
}

fn check_correlation(r: &Matrix) -> Result<(), FaError> {
    if !r.is_square() || !r.is_symmetric(1e-10) {
        return Err(FaError::ShapeMismatch("correlation matrix must be square and symmetric".into()));
    }
    let eig = sym_eigen(r)?;
    let min = *eig.values.last().expect("non-empty");
    if !(min > 1e-10 * eig.values[0].max(1.0)) {
        return Err(FaError::SingularCorrelation);
    }
    Ok(())
}

/// `ln det Σ − ln det R + tr(R Σ⁻¹) − p`.
fn discrepancy(r: &Matrix, sigma: &Matrix) -> Result<f64, FaError> {
    let ld_s = spd_log_det(sigma)?.ok_or(FaError::SingularCorrelation)?;
    let ld_r = spd_log_det(r)?.ok_or(FaError::SingularCorrelation)?;
    let inv = spd_inverse(sigma)?;
    let tr = r.matmul(&inv)?.trace();
    Ok(ld_s - ld_r + tr - r.rows() as f64)
}

/// Profiled objective and its pieces for a given `ln ψ`.
pub(crate) struct Profile {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub loadings: Matrix,
}

pub(crate) fn profile(r: &Matrix, log_psi: &[f64], k: usize) -> Result<Profile, FaError> {
    let p = r.rows();
    let psi: Vec<f64> = log_psi.iter().map(|u| u.exp()).collect();
    let inv_sqrt: Vec<f64> = psi.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut s = r.clone();
    for i in 0..p {
        for j in 0..p {
            s[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = sym_eigen(&s)?;
    let objective = eig.values[k..]
        .iter()
        .map(|t| {
            let e = t - 1.0;
            e - e.ln_1p()
        })
        .sum::<f64>();
    let mut loadings = Matrix::zeros(p, k);
    for c in 0..k {
        let f = (eig.values[c] - 1.0).max(0.0).sqrt();
        for i in 0..p {
            loadings[(i, c)] = psi[i].sqrt() * eig.vectors[(i, c)] * f;
        }
    }
    // d F / d ln ψᵢ = ((ΛΛᵀ)ᵢᵢ + ψᵢ − Rᵢᵢ) / ψᵢ
    let gradient = (0..p)
        .map(|i| {
            let ll: f64 = loadings.row(i).iter().map(|v| v * v).sum();
            (ll + psi[i] - r[(i, i)]) / psi[i]
        })
        .collect();
    Ok(Profile {
        objective,
        gradient,
        loadings,
    })
}

/// Profiled ML objective `F` at uniquenesses `psi` (exposed for gradient checks).
pub fn objective_at(r: &Matrix, psi: &[f64], k: usize) -> Result<f64, FaError> {
    let u: Vec<f64> = psi.iter().map(|v| v.ln()).collect();
    Ok(profile(r, &u, k)?.objective)
}

/// Analytic gradient of `F` with respect to `ln ψ`.
pub fn log_gradient_at(r: &Matrix, psi: &[f64], k: usize) -> Result<Vec<f64>, FaError> {
    let u: Vec<f64> = psi.iter().map(|v| v.ln()).collect();
    Ok(profile(r, &u, k)?.gradient)
}

struct Optimum {
    x: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Box-constrained BFGS with an Armijo backtracking line search on the
/// projected path. The inverse-Hessian estimate resets whenever the active
/// set changes.
fn minimize(r: &Matrix, k: usize, x0: Vec<f64>, lo: f64, hi: f64) -> Result<Optimum, FaError> {
    let n = x0.len();
    let clamp = |x: &mut [f64]| x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    let mut x = x0;
    clamp(&mut x);
    let mut pr = profile(r, &x, k)?;
    let mut h = Matrix::identity(n);
    let mut active_prev: Vec<bool> = vec![false; n];

    for iter in 0..MAX_ITER {
        let g = &pr.gradient;
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0))
            .collect();
        let pg_norm = (0..n).filter(|&i| !active[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm < GRAD_TOL {
            return Ok(Optimum { x, converged: true, iterations: iter });
        }
        if active != active_prev {
            h = Matrix::identity(n);
            active_prev = active.clone();
        }
        let mut d = vec![0.0; n];
        for i in (0..n).filter(|&i| !active[i]) {
            d[i] = -(0..n).filter(|&j| !active[j]).map(|j| h[(i, j)] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            h = Matrix::identity(n);
            for i in 0..n {
                d[i] = if active[i] { 0.0 } else { -g[i] };
            }
            slope = d.iter().zip(g).map(|(a, b)| a * b).sum();
        }
        debug_assert!(slope < 0.0);

        let mut t = 1.0;
        let accepted = loop {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            clamp(&mut xn);
            let step: f64 = xn.iter().zip(&x).zip(g).map(|((a, b), gi)| (a - b) * gi).sum();
            let cand = profile(r, &xn, k)?;
            if cand.objective <= pr.objective + 1e-4 * step.min(0.0) && cand.objective.is_finite() {
                break Some((xn, cand));
            }
            t *= 0.5;
            if t < 1e-16 {
                break None;
            }
        };
        let Some((xn, cand)) = accepted else {
            // no descent possible at machine precision
            return Ok(Optimum { x, converged: pg_norm < STALL_GRAD_TOL, iterations: iter });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // F is flat to working precision: further steps cannot be resolved
        let unresolved = pr.objective - cand.objective <= 4.0 * f64::EPSILON * pr.objective.abs().max(1.0);
        if s.iter().all(|v| *v == 0.0) || (unresolved && pg_norm < STALL_GRAD_TOL) {
            return Ok(Optimum { x, converged: pg_norm < STALL_GRAD_TOL, iterations: iter });
        }
        let y: Vec<f64> = cand.gradient.iter().zip(&pr.gradient).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            bfgs_update(&mut h, &s, &y, sy);
        }
        x = xn;
        pr = cand;
    }
    Ok(Optimum { x, converged: false, iterations: MAX_ITER })
}

fn bfgs_update(h: &mut Matrix, s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[(i, j)] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Fits a `k`-factor model to the sample correlation matrix of `x`.
pub fn fit_fa_ml(x: &Matrix, k: usize) -> Result<FaModel, FaError> {
    if x.rows() <= x.cols() {
        return Err(FaError::TooFewRows { rows: x.rows(), vars: x.cols() });
    }
    let r = correlation_matrix(x)?;
    fit_fa_correlation(&r, k, x.rows())
}

/// Fits directly to a correlation matrix with nominal sample size `n_obs`.
pub fn fit_fa_correlation(r: &Matrix, k: usize, n_obs: usize) -> Result<FaModel, FaError> {
    if k == 0 {
        return Err(FaError::ZeroFactors);
    }
    let p = r.rows();
    let dof = degrees_of_freedom(p, k);
    if dof < 0 || k >= p {
        return Err(FaError::DofNegative(k));
    }
    check_correlation(r)?;

    let rinv = spd_inverse(r)?;
    let start: Vec<f64> = (0..p)
        .map(|i| ((1.0 - 0.5 * k as f64 / p as f64) / rinv[(i, i)]).clamp(PSI_FLOOR, 1.0).ln())
        .collect();
    let opt = minimize(r, k, start, PSI_FLOOR.ln(), 0.0)?;
    let prof = profile(r, &opt.x, k)?;
    let uniquenesses: Vec<f64> = opt.x.iter().map(|u| u.exp()).collect();
    let mut loadings = prof.loadings;
    normalize_signs(&mut loadings);
    let heywood = uniquenesses.iter().any(|u| *u <= PSI_FLOOR * (1.0 + 1e-9));

    let mut m = FaModel {
        residual: Matrix::identity(p),
        loadings,
        uniquenesses,
        k,
        statistic: 0.0,
        dof: dof as usize,
        p_value: None,
        converged: opt.converged,
        heywood,
        objective: 0.0,
        iterations: opt.iterations,
        n_obs,
        correlation: r.clone(),
    };
    m.residual = r.sub(&m.fitted())?;
    m.objective = discrepancy(r, &m.fitted())?;
    let (stat, _, pv) = lr_statistic(&m, n_obs)?;
    m.statistic = stat;
    m.p_value = pv;
    Ok(m)
}

fn lr_statistic(m: &FaModel, n: usize) -> Result<(f64, usize, Option<f64>), FaError> {
    let p = m.correlation.rows() as f64;
    let k = m.k as f64;
    let f = discrepancy(&m.correlation, &m.fitted())?.max(0.0);
    let bartlett = n as f64 - 1.0 - (2.0 * p + 5.0) / 6.0 - 2.0 * k / 3.0;
    let stat = bartlett * f;
    let pv = if m.dof > 0 {
        let chi = ChiSquared::new(m.dof as f64).expect("positive dof");
        Some(chi.sf(stat.max(0.0)))
    } else {
        None
    };
    Ok((stat, m.dof, pv))
}

/// Bartlett-corrected likelihood-ratio test of the `k`-factor model against
/// the saturated model.
pub fn lr_test(m: &FaModel, n: usize) -> Result<(f64, usize, Option<f64>), FaError> {
    if !m.converged {
        return Err(FaError::NotConverged);
    }
    lr_statistic(m, n)
}

/// `R − (ΛΛᵀ + Ψ)`.
pub fn residual_matrix(m: &FaModel, r: &Matrix) -> Result<Matrix, FaError> {
    if r.shape() != (m.uniquenesses.len(), m.uniquenesses.len()) {
        return Err(FaError::ShapeMismatch(format!(
            "expected {p}x{p}, got {}x{}",
            r.rows(),
            r.cols(),
            p = m.uniquenesses.len()
        )));
    }
    Ok(r.sub(&m.fitted())?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorSelection {
    pub k: usize,
    /// False when no `k ≤ k_max` reached `p > alpha`.
    pub adequate: bool,
}

/// Smallest `k` (1-based position) whose p-value exceeds `alpha`.
pub fn select_from_pvalues(p_values: &[Option<f64>], alpha: f64) -> FactorSelection {
    match p_values.iter().position(|p| p.is_some_and(|p| p > alpha)) {
        Some(i) => FactorSelection { k: i + 1, adequate: true },
        None => FactorSelection { k: p_values.len(), adequate: false },
    }
}

/// Fits `k = 1..=k_max` and applies the keep-increasing rule. Fits are
/// independent and may run in parallel; results are ordered by `k`.
pub fn select_factors(
    x: &Matrix,
    k_max: usize,
    alpha: f64,
    exec: Execution,
) -> Result<(FactorSelection, Vec<FaModel>), FaError> {
    if k_max == 0 {
        return Err(FaError::ZeroFactors);
    }
    if degrees_of_freedom(x.cols(), k_max) < 0 {
        return Err(FaError::DofNegative(k_max));
    }
    let fits: Result<Vec<FaModel>, FaError> = exec.map(k_max, |i| fit_fa_ml(x, i + 1)).into_iter().collect();
    let fits = fits?;
    let pv: Vec<Option<f64>> = fits.iter().map(|m| m.p_value).collect();
    Ok((select_from_pvalues(&pv, alpha), fits))
}
