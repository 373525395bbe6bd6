//! FastICA with symmetric (parallel) extraction.
//!
//! Data are centered and whitened through the SVD of the centered matrix,
//! then all unmixing directions are updated together by the fixed-point
//! rule and re-orthonormalised with `W ← (WWᵀ)^(−1/2) W` after every step.
//! A run that exhausts `max_iter` is returned with `converged == false`
//! rather than as an error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{center_scale, pinv, svd, sym_eigen, LinalgError, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum IcaError {
    #[error("requested components exceed the numerical rank {0}")]
    RankDeficient(usize),
    #[error("need at least {needed} rows for {components} components, got {rows}")]
    TooFewRows { rows: usize, components: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("matrix is singular")]
    Singular,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contrast {
    #[default]
    Logcosh,
    Cube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcaConfig {
    pub n_components: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub contrast: Contrast,
    pub logcosh_alpha: f64,
    pub seed: u64,
    /// Variance-scale columns before whitening (off by default).
    pub prescale: bool,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            n_components: 2,
            max_iter: 200,
            tol: 1e-4,
            contrast: Contrast::Logcosh,
            logcosh_alpha: 1.0,
            seed: 0,
            prescale: false,
        }
    }
}

impl IcaConfig {
    pub fn new(n_components: usize, seed: u64) -> Self {
        Self {
            n_components,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IcaError> {
        let bad = |m: &str| Err(IcaError::InvalidConfig(m.into()));
        if self.n_components < 1 {
            return bad("n_components must be at least 1");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(1.0..=2.0).contains(&self.logcosh_alpha) {
            return bad("logcosh_alpha must lie in [1, 2]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    /// components × variables; maps centered input to white signals
    pub whitening: Matrix,
    /// components × components, orthonormal rows
    pub unmixing: Matrix,
    /// variables × components, pseudo-inverse of `unmixing · whitening`
    pub mixing: Matrix,
    /// rows × components
    pub sources: Matrix,
    pub converged: bool,
    pub iterations: usize,
    pub delta_history: Vec<f64>,
    pub means: Vec<f64>,
}

impl IcaModel {
    /// Overall unmixing `W·K` applied to centered data.
    pub fn separating_matrix(&self) -> Matrix {
        self.unmixing
            .matmul(&self.whitening)
            .expect("unmixing and whitening are conformable")
    }

    pub fn final_delta(&self) -> Option<f64> {
        self.delta_history.last().copied()
    }
}

/// Whitens `x`: returns `z = Xc·Kᵀ` (unit sample covariance) and `K`.
pub fn whiten(x: &Matrix, n_components: usize) -> Result<(Matrix, Matrix), IcaError> {
    let xc = center_scale(x, true, false)?;
    whiten_centered(&xc, n_components)
}

fn whiten_centered(xc: &Matrix, n_components: usize) -> Result<(Matrix, Matrix), IcaError> {
    let (n, p) = xc.shape();
    if n_components == 0 || n_components > p.min(n) {
        return Err(IcaError::InvalidConfig(format!(
            "n_components {n_components} must lie in 1..={}",
            p.min(n)
        )));
    }
    let d = svd(xc)?;
    let s1 = d.sigma[0];
    let rank = d.sigma.iter().filter(|s| **s >= 1e-10 * s1 && **s > 0.0).count();
    if n_components > rank {
        return Err(IcaError::RankDeficient(rank));
    }
    let scale = (n as f64 - 1.0).sqrt();
    let mut k = Matrix::zeros(n_components, p);
    for c in 0..n_components {
        for j in 0..p {
            k[(c, j)] = d.v[(j, c)] * scale / d.sigma[c];
        }
    }
    let z = xc.matmul(&k.transpose())?;
    Ok((z, k))
}

/// `(WWᵀ)^(−1/2) W`, eigenvalues floored at 1e-12.
fn symmetric_decorrelation(w: &Matrix) -> Result<Matrix, IcaError> {
    let wwt = w.matmul(&w.transpose())?;
    let eig = sym_eigen(&wwt)?;
    let n = w.rows();
    let mut e = eig.vectors.clone();
    for j in 0..n {
        let f = 1.0 / eig.values[j].max(1e-12).sqrt();
        for i in 0..n {
            e[(i, j)] *= f;
        }
    }
    let inv_sqrt = e.matmul(&eig.vectors.transpose())?;
    Ok(inv_sqrt.matmul(w)?)
}

pub fn fast_ica(x: &Matrix, cfg: &IcaConfig) -> Result<IcaModel, IcaError> {
    cfg.validate()?;
    let c = cfg.n_components;
    let n = x.rows();
    if n < 10 * c {
        return Err(IcaError::TooFewRows {
            rows: n,
            components: c,
            needed: 10 * c,
        });
    }
    let means = x.column_means();
    let xc = center_scale(x, true, false)?;
    let (z, k) = if cfg.prescale {
        let sds = xc.column_stdevs();
        if let Some(j) = sds.iter().position(|s| *s == 0.0) {
            return Err(IcaError::Linalg(LinalgError::ZeroVarianceColumn(j)));
        }
        let xs = center_scale(&xc, false, true)?;
        let (z, k) = whiten_centered(&xs, c)?;
        // fold the column scaling into K so it acts on centered raw data
        let mut k_eff = k;
        for r in 0..c {
            for (j, s) in sds.iter().enumerate() {
                k_eff[(r, j)] /= s;
            }
        }
        (z, k_eff)
    } else {
        whiten_centered(&xc, c)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init: Vec<f64> = (0..c * c).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut w = symmetric_decorrelation(&Matrix::new(c, c, init)?)?;

    let alpha = cfg.logcosh_alpha;
    let nf = n as f64;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let y = z.matmul(&w.transpose())?;
        let mut w1 = Matrix::zeros(c, c);
        for i in 0..c {
            let mut dg_mean = 0.0;
            let mut acc = vec![0.0; c];
            for t in 0..n {
                let u = y[(t, i)];
                let (g, dg) = match cfg.contrast {
                    Contrast::Logcosh => {
                        let th = (alpha * u).tanh();
                        (th, alpha * (1.0 - th * th))
                    }
                    Contrast::Cube => (u * u * u, 3.0 * u * u),
                };
                dg_mean += dg;
                for (a, zv) in acc.iter_mut().zip(z.row(t)) {
                    *a += g * zv;
                }
            }
            dg_mean /= nf;
            for j in 0..c {
                w1[(i, j)] = acc[j] / nf - dg_mean * w[(i, j)];
            }
        }
        let w1 = symmetric_decorrelation(&w1)?;
        debug_assert!(
            w1.matmul(&w1.transpose())
                .unwrap()
                .sub(&Matrix::identity(c))
                .unwrap()
                .max_abs()
                < 1e-8,
            "unmixing lost orthonormality"
        );
        let delta = (0..c)
            .map(|i| {
                let dot: f64 = w1.row(i).iter().zip(w.row(i)).map(|(a, b)| a * b).sum();
                (1.0 - dot.abs()).abs()
            })
            .fold(0.0, f64::max);
        history.push(delta);
        w = w1;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let sources = z.matmul(&w.transpose())?;
    let separating = w.matmul(&k)?;
    let mixing = pinv(&separating, 1e-12)?;
    Ok(IcaModel {
        whitening: k,
        unmixing: w,
        mixing,
        sources,
        converged,
        iterations,
        delta_history: history,
        means,
    })
}

/// Amari distance between an estimated unmixing and the true mixing,
/// normalised to `[0, 1]`; zero iff `w_est·a_true` is a scaled permutation.
///
/// Fails with [`IcaError::Singular`] when a row or column of the product is
/// entirely zero, where the index is undefined.
pub fn amari_index(w_est: &Matrix, a_true: &Matrix) -> Result<f64, IcaError> {
    let p = w_est.matmul(a_true)?;
    if !p.is_square() {
        return Err(IcaError::Linalg(LinalgError::NotSquare(p.rows(), p.cols())));
    }
    let n = p.rows();
    let a = p.map(f64::abs);
    let ratio = |v: &[f64]| -> Result<f64, IcaError> {
        let max = v.iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0) || !max.is_finite() {
            return Err(IcaError::Singular);
        }
        Ok(v.iter().sum::<f64>() / max - 1.0)
    };
    // rows are rescaled to unit max so the column term ignores row scaling
    let mut a = a;
    let mut rows = 0.0;
    for i in 0..n {
        rows += ratio(a.row(i))?;
        let max = a.row(i).iter().cloned().fold(0.0, f64::max);
        for j in 0..n {
            a[(i, j)] /= max;
        }
    }
    let mut cols = 0.0;
    for j in 0..n {
        cols += ratio(&a.column(j))?;
    }
    if n == 1 {
        return Ok(0.0);
    }
    let nf = n as f64;
    Ok((rows + cols) / (2.0 * nf * (nf - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::covariance_matrix;
    use rand::Rng;

    fn uniform_sources(n: usize, k: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 3f64.sqrt();
        let data = (0..n * k).map(|_| rng.random_range(-h..h)).collect();
        Matrix::new(n, k, data).unwrap()
    }

    fn laplace_sources(n: usize, k: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * k)
            .map(|_| {
                let u: f64 = rng.random_range(-0.5..0.5);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln() / 2f64.sqrt()
            })
            .collect();
        Matrix::new(n, k, data).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(IcaConfig::default().validate().is_ok());
        let mut c = IcaConfig::default();
        c.tol = 0.0;
        assert!(c.validate().is_err());
        let mut c = IcaConfig::default();
        c.logcosh_alpha = 2.5;
        assert!(c.validate().is_err());
        let mut c = IcaConfig::default();
        c.n_components = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn whitening_gives_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = (0..200 * 5).map(|_| rng.random_range(-1.0..1.0) * 3.0).collect();
        let x = Matrix::new(200, 5, data).unwrap();
        let (z, k) = whiten(&x, 5).unwrap();
        assert_eq!(k.shape(), (5, 5));
        let cov = covariance_matrix(&z).unwrap();
        assert!(cov.sub(&Matrix::identity(5)).unwrap().max_abs() < 1e-8);

        let (z2, _) = whiten(&z, 5).unwrap();
        let cov2 = covariance_matrix(&z2).unwrap();
        assert!(cov2.sub(&Matrix::identity(5)).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn collinear_columns_are_rank_deficient() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [4.0, 4.0], [3.0, 3.0]]).unwrap();
        assert_eq!(whiten(&x, 2), Err(IcaError::RankDeficient(1)));
    }

    #[test]
    fn amari_examples() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let w = pinv(&a, 1e-14).unwrap();
        assert!(amari_index(&w, &a).unwrap() < 1e-12);

        let perm = Matrix::from_rows(&[[0.0, -3.0], [0.5, 0.0]]).unwrap();
        assert_eq!(amari_index(&perm, &Matrix::identity(2)).unwrap(), 0.0);

        // every row and column of the all-ones matrix contributes 2/1 − 1,
        // so the sum is 4 and the normaliser 2·2·(2−1) = 4
        let ones = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(amari_index(&ones, &Matrix::identity(2)).unwrap(), 1.0);
        let p = Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0]]).unwrap();
        assert_eq!(amari_index(&p, &Matrix::identity(2)).unwrap(), 1.0);

        let dead = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap();
        assert_eq!(amari_index(&dead, &Matrix::identity(2)), Err(IcaError::Singular));
    }

    #[test]
    fn amari_scale_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w = Matrix::new(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a = Matrix::new(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let base = amari_index(&w, &a).unwrap();
        let dp = Matrix::from_rows(&[[0.0, 2.0, 0.0], [0.0, 0.0, -0.3], [5.0, 0.0, 0.0]]).unwrap();
        let moved = amari_index(&dp.matmul(&w).unwrap(), &a).unwrap();
        assert!((base - moved).abs() < 1e-12);
    }

    fn mixed(s: &Matrix) -> (Matrix, Matrix) {
        let a = Matrix::from_rows(&[[1.0, 0.6], [0.4, 1.0]]).unwrap();
        (s.matmul(&a.transpose()).unwrap(), a)
    }

    #[test]
    fn recovers_uniform_sources() {
        let s = uniform_sources(5000, 2, 1);
        let (x, a) = mixed(&s);
        let m = fast_ica(&x, &IcaConfig::new(2, 7)).unwrap();
        assert!(m.converged);
        assert!(amari_index(&m.separating_matrix(), &a).unwrap() < 0.05);
    }

    #[test]
    fn converged_seeds_agree() {
        let s = uniform_sources(5000, 2, 1);
        let (x, a) = mixed(&s);
        let scores: Vec<f64> = (0..10)
            .map(|seed| fast_ica(&x, &IcaConfig::new(2, seed)).unwrap())
            .filter(|m| m.converged)
            .map(|m| amari_index(&m.separating_matrix(), &a).unwrap())
            .collect();
        assert!(scores.len() >= 9);
        let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 0.02, "{scores:?}");
    }

    #[test]
    fn identity_mixing_of_laplace_is_signed_permutation() {
        let s = laplace_sources(5000, 2, 2);
        let m = fast_ica(&s, &IcaConfig::new(2, 3)).unwrap();
        let wk = m.separating_matrix();
        // match each row to the column with the largest magnitude
        for i in 0..2 {
            let r = wk.row(i);
            let (big, small) = if r[0].abs() > r[1].abs() { (r[0], r[1]) } else { (r[1], r[0]) };
            assert!((big.abs() - 1.0).abs() < 0.05, "{wk:?}");
            assert!(small.abs() < 0.05, "{wk:?}");
        }
    }

    #[test]
    fn model_invariants() {
        let s = uniform_sources(3000, 3, 9);
        let a = Matrix::from_rows(&[[1.0, 0.2, 0.3], [0.1, 1.0, 0.5], [0.3, 0.4, 1.0], [0.2, 0.2, 0.2]]).unwrap();
        let x = s.matmul(&a.transpose()).unwrap();
        let m = fast_ica(&x, &IcaConfig::new(3, 11)).unwrap();
        let wwt = m.unmixing.matmul(&m.unmixing.transpose()).unwrap();
        assert!(wwt.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-8);
        let xc = center_scale(&x, true, false).unwrap();
        let s_hat = xc.matmul(&m.separating_matrix().transpose()).unwrap();
        assert!(s_hat.sub(&m.sources).unwrap().max_abs() < 1e-8);
        for sd in m.sources.column_stdevs() {
            assert!((sd - 1.0).abs() < 1e-6);
        }
        assert_eq!(m.mixing.shape(), (4, 3));
        assert_eq!(m.iterations, m.delta_history.len());
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, _) = mixed(&uniform_sources(1000, 2, 5));
        let a = fast_ica(&x, &IcaConfig::new(2, 42)).unwrap();
        let b = fast_ica(&x, &IcaConfig::new(2, 42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_convergence_is_flagged_not_an_error() {
        let (x, _) = mixed(&uniform_sources(1000, 2, 5));
        let mut cfg = IcaConfig::new(2, 1);
        cfg.max_iter = 1;
        cfg.tol = 1e-15;
        let m = fast_ica(&x, &cfg).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 1);
    }

    #[test]
    fn too_few_rows_guard() {
        let x = uniform_sources(15, 2, 1);
        assert!(matches!(
            fast_ica(&x, &IcaConfig::new(2, 1)),
            Err(IcaError::TooFewRows { needed: 20, .. })
        ));
    }

    #[test]
    fn prescale_and_cube_contrast() {
        let (x, a) = mixed(&uniform_sources(4000, 2, 8));
        let x = Matrix::from_columns(&[x.column(0).iter().map(|v| v * 100.0).collect::<Vec<_>>(), x.column(1)]).unwrap();
        let a = Matrix::from_rows(&[[a[(0, 0)] * 100.0, a[(0, 1)] * 100.0], [a[(1, 0)], a[(1, 1)]]]).unwrap();
        let mut cfg = IcaConfig::new(2, 3);
        cfg.prescale = true;
        let m = fast_ica(&x, &cfg).unwrap();
        assert!(amari_index(&m.separating_matrix(), &a).unwrap() < 0.05);
        let xc = center_scale(&x, true, false).unwrap();
        let s_hat = xc.matmul(&m.separating_matrix().transpose()).unwrap();
        assert!(s_hat.sub(&m.sources).unwrap().max_abs() < 1e-8);

        cfg.prescale = false;
        cfg.contrast = Contrast::Cube;
        let m = fast_ica(&x, &cfg).unwrap();
        assert!(amari_index(&m.separating_matrix(), &a).unwrap() < 0.05);
    }
}
