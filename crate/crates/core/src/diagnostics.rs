//! Screening statistics: autocorrelation, discretised mutual information
//! and Moran's I.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::par::{derive_seed, Execution};

pub const DEFAULT_MI_BINS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("series is constant")]
    ConstantSeries,
    #[error("series of length {len} is too short for max lag {max_lag}")]
    TooShort { len: usize, max_lag: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} observations")]
    TooFewObservations(usize),
    #[error("need at least 2 bins")]
    TooFewBins,
    #[error("all values identical")]
    DegenerateRange,
    #[error("field is constant")]
    ConstantField,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcfResult {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub n: usize,
    /// ±1.96/√n
    pub conf_band: f64,
}

/// Biased sample autocorrelation (denominator n, full-series mean).
pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfResult, DiagnosticsError> {
    let n = series.len();
    if n < max_lag + 2 {
        return Err(DiagnosticsError::TooShort { len: n, max_lag });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return Err(DiagnosticsError::ConstantSeries);
    }
    let values = (0..=max_lag)
        .map(|h| {
            if h == 0 {
                return 1.0;
            }
            let num: f64 = dev[..n - h].iter().zip(&dev[h..]).map(|(a, b)| a * b).sum();
            (num / denom).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(AcfResult {
        lags: (0..=max_lag).collect(),
        values,
        n,
        conf_band: 1.96 / (n as f64).sqrt(),
    })
}

fn bin_indices(x: &[f64], bins: usize) -> Result<Vec<usize>, DiagnosticsError> {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    if !(hi > lo) {
        return Err(DiagnosticsError::DegenerateRange);
    }
    let span = hi - lo;
    Ok(x
        .iter()
        .map(|v| (((v - lo) / span * bins as f64).floor() as usize).min(bins - 1))
        .collect())
}

/// Histogram plug-in estimate of mutual information in bits, using equal-
/// width bins over each variable's observed range.
pub fn mutual_information_discrete(x: &[f64], y: &[f64], bins: usize) -> Result<f64, DiagnosticsError> {
    if x.len() != y.len() {
        return Err(DiagnosticsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 10 {
        return Err(DiagnosticsError::TooFewObservations(10));
    }
    if bins < 2 {
        return Err(DiagnosticsError::TooFewBins);
    }
    let bx = bin_indices(x, bins)?;
    let by = bin_indices(y, bins)?;
    let n = x.len();
    let mut joint = vec![0usize; bins * bins];
    let mut mx = vec![0usize; bins];
    let mut my = vec![0usize; bins];
    for (i, j) in bx.iter().zip(&by) {
        joint[i * bins + j] += 1;
        mx[*i] += 1;
        my[*j] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            // integer ratio keeps exact independence at exactly zero
            let ratio = (c as u128 * n as u128) as f64 / (mx[i] as u128 * my[j] as u128) as f64;
            mi += (c as f64 / nf) * ratio.log2();
        }
    }
    Ok(mi)
}

/// Pairwise mutual-information matrix over the columns of `x`.
pub fn mutual_information_matrix(x: &Matrix, bins: usize) -> Result<Matrix, DiagnosticsError> {
    let p = x.cols();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let mut m = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = mutual_information_discrete(&cols[i], &cols[j], bins)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Non-negative site weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    weights: Matrix,
}

impl SpatialWeights {
    pub fn new(weights: Matrix) -> Result<Self, DiagnosticsError> {
        if !weights.is_square() {
            return Err(DiagnosticsError::ShapeMismatch("weights must be square".into()));
        }
        if weights.as_slice().iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(DiagnosticsError::InvalidWeights("negative or non-finite entry".into()));
        }
        if weights.diag().iter().any(|w| *w != 0.0) {
            return Err(DiagnosticsError::InvalidWeights("diagonal must be zero".into()));
        }
        if !weights.as_slice().iter().any(|w| *w > 0.0) {
            return Err(DiagnosticsError::InvalidWeights("no positive entry".into()));
        }
        Ok(Self { weights })
    }

    /// Nearest-neighbour weights on a ring of `n` sites.
    pub fn ring(n: usize) -> Result<Self, DiagnosticsError> {
        if n < 3 {
            return Err(DiagnosticsError::ShapeMismatch("a ring needs at least 3 sites".into()));
        }
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            w[(i, (i + 1) % n)] = 1.0;
            w[((i + 1) % n, i)] = 1.0;
        }
        Self::new(w)
    }

    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }
}

pub fn morans_i(values: &[f64], w: &SpatialWeights) -> Result<f64, DiagnosticsError> {
    let n = w.n();
    if values.len() != n {
        return Err(DiagnosticsError::ShapeMismatch(format!(
            "{} values for {n} sites",
            values.len()
        )));
    }
    if n < 3 {
        return Err(DiagnosticsError::ShapeMismatch("need at least 3 sites".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    if ss == 0.0 {
        return Err(DiagnosticsError::ConstantField);
    }
    let wm = &w.weights;
    let mut total = 0.0;
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            let wij = wm[(i, j)];
            total += wij;
            cross += wij * dev[i] * dev[j];
        }
    }
    Ok(n as f64 / total * cross / ss)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationSummary {
    pub mean: f64,
    pub std_error: f64,
    pub replicates: usize,
}

/// Moran's I under random relabelling of `values`; replicate `r` uses the
/// seed `seed + r`.
pub fn morans_i_permutations(
    values: &[f64],
    w: &SpatialWeights,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<PermutationSummary, DiagnosticsError> {
    morans_i(values, w)?;
    let stats: Vec<f64> = exec.map(replicates, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r));
        let mut v = values.to_vec();
        v.shuffle(&mut rng);
        morans_i(&v, w).expect("permutation keeps a valid field")
    });
    let m = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / m;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok(PermutationSummary {
        mean,
        std_error: (var / m).sqrt(),
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn acf_lag_zero_is_one() {
        let r = acf(&[1.0, 3.0, 2.0, 5.0, 4.0], 2).unwrap();
        assert_eq!(r.values[0], 1.0);
        assert_eq!(r.lags, vec![0, 1, 2]);
    }

    #[test]
    fn acf_alternating() {
        let s: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = acf(&s, 1).unwrap();
        // direct summation: 19 products of −1 over a sum of squares of 20
        let oracle = -19.0 / 20.0;
        assert!((r.values[1] - oracle).abs() < 1e-15);
        assert!((r.values[1] + 0.95).abs() < 0.01);
    }

    #[test]
    fn acf_errors() {
        assert_eq!(acf(&[2.0; 10], 3), Err(DiagnosticsError::ConstantSeries));
        assert!(matches!(acf(&[1.0, 2.0, 3.0], 2), Err(DiagnosticsError::TooShort { .. })));
    }

    #[test]
    fn acf_white_noise_mostly_inside_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        let s: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = acf(&s, 20).unwrap();
        let inside = r.values[1..].iter().filter(|v| v.abs() < r.conf_band).count();
        assert!(inside >= 18, "{inside}/20");
        assert!(r.values.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn mi_exact_independence() {
        // every (x, y) pair appears exactly once: p̂ᵢⱼ = p̂ᵢ p̂ⱼ
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                x.push(i as f64);
                y.push(j as f64);
            }
        }
        let mi = mutual_information_discrete(&x, &y, 4).unwrap();
        assert!(mi.abs() < 1e-12);
    }

    #[test]
    fn mi_identity_bits() {
        let x: Vec<f64> = (0..16).map(|v| v as f64).collect();
        assert_eq!(mutual_information_discrete(&x, &x, 2).unwrap(), 1.0);
        assert_eq!(mutual_information_discrete(&x, &x, 4).unwrap(), 2.0);
    }

    #[test]
    fn mi_symmetric_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v + rng.random_range(0.0..0.3)).collect();
        let a = mutual_information_discrete(&x, &y, 8).unwrap();
        let b = mutual_information_discrete(&y, &x, 8).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a >= -1e-12);
    }

    #[test]
    fn mi_errors() {
        let x: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(
            mutual_information_discrete(&x, &x[..11], 4),
            Err(DiagnosticsError::LengthMismatch(12, 11))
        );
        assert_eq!(
            mutual_information_discrete(&x, &[1.0; 12], 4),
            Err(DiagnosticsError::DegenerateRange)
        );
        assert_eq!(mutual_information_discrete(&x, &x, 1), Err(DiagnosticsError::TooFewBins));
    }

    #[test]
    fn morans_ring_checkerboard() {
        let w = SpatialWeights::ring(10).unwrap();
        let v: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((morans_i(&v, &w).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn morans_errors_and_affine_invariance() {
        let w = SpatialWeights::ring(6).unwrap();
        assert_eq!(morans_i(&[3.0; 6], &w), Err(DiagnosticsError::ConstantField));
        assert!(matches!(morans_i(&[1.0, 2.0], &w), Err(DiagnosticsError::ShapeMismatch(_))));
        let v = [0.3, 1.2, -0.4, 2.2, 0.9, 0.1];
        let base = morans_i(&v, &w).unwrap();
        let t: Vec<f64> = v.iter().map(|x| -2.5 * x + 7.0).collect();
        assert!((morans_i(&t, &w).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn weights_validation() {
        assert!(SpatialWeights::new(Matrix::identity(3)).is_err());
        assert!(SpatialWeights::new(Matrix::zeros(3, 3)).is_err());
        let mut w = Matrix::zeros(3, 3);
        w[(0, 1)] = -1.0;
        assert!(SpatialWeights::new(w).is_err());
    }

    #[test]
    fn permutation_mean_near_expectation() {
        let n = 12;
        let w = SpatialWeights::ring(n).unwrap();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + i as f64 * 0.1).collect();
        let s = morans_i_permutations(&v, &w, 1000, 77, Execution::Parallel).unwrap();
        let expected = -1.0 / (n as f64 - 1.0);
        assert!((s.mean - expected).abs() < 3.0 * s.std_error, "{s:?}");
        let seq = morans_i_permutations(&v, &w, 1000, 77, Execution::Sequential).unwrap();
        assert_eq!(s, seq);
    }
}
