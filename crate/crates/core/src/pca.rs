//! Principal component analysis via the eigendecomposition of the
//! covariance (or, when scaled, correlation) matrix.

use std::io::Write;

use thiserror::Error;

use crate::linalg::{center_scale, covariance_matrix, sym_eigen, LinalgError, Matrix};
use crate::numfmt::fixed;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),
    #[error("need at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("need at least 2 columns, got {0}")]
    TooFewColumns(usize),
    #[error("the Kaiser rule needs a model fitted on scaled data")]
    RuleInapplicable,
    #[error("component count {0} out of range")]
    OutOfRange(usize),
    #[error("shape mismatch: expected {expected} columns, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(LinalgError),
}

impl From<LinalgError> for PcaError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::ZeroVarianceColumn(j) => PcaError::ZeroVarianceColumn(j),
            LinalgError::TooFewRows(n) => PcaError::TooFewRows(n),
            other => PcaError::Linalg(other),
        }
    }
}

/// A fitted PCA. All components are kept; truncation is a view.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// variables × components, orthonormal columns
    pub loadings: Matrix,
    /// component standard deviations, descending
    pub stdevs: Vec<f64>,
    pub centered: bool,
    pub scaled: bool,
    pub variable_labels: Vec<String>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl PcaModel {
    /// Builds a model from a known spectrum and loadings.
    pub fn from_parts(
        loadings: Matrix,
        stdevs: Vec<f64>,
        centered: bool,
        scaled: bool,
    ) -> Result<Self, PcaError> {
        let p = loadings.rows();
        if loadings.cols() != stdevs.len() {
            return Err(PcaError::ShapeMismatch {
                expected: loadings.cols(),
                got: stdevs.len(),
            });
        }
        Ok(Self {
            loadings,
            stdevs,
            centered,
            scaled,
            variable_labels: default_labels(p),
            means: vec![0.0; p],
            sds: vec![1.0; p],
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.loadings.rows());
        self.variable_labels = labels;
        self
    }

    pub fn n_components(&self) -> usize {
        self.stdevs.len()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.stdevs.iter().map(|s| s * s).collect()
    }

    /// Number of components with standard deviation strictly above 1.
    pub fn kaiser_retain(&self) -> Result<usize, PcaError> {
        if !self.scaled {
            return Err(PcaError::RuleInapplicable);
        }
        Ok(kaiser_count(&self.stdevs))
    }

    /// Fraction of total variance carried by the first `k` components.
    pub fn explained_variance(&self, k: usize) -> Result<f64, PcaError> {
        explained_fraction(&self.stdevs, k)
    }

    /// The transform applied to raw rows before rotation: `(x − mean) / sd`.
    pub fn preprocess(&self, x: &Matrix) -> Result<Matrix, PcaError> {
        let p = self.loadings.rows();
        if x.cols() != p {
            return Err(PcaError::ShapeMismatch {
                expected: p,
                got: x.cols(),
            });
        }
        let mut z = x.clone();
        for i in 0..z.rows() {
            for j in 0..p {
                let mut v = z[(i, j)];
                if self.centered {
                    v -= self.means[j];
                }
                if self.scaled {
                    v /= self.sds[j];
                }
                z[(i, j)] = v;
            }
        }
        Ok(z)
    }

    /// Projects `x` onto every component.
    pub fn scores(&self, x: &Matrix) -> Result<Matrix, PcaError> {
        Ok(self.preprocess(x)?.matmul(&self.loadings)?)
    }

    /// Linear map from raw (centered) variables to the first `k` scores:
    /// `loadings_kᵀ · diag(1/sd)`.
    pub fn unmixing(&self, k: usize) -> Result<Matrix, PcaError> {
        if k == 0 || k > self.n_components() {
            return Err(PcaError::OutOfRange(k));
        }
        let p = self.loadings.rows();
        let mut w = Matrix::zeros(k, p);
        for c in 0..k {
            for j in 0..p {
                let s = if self.scaled { self.sds[j] } else { 1.0 };
                w[(c, j)] = self.loadings[(j, c)] / s;
            }
        }
        Ok(w)
    }

    /// Writes a loadings table: one row per variable, one column per
    /// component, and a final `total_stdev` row. Values use 7 decimals.
    pub fn write_loadings_csv<W: Write>(&self, out: &mut W, k: usize) -> std::io::Result<()> {
        let k = k.clamp(1, self.n_components());
        let mut header = vec!["variable".to_string()];
        header.extend((1..=k).map(|c| format!("PC{c}")));
        writeln!(out, "{}", header.join(","))?;
        for (j, label) in self.variable_labels.iter().enumerate() {
            let mut row = vec![csv_field(label)];
            row.extend((0..k).map(|c| fixed(self.loadings[(j, c)], 7)));
            writeln!(out, "{}", row.join(","))?;
        }
        let mut row = vec!["total_stdev".to_string()];
        row.extend(self.stdevs[..k].iter().map(|s| fixed(*s, 7)));
        writeln!(out, "{}", row.join(","))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn default_labels(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("V{j}")).collect()
}

/// `|{i : stdevᵢ > 1}|`.
pub fn kaiser_count(stdevs: &[f64]) -> usize {
    stdevs.iter().filter(|s| **s > 1.0).count()
}

/// `Σᵢ≤k stdevᵢ² / Σ stdevᵢ²`.
pub fn explained_fraction(stdevs: &[f64], k: usize) -> Result<f64, PcaError> {
    if k == 0 || k > stdevs.len() {
        return Err(PcaError::OutOfRange(k));
    }
    let total: f64 = stdevs.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Ok(1.0);
    }
    let head: f64 = stdevs[..k].iter().map(|s| s * s).sum();
    Ok((head / total).clamp(0.0, 1.0))
}

pub fn fit_pca(x: &Matrix, center: bool, scale: bool) -> Result<PcaModel, PcaError> {
    if x.rows() < 3 {
        return Err(PcaError::TooFewRows(x.rows()));
    }
    if x.cols() < 2 {
        return Err(PcaError::TooFewColumns(x.cols()));
    }
    let z = center_scale(x, center, scale)?;
    let cov = covariance_matrix(&z)?;
    let eig = sym_eigen(&cov)?;
    let stdevs = eig.values.iter().map(|l| l.max(0.0).sqrt()).collect();
    let p = x.cols();
    Ok(PcaModel {
        loadings: eig.vectors,
        stdevs,
        centered: center,
        scaled: scale,
        variable_labels: default_labels(p),
        means: x.column_means(),
        sds: if scale { x.column_stdevs() } else { vec![1.0; p] },
    })
}
