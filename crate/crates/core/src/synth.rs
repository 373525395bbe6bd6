//! Synthetic mixtures with known sources and mixing, used to score how well
//! PCA and ICA recover the generating signals.
//!
//! Every random quantity comes from its own ChaCha stream keyed by the
//! scenario seed: stream `j + 1` for source `j`, and dedicated streams for
//! the mixing matrix and the noise. Adding a source therefore leaves the
//! existing source columns unchanged.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ica::{amari_index, fast_ica, IcaConfig, IcaError, IcaModel};
use crate::linalg::{center_scale, svd, LinalgError, Matrix};
use crate::par::{derive_seed, Execution};
use crate::pca::{fit_pca, PcaError, PcaModel};

const MIXING_STREAM: u64 = 1 << 32;
const NOISE_STREAM: u64 = (1 << 32) + 1;
const MAX_REDRAWS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("no mixing matrix with condition number ≤ {0} after 50 draws")]
    ConditioningFailed(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Ica(#[from] IcaError),
    #[error(transparent)]
    Pca(#[from] PcaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceDistribution {
    Uniform,
    Laplace,
    Gaussian,
}

impl SourceDistribution {
    fn draw<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            // unit variance on [−√3, √3]
            SourceDistribution::Uniform => {
                let h = 3f64.sqrt();
                rng.random_range(-h..h)
            }
            // inverse CDF with scale 1/√2 (unit variance)
            SourceDistribution::Laplace => {
                let u: f64 = rng.random_range(-0.5..0.5);
                let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                -u.signum() * tail.ln() / std::f64::consts::SQRT_2
            }
            SourceDistribution::Gaussian => StandardNormal.sample(rng),
        }
    }
}

impl fmt::Display for SourceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceDistribution::Uniform => "uniform",
            SourceDistribution::Laplace => "laplace",
            SourceDistribution::Gaussian => "gaussian",
        })
    }
}

impl FromStr for SourceDistribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "laplace" => Ok(Self::Laplace),
            "gaussian" | "normal" => Ok(Self::Gaussian),
            other => Err(format!("unknown distribution {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    /// rows × k, standardised columns
    pub sources: Matrix,
    /// p × k
    pub mixing: Matrix,
    pub noise_sd: f64,
    pub distributions: Vec<SourceDistribution>,
    pub seed: u64,
    /// rows × p = sources · mixingᵀ + noise
    pub observed: Matrix,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn condition_number(m: &Matrix) -> Result<f64, LinalgError> {
    let d = svd(m)?;
    let min = *d.sigma.last().expect("non-empty");
    Ok(if min > 0.0 { d.sigma[0] / min } else { f64::INFINITY })
}

pub fn generate_scenario(
    k: usize,
    p: usize,
    rows: usize,
    distributions: &[SourceDistribution],
    mixing_condition_max: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<SyntheticScenario, SynthError> {
    if k == 0 || p < k {
        return Err(SynthError::Invalid(format!("need 1 ≤ k ≤ p, got k={k} p={p}")));
    }
    if rows < 100 {
        return Err(SynthError::Invalid(format!("need at least 100 rows, got {rows}")));
    }
    if distributions.len() != k {
        return Err(SynthError::Invalid(format!(
            "{} distributions for {k} sources",
            distributions.len()
        )));
    }
    if !(noise_sd >= 0.0) {
        return Err(SynthError::Invalid("noise_sd must be non-negative".into()));
    }

    let columns: Vec<Vec<f64>> = distributions
        .iter()
        .enumerate()
        .map(|(j, dist)| {
            let mut rng = stream(seed, j as u64 + 1);
            (0..rows).map(|_| dist.draw(&mut rng)).collect()
        })
        .collect();
    let raw = Matrix::from_columns(&columns)?;
    let sources = center_scale(&raw, true, true)?;

    let mut rng = stream(seed, MIXING_STREAM);
    let mut mixing = None;
    for _ in 0..MAX_REDRAWS {
        let data = (0..p * k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = Matrix::new(p, k, data)?;
        if condition_number(&a)? <= mixing_condition_max {
            mixing = Some(a);
            break;
        }
    }
    let mixing = mixing.ok_or(SynthError::ConditioningFailed(mixing_condition_max))?;

    let mut observed = sources.matmul(&mixing.transpose())?;
    if noise_sd > 0.0 {
        let mut rng = stream(seed, NOISE_STREAM);
        for i in 0..rows {
            for j in 0..p {
                let e: f64 = StandardNormal.sample(&mut rng);
                observed[(i, j)] += noise_sd * e;
            }
        }
    }
    Ok(SyntheticScenario {
        sources,
        mixing,
        noise_sd,
        distributions: distributions.to_vec(),
        seed,
        observed,
    })
}

#[derive(Debug, Clone, Copy)]
pub enum FittedModel<'a> {
    Ica(&'a IcaModel),
    Pca(&'a PcaModel),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub amari: f64,
    /// |corr| of each true source with its greedily matched component
    pub best_match: Vec<f64>,
    pub min_best_match: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Greedy one-to-one pairing by largest |corr|; returns the pairs' |corr|
/// indexed by true source.
fn greedy_match(truth: &Matrix, recovered: &Matrix) -> Vec<f64> {
    let k = truth.cols();
    let m = recovered.cols();
    let t: Vec<Vec<f64>> = (0..k).map(|j| truth.column(j)).collect();
    let r: Vec<Vec<f64>> = (0..m).map(|j| recovered.column(j)).collect();
    let mut corr = vec![vec![0.0; m]; k];
    for i in 0..k {
        for j in 0..m {
            corr[i][j] = pearson(&t[i], &r[j]).abs();
        }
    }
    let mut out = vec![0.0; k];
    let mut used_t = vec![false; k];
    let mut used_r = vec![false; m];
    for _ in 0..k.min(m) {
        let mut best = (0, 0, -1.0);
        for i in (0..k).filter(|&i| !used_t[i]) {
            for j in (0..m).filter(|&j| !used_r[j]) {
                if corr[i][j] > best.2 {
                    best = (i, j, corr[i][j]);
                }
            }
        }
        used_t[best.0] = true;
        used_r[best.1] = true;
        out[best.0] = best.2;
    }
    out
}

pub fn evaluate_recovery(scenario: &SyntheticScenario, model: FittedModel<'_>) -> Result<RecoveryReport, SynthError> {
    let k = scenario.sources.cols();
    let p = scenario.observed.cols();
    let (unmixing, recovered) = match model {
        FittedModel::Ica(m) => {
            let w = m.separating_matrix();
            if w.cols() != p || m.sources.rows() != scenario.sources.rows() {
                return Err(SynthError::ShapeMismatch("ICA model was not fitted on this scenario".into()));
            }
            (w, m.sources.clone())
        }
        FittedModel::Pca(m) => {
            if m.loadings.rows() != p || m.n_components() < k {
                return Err(SynthError::ShapeMismatch("PCA model was not fitted on this scenario".into()));
            }
            let scores = m.scores(&scenario.observed)?.leading_columns(k);
            (m.unmixing(k)?, scores)
        }
    };
    if unmixing.rows() != k {
        return Err(SynthError::ShapeMismatch(format!(
            "{} recovered components for {k} sources",
            unmixing.rows()
        )));
    }
    let amari = amari_index(&unmixing, &scenario.mixing)?;
    let best_match = greedy_match(&scenario.sources, &recovered);
    let min_best_match = best_match.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RecoveryReport {
        amari,
        best_match,
        min_best_match,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ica,
    Pca,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ica => "ica",
            Method::Pca => "pca",
        })
    }
}

/// One replicate: generate, fit, score.
pub fn run_replicate(
    distributions: &[SourceDistribution],
    p: usize,
    rows: usize,
    condition_max: f64,
    noise_sd: f64,
    method: Method,
    ica: &IcaConfig,
    seed: u64,
) -> Result<RecoveryReport, SynthError> {
    let k = distributions.len();
    let sc = generate_scenario(k, p, rows, distributions, condition_max, noise_sd, seed)?;
    match method {
        Method::Ica => {
            let cfg = IcaConfig {
                n_components: k,
                seed,
                ..ica.clone()
            };
            let m = fast_ica(&sc.observed, &cfg)?;
            evaluate_recovery(&sc, FittedModel::Ica(&m))
        }
        Method::Pca => {
            let m = fit_pca(&sc.observed, true, false)?;
            evaluate_recovery(&sc, FittedModel::Pca(&m))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub distribution_sets: Vec<Vec<SourceDistribution>>,
    pub noise_levels: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    pub rows: usize,
    /// Observed variables; defaults to the source count when zero.
    pub variables: usize,
    pub condition_max: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        use SourceDistribution::*;
        Self {
            distribution_sets: vec![vec![Uniform, Uniform], vec![Laplace, Laplace], vec![Uniform, Laplace, Laplace], vec![Gaussian, Gaussian]],
            noise_levels: vec![0.0, 0.1, 0.5],
            seeds: 10,
            base_seed: 1,
            rows: 2000,
            variables: 0,
            condition_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub distributions: String,
    pub noise_sd: f64,
    pub method: Method,
    pub amari_mean: f64,
    pub amari_min: f64,
    pub amari_max: f64,
    pub seeds: usize,
}

/// distribution set × noise × method grid, each cell averaged over seeds
/// `base_seed + r`. Replicates run under `exec`; the output order is fixed.
pub fn sweep(cfg: &SweepConfig, ica: &IcaConfig, exec: Execution) -> Result<Vec<SweepRow>, SynthError> {
    let mut rows = Vec::new();
    for dists in &cfg.distribution_sets {
        let p = if cfg.variables == 0 { dists.len() } else { cfg.variables };
        for &noise in &cfg.noise_levels {
            for method in [Method::Ica, Method::Pca] {
                let results: Result<Vec<f64>, SynthError> = exec
                    .map(cfg.seeds, |r| {
                        run_replicate(dists, p, cfg.rows, cfg.condition_max, noise, method, ica, derive_seed(cfg.base_seed, r))
                            .map(|rep| rep.amari)
                    })
                    .into_iter()
                    .collect();
                let a = results?;
                let n = a.len().max(1) as f64;
                rows.push(SweepRow {
                    distributions: dists.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("+"),
                    noise_sd: noise,
                    method,
                    amari_mean: a.iter().sum::<f64>() / n,
                    amari_min: a.iter().cloned().fold(f64::INFINITY, f64::min),
                    amari_max: a.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    seeds: a.len(),
                });
            }
        }
    }
    Ok(rows)
}
