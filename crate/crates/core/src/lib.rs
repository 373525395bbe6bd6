//! Source-apportionment toolkit for irregular water-quality records.
//!
//! The pipeline ingests USGS-style records ([`ingest`]), aggregates and
//! differences them ([`preprocess`]), and fits three decompositions over the
//! result: principal components ([`pca`]), FastICA ([`ica`]) and
//! maximum-likelihood factor analysis ([`fa`]). [`diagnostics`] holds the
//! autocorrelation, mutual-information and Moran's I checks, and [`synth`]
//! builds mixtures with known ground truth to score how well each method
//! separates sources.

pub mod ingest;
pub mod linalg;
pub mod numfmt;
pub mod par;
pub mod preprocess;
pub mod pca;
pub mod ica;
pub mod fa;
pub mod diagnostics;
pub mod synth;

pub use linalg::{EigenDecomposition, LinalgError, Matrix, SvdDecomposition};
pub use par::Execution;
