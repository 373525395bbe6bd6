//! Run configuration (TOML).
//!
//! ```toml
//! output_dir = "out"
//! pipeline = ["ingest", "filter", "annual_mean", "drop_na_columns",
//!             "drop_redundant", "difference", "pca", "ica", "fa", "diagnose"]
//!
//! [input]
//! path = "site.rdb"
//!
//! [filter]
//! min_count = 100
//! start = "1980-01-01"
//! end = "2019-12-31"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nitrosep_core::diagnostics::DEFAULT_MI_BINS;
use nitrosep_core::ica::IcaConfig;
use nitrosep_core::ingest::FilterSpec;
use nitrosep_core::preprocess::{default_nitrogen_rules, RedundancyRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Filter,
    DropIncompleteRows,
    AnnualMean,
    DropNaColumns,
    DropRedundant,
    Difference,
    Pca,
    Ica,
    Fa,
    Diagnose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    /// operates on the dated table
    Series,
    /// operates on the annual table
    Annual,
    /// consumes the final annual table
    Analysis,
}

impl Stage {
    pub fn kind(self) -> StageKind {
        use Stage::*;
        match self {
            Ingest | Filter | DropIncompleteRows => StageKind::Series,
            AnnualMean | DropNaColumns | DropRedundant | Difference => StageKind::Annual,
            Pca | Ica | Fa | Diagnose => StageKind::Analysis,
        }
    }

    pub fn name(self) -> &'static str {
        use Stage::*;
        match self {
            Ingest => "ingest",
            Filter => "filter",
            DropIncompleteRows => "drop_incomplete_rows",
            AnnualMean => "annual_mean",
            DropNaColumns => "drop_na_columns",
            DropRedundant => "drop_redundant",
            Difference => "difference",
            Pca => "pca",
            Ica => "ica",
            Fa => "fa",
            Diagnose => "diagnose",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteInput {
    pub site: String,
    pub codes: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// `{site}`, `{codes}`, `{start}` and `{end}` are substituted.
    pub url_template: String,
    pub cache_dir: PathBuf,
}

/// Exactly one of `path` (an `.rdb` or `.csv` file) or `remote`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub remote: Option<RemoteInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub difference_lag: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { difference_lag: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub center: bool,
    pub scale: bool,
    /// Columns in the loadings table; defaults to the Kaiser count on
    /// scaled fits and to all components otherwise.
    pub components: Option<usize>,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            center: true,
            scale: true,
            components: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaConfig {
    pub k_max: usize,
    pub alpha: f64,
}

impl Default for FaConfig {
    fn default() -> Self {
        Self { k_max: 3, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub max_lag: usize,
    pub mi_bins: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            max_lag: 10,
            mi_bins: DEFAULT_MI_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub output_dir: PathBuf,
    pub pipeline: Vec<Stage>,
    #[serde(default)]
    pub filter: Option<FilterSpec>,
    /// Omitted means the built-in nitrogen rules; an empty list disables
    /// pruning.
    #[serde(default)]
    pub redundancy_rules: Option<Vec<RedundancyRule>>,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub pca: PcaConfig,
    #[serde(default)]
    pub ica: IcaConfig,
    #[serde(default)]
    pub fa: FaConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::validation("config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rules(&self) -> Vec<RedundancyRule> {
        self.redundancy_rules.clone().unwrap_or_else(default_nitrogen_rules)
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.pipeline.contains(&stage)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::validation("config", m));
        match (&self.input.path, &self.input.remote) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return bad("input needs exactly one of `path` or `remote`".into()),
        }
        if let Some(r) = &self.input.remote {
            if r.codes.is_empty() {
                return bad("input.remote.codes is empty".into());
            }
            if r.start > r.end {
                return bad(format!("input.remote.start {} is after end {}", r.start, r.end));
            }
        }
        validate_order(&self.pipeline)?;
        if self.has(Stage::Filter) {
            match &self.filter {
                Some(f) => f.validate().map_err(|e| CliError::validation("filter", e.to_string()))?,
                None => return bad("stage `filter` needs a [filter] section".into()),
            }
        }
        for rule in self.rules() {
            rule.validate().map_err(|e| CliError::validation("drop_redundant", e))?;
        }
        if self.preprocess.difference_lag == 0 {
            return bad("preprocess.difference_lag must be at least 1".into());
        }
        if let Some(0) = self.pca.components {
            return bad("pca.components must be at least 1".into());
        }
        self.ica.validate().map_err(|e| CliError::validation("ica", e.to_string()))?;
        if self.fa.k_max == 0 {
            return bad("fa.k_max must be at least 1".into());
        }
        if !(self.fa.alpha > 0.0 && self.fa.alpha < 1.0) {
            return bad("fa.alpha must lie in (0, 1)".into());
        }
        if self.diagnostics.max_lag == 0 {
            return bad("diagnostics.max_lag must be at least 1".into());
        }
        if self.diagnostics.mi_bins < 2 {
            return bad("diagnostics.mi_bins must be at least 2".into());
        }
        Ok(())
    }
}

/// `ingest` first, each stage at most once, dated-table stages before
/// `annual_mean`, annual-table stages after it, analyses last.
pub fn validate_order(pipeline: &[Stage]) -> Result<(), CliError> {
    let bad = |m: String| Err(CliError::validation("pipeline", m));
    if pipeline.first() != Some(&Stage::Ingest) {
        return bad("the first stage must be `ingest`".into());
    }
    for (i, s) in pipeline.iter().enumerate() {
        if pipeline[..i].contains(s) {
            return bad(format!("stage `{s}` appears twice"));
        }
    }
    let annual_at = pipeline.iter().position(|s| *s == Stage::AnnualMean);
    let mut seen_analysis = false;
    for (i, s) in pipeline.iter().enumerate() {
        match s.kind() {
            StageKind::Series => {
                if annual_at.is_some_and(|a| i > a) {
                    return bad(format!("`{s}` works on dated rows and must precede `annual_mean`"));
                }
            }
            StageKind::Annual => {
                if annual_at.is_none_or(|a| i < a) {
                    return bad(format!("`{s}` must come after `annual_mean`"));
                }
            }
            StageKind::Analysis => {
                if annual_at.is_none() {
                    return bad(format!("`{s}` needs `annual_mean` earlier in the pipeline"));
                }
                seen_analysis = true;
                continue;
            }
        }
        if seen_analysis {
            return bad(format!("table stage `{s}` follows an analysis stage"));
        }
    }
    Ok(())
}

/// Resolves `p` against the directory holding the config file.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
