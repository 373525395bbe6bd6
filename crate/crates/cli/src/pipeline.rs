//! Stage execution. Each stage group can run on its own (reading the
//! previous group's CSV) or chained by [`Pipeline::run`].

use std::fs;
use std::path::{Path, PathBuf};

use nitrosep_core::diagnostics::{acf, mutual_information_matrix};
use nitrosep_core::fa::{select_factors, FaModel, ADEQUACY_THRESHOLD};
use nitrosep_core::ica::fast_ica;
use nitrosep_core::ingest::{
    drop_incomplete_rows, emit_csv, fetch_remote, filter_table, parse_csv, parse_rdb, FetchRequest, TimeSeriesTable, Transport,
};
use nitrosep_core::numfmt::sig12;
use nitrosep_core::pca::fit_pca;
use nitrosep_core::preprocess::{annual_mean, difference, drop_na_columns, drop_redundant, AnnualTable, Removal};
use nitrosep_core::{Execution, Matrix};
use serde::Serialize;
use serde_json::json;

use crate::config::{resolve, RunConfig, Stage, StageKind};
use crate::output::{labelled_matrix_csv, matrix_json, num, nums, sha256_hex, CsvTable, OutputDir, OutputRecord};
use crate::CliError;

pub const SERIES_FILE: &str = "timeseries.csv";
pub const ANNUAL_FILE: &str = "preprocessed.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    /// Replaces the configured ICA seed.
    pub seed: Option<u64>,
    /// Cache-only ingestion.
    pub offline: bool,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageCount {
    pub stage: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<StageCount>,
    pub removed_redundant: Vec<Removal>,
    pub variables: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug)]
pub struct Pipeline {
    pub cfg: RunConfig,
    base: PathBuf,
    config_sha256: String,
    opts: Options,
}

impl Pipeline {
    pub fn load(config_path: &Path, opts: Options) -> Result<Self, CliError> {
        let bytes = fs::read(config_path)
            .map_err(|e| CliError::validation("config", format!("{}: {e}", config_path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::validation("config", "not UTF-8"))?;
        let mut cfg = RunConfig::parse(&text)?;
        if let Some(seed) = opts.seed {
            cfg.ica.seed = seed;
        }
        let base = config_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Ok(Self {
            cfg,
            base,
            config_sha256: sha256_hex(&bytes),
            opts,
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        resolve(&self.base, &self.cfg.output_dir)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve(&self.base, p)
    }

    fn stages(&self, kind: StageKind) -> impl Iterator<Item = Stage> + '_ {
        self.cfg.pipeline.iter().copied().filter(move |s| s.kind() == kind)
    }

    fn transport(&self) -> Option<&'static dyn Transport> {
        if self.opts.offline {
            return None;
        }
        #[cfg(feature = "http")]
        {
            static HTTP: nitrosep_core::ingest::UreqTransport = nitrosep_core::ingest::UreqTransport;
            Some(&HTTP)
        }
        #[cfg(not(feature = "http"))]
        None
    }

    fn read_input(&self) -> Result<TimeSeriesTable, CliError> {
        let err = |e: nitrosep_core::ingest::IngestError| CliError::runtime("ingest", e);
        if let Some(path) = &self.cfg.input.path {
            let path = self.resolve(path);
            let file = fs::File::open(&path).map_err(|e| CliError::runtime("ingest", format!("{}: {e}", path.display())))?;
            let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            return if is_csv { parse_csv(file) } else { parse_rdb(file) }.map_err(err);
        }
        let remote = self.cfg.input.remote.as_ref().expect("validated: path or remote");
        let req = FetchRequest {
            site: remote.site.clone(),
            codes: remote.codes.clone(),
            start: remote.start,
            end: remote.end,
        };
        let bytes = fetch_remote(&req, &remote.url_template, &self.resolve(&remote.cache_dir), self.transport()).map_err(err)?;
        parse_rdb(bytes.as_slice()).map_err(err)
    }

    /// Dated-table stages (`ingest`, `filter`, `drop_incomplete_rows`).
    pub fn series_stages(&self, counts: &mut Vec<StageCount>) -> Result<TimeSeriesTable, CliError> {
        let mut table: Option<TimeSeriesTable> = None;
        for stage in self.stages(StageKind::Series) {
            let t = match stage {
                Stage::Ingest => self.read_input()?,
                Stage::Filter => {
                    let spec = self.cfg.filter.as_ref().expect("validated: filter section");
                    filter_table(table.as_ref().expect("ingest runs first"), spec)
                        .map_err(|e| CliError::runtime(stage.name(), e))?
                }
                Stage::DropIncompleteRows => drop_incomplete_rows(table.as_ref().expect("ingest runs first"))
                    .map_err(|e| CliError::runtime(stage.name(), e))?,
                _ => unreachable!("not a dated-table stage"),
            };
            counts.push(StageCount {
                stage: stage.name().into(),
                rows: t.n_rows(),
                cols: t.n_vars(),
            });
            table = Some(t);
        }
        Ok(table.expect("pipeline starts with ingest"))
    }

    /// Annual-table stages; `removals` lists composites pruned by the
    /// redundancy rules.
    pub fn annual_stages(
        &self,
        t: &TimeSeriesTable,
        counts: &mut Vec<StageCount>,
    ) -> Result<(AnnualTable, Vec<Removal>), CliError> {
        let mut table: Option<AnnualTable> = None;
        let mut removals = Vec::new();
        for stage in self.stages(StageKind::Annual) {
            let err = |e: nitrosep_core::preprocess::PreprocessError| CliError::runtime(stage.name(), e);
            let a = match (stage, table.as_ref()) {
                (Stage::AnnualMean, _) => annual_mean(t),
                (Stage::DropNaColumns, Some(a)) => drop_na_columns(a).map_err(err)?,
                (Stage::DropRedundant, Some(a)) => {
                    let (pruned, removed) = drop_redundant(a, &self.cfg.rules());
                    removals = removed;
                    pruned
                }
                (Stage::Difference, Some(a)) => difference(a, self.cfg.preprocess.difference_lag).map_err(err)?,
                _ => unreachable!("validated stage order"),
            };
            counts.push(StageCount {
                stage: stage.name().into(),
                rows: a.n_rows(),
                cols: a.n_vars(),
            });
            table = Some(a);
        }
        let table = table.ok_or_else(|| CliError::validation("pipeline", "no `annual_mean` stage"))?;
        Ok((table, removals))
    }

    pub fn analyses(&self, a: &AnnualTable, out: &mut OutputDir) -> Result<(), CliError> {
        for stage in self.stages(StageKind::Analysis) {
            self.analysis(stage, a, out)?;
        }
        Ok(())
    }

    pub fn analysis(&self, stage: Stage, a: &AnnualTable, out: &mut OutputDir) -> Result<(), CliError> {
        let x = a.to_matrix().map_err(|e| CliError::runtime(stage.name(), e))?;
        let codes: Vec<String> = a.codes().iter().map(|c| c.to_string()).collect();
        match stage {
            Stage::Pca => self.pca(&x, &codes, out),
            Stage::Ica => self.ica(&x, a.years(), &codes, out),
            Stage::Fa => self.fa(&x, &codes, out),
            Stage::Diagnose => self.diagnose(&x, &codes, out),
            _ => unreachable!("not an analysis stage"),
        }
    }

    fn pca(&self, x: &Matrix, codes: &[String], out: &mut OutputDir) -> Result<(), CliError> {
        let err = |e: nitrosep_core::pca::PcaError| CliError::runtime("pca", e);
        let c = &self.cfg.pca;
        let model = fit_pca(x, c.center, c.scale).map_err(err)?.with_labels(codes.to_vec());
        let kaiser = model.kaiser_retain().ok();
        let shown = c.components.or(kaiser).unwrap_or(model.n_components()).clamp(1, model.n_components());
        let mut table = Vec::new();
        model
            .write_loadings_csv(&mut table, shown)
            .map_err(|e| CliError::runtime("pca", e))?;
        out.write("pca", "pca_loadings.csv", &table)?;
        let cumulative: Vec<f64> = (1..=model.n_components())
            .map(|k| model.explained_variance(k))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        out.write_json(
            "pca",
            "pca_summary.json",
            &json!({
                "center": c.center,
                "scale": c.scale,
                "stdevs": nums(&model.stdevs),
                "kaiser_retained": kaiser,
                "table_components": shown,
                "cumulative_explained_variance": nums(&cumulative),
            }),
        )
    }

    fn ica(&self, x: &Matrix, years: &[i32], codes: &[String], out: &mut OutputDir) -> Result<(), CliError> {
        let model = fast_ica(x, &self.cfg.ica).map_err(|e| CliError::runtime("ica", e))?;
        let c = model.sources.cols();
        let ic: Vec<String> = (1..=c).map(|j| format!("IC{j}")).collect();
        let years: Vec<String> = years.iter().map(|y| y.to_string()).collect();
        out.write("ica", "ica_sources.csv", &labelled_matrix_csv("year", &years, &ic, &model.sources))?;
        out.write("ica", "ica_mixing.csv", &labelled_matrix_csv("variable", codes, &ic, &model.mixing))?;
        out.write_json(
            "ica",
            "ica_summary.json",
            &json!({
                "n_components": c,
                "seed": self.cfg.ica.seed,
                "contrast": self.cfg.ica.contrast,
                "converged": model.converged,
                "iterations": model.iterations,
                "final_delta": model.final_delta().map(num),
                "delta_history": nums(&model.delta_history),
                "separating_matrix": matrix_json(&model.separating_matrix()),
            }),
        )
    }

    fn fa(&self, x: &Matrix, codes: &[String], out: &mut OutputDir) -> Result<(), CliError> {
        let c = &self.cfg.fa;
        let (selection, models) =
            select_factors(x, c.k_max, c.alpha, self.opts.execution).map_err(|e| CliError::runtime("fa", e))?;
        let mut tests = CsvTable::new(&["k", "statistic", "dof", "p_value", "converged", "heywood", "max_abs_residual"]);
        let mut per_k = Vec::new();
        for m in &models {
            write_fa_model(m, codes, out)?;
            let p = m.p_value.map(sig12).unwrap_or_else(|| "NA".into());
            tests.row(&[
                m.k.to_string(),
                sig12(m.statistic),
                m.dof.to_string(),
                p,
                m.converged.to_string(),
                m.heywood.to_string(),
                sig12(m.max_offdiag_residual()),
            ]);
            per_k.push(json!({
                "k": m.k,
                "statistic": num(m.statistic),
                "dof": m.dof,
                "p_value": m.p_value.map(num),
                "converged": m.converged,
                "heywood": m.heywood,
                "iterations": m.iterations,
                "max_abs_residual": num(m.max_offdiag_residual()),
                "residual_adequate": m.is_adequate(ADEQUACY_THRESHOLD),
            }));
        }
        out.write("fa", "fa_tests.csv", &tests.into_bytes())?;
        let verdict = if selection.adequate {
            format!("{} factor(s) adequate at alpha = {}", selection.k, c.alpha)
        } else {
            format!("no model with k <= {} reaches p > {}; largest k reported", c.k_max, c.alpha)
        };
        let chosen = &models[selection.k - 1];
        let residual_verdict = if chosen.is_adequate(ADEQUACY_THRESHOLD) { "adequate" } else { "inadequate" };
        out.write_json(
            "fa",
            "fa_summary.json",
            &json!({
                "residual_threshold": num(ADEQUACY_THRESHOLD),
                "residual_verdict": residual_verdict,
                "alpha": num(c.alpha),
                "k_max": c.k_max,
                "n_obs": x.rows(),
                "selected_k": selection.k,
                "adequate": selection.adequate,
                "verdict": verdict,
                "models": per_k,
            }),
        )
    }

    fn diagnose(&self, x: &Matrix, codes: &[String], out: &mut OutputDir) -> Result<(), CliError> {
        let c = &self.cfg.diagnostics;
        let max_lag = c.max_lag.min(x.rows().saturating_sub(2));
        let mut table = CsvTable::new(&["variable", "lag", "acf", "band"]);
        for (j, code) in codes.iter().enumerate() {
            let r = acf(&x.column(j), max_lag).map_err(|e| CliError::runtime("diagnose", format!("variable {code}: {e}")))?;
            for (lag, v) in r.lags.iter().zip(&r.values) {
                table.row(&[code.clone(), lag.to_string(), sig12(*v), sig12(r.conf_band)]);
            }
        }
        out.write("diagnose", "acf.csv", &table.into_bytes())?;
        let mi = mutual_information_matrix(x, c.mi_bins).map_err(|e| CliError::runtime("diagnose", e))?;
        out.write("diagnose", "mi.csv", &labelled_matrix_csv("variable", codes, codes, &mi))
    }

    /// The whole configured pipeline, finishing with the manifest.
    pub fn run(&self) -> Result<Manifest, CliError> {
        let mut out = OutputDir::create(&self.output_dir())?;
        let mut counts = Vec::new();
        let series = self.series_stages(&mut counts)?;
        write_series(&series, &mut out)?;
        let mut removals = Vec::new();
        let mut variables: Vec<String> = series.codes().iter().map(|c| c.to_string()).collect();
        if self.cfg.has(Stage::AnnualMean) {
            let (annual, removed) = self.annual_stages(&series, &mut counts)?;
            write_annual(&annual, &mut out)?;
            self.analyses(&annual, &mut out)?;
            removals = removed;
            variables = annual.codes().iter().map(|c| c.to_string()).collect();
        }
        let manifest = Manifest {
            tool: "nitrosep".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.config_sha256.clone(),
            seed: self.cfg.ica.seed,
            stages: counts,
            removed_redundant: removals,
            variables,
            outputs: out.records().to_vec(),
        };
        out.write_json("manifest", MANIFEST_FILE, &manifest)?;
        Ok(manifest)
    }

    /// Dated-table stages only; writes `timeseries.csv`.
    pub fn run_ingest(&self) -> Result<Vec<StageCount>, CliError> {
        let mut out = OutputDir::create(&self.output_dir())?;
        let mut counts = Vec::new();
        let series = self.series_stages(&mut counts)?;
        write_series(&series, &mut out)?;
        Ok(counts)
    }

    /// Annual stages on a dated CSV (default `<output_dir>/timeseries.csv`);
    /// writes `preprocessed.csv`.
    pub fn run_preprocess(&self, input: Option<&Path>) -> Result<Vec<StageCount>, CliError> {
        let mut out = OutputDir::create(&self.output_dir())?;
        let path = input.map(Path::to_path_buf).unwrap_or_else(|| out.path(SERIES_FILE));
        let file = fs::File::open(&path).map_err(|e| CliError::runtime("preprocess", format!("{}: {e}", path.display())))?;
        let series = parse_csv(file).map_err(|e| CliError::runtime("preprocess", e))?;
        let mut counts = Vec::new();
        let (annual, _) = self.annual_stages(&series, &mut counts)?;
        write_annual(&annual, &mut out)?;
        Ok(counts)
    }

    /// One analysis on an annual CSV (default `<output_dir>/preprocessed.csv`).
    pub fn run_analysis(&self, stage: Stage, input: Option<&Path>) -> Result<(), CliError> {
        let mut out = OutputDir::create(&self.output_dir())?;
        let path = input.map(Path::to_path_buf).unwrap_or_else(|| out.path(ANNUAL_FILE));
        let file = fs::File::open(&path).map_err(|e| CliError::runtime(stage.name(), format!("{}: {e}", path.display())))?;
        let annual = AnnualTable::read_csv(file).map_err(|e| CliError::runtime(stage.name(), e))?;
        self.analysis(stage, &annual, &mut out)
    }
}

fn write_series(t: &TimeSeriesTable, out: &mut OutputDir) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    emit_csv(t, &mut bytes).map_err(|e| CliError::runtime("ingest", e))?;
    out.write("ingest", SERIES_FILE, &bytes)
}

fn write_annual(a: &AnnualTable, out: &mut OutputDir) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    a.write_csv(&mut bytes).map_err(|e| CliError::runtime("preprocess", e))?;
    out.write("preprocess", ANNUAL_FILE, &bytes)
}

fn write_fa_model(m: &FaModel, codes: &[String], out: &mut OutputDir) -> Result<(), CliError> {
    let mut header = vec!["variable".to_string()];
    header.extend((1..=m.k).map(|f| format!("F{f}")));
    header.extend(["uniqueness".to_string(), "communality".to_string()]);
    let mut t = CsvTable::new(&header);
    let communalities = m.communalities();
    for (i, code) in codes.iter().enumerate() {
        let mut row = vec![code.clone()];
        row.extend((0..m.k).map(|f| sig12(m.loadings[(i, f)])));
        row.push(sig12(m.uniquenesses[i]));
        row.push(sig12(communalities[i]));
        t.row(&row);
    }
    out.write("fa", &format!("fa_k{}_loadings.csv", m.k), &t.into_bytes())?;
    out.write(
        "fa",
        &format!("fa_k{}_residual.csv", m.k),
        &labelled_matrix_csv("variable", codes, codes, &m.residual),
    )
}
