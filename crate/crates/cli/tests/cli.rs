use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nitrosep_core::ingest::{cache_key, parse_csv, FetchRequest};
use nitrosep_core::preprocess::AnnualTable;
use tempfile::TempDir;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

fn nitrosep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nitrosep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies the bundled fixture into a fresh directory, optionally editing
/// the config text.
fn workspace(edit: impl Fn(String) -> String) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(Path::new(FIXTURES).join("site.rdb"), dir.path().join("site.rdb")).unwrap();
    let cfg = edit(fs::read_to_string(Path::new(FIXTURES).join("fixture.toml")).unwrap());
    let path = dir.path().join("run.toml");
    fs::write(&path, cfg).unwrap();
    (dir, path)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn full_run_writes_every_output() {
    let (dir, cfg) = workspace(|s| s);
    let o = nitrosep(&["run", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let names: Vec<String> = read_dir_sorted(&out).into_iter().map(|(n, _)| n).collect();
    for want in [
        "timeseries.csv",
        "preprocessed.csv",
        "pca_loadings.csv",
        "pca_summary.json",
        "ica_sources.csv",
        "ica_mixing.csv",
        "ica_summary.json",
        "fa_k1_loadings.csv",
        "fa_k3_residual.csv",
        "fa_tests.csv",
        "fa_summary.json",
        "acf.csv",
        "mi.csv",
        "manifest.json",
    ] {
        assert!(names.iter().any(|n| n == want), "missing {want}: {names:?}");
    }

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), names.len() - 1);
    for rec in outputs {
        let bytes = fs::read(out.join(rec["file"].as_str().unwrap())).unwrap();
        assert_eq!(rec["sha256"].as_str().unwrap(), nitrosep_cli::output::sha256_hex(&bytes));
    }
    let config_bytes = fs::read(&cfg).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap(), nitrosep_cli::output::sha256_hex(&config_bytes));
    let keys: Vec<&String> = manifest.as_object().unwrap().keys().collect();
    assert_eq!(
        keys,
        ["config_sha256", "outputs", "removed_redundant", "seed", "stages", "tool", "variables", "version"]
    );
}

#[test]
fn outputs_reparse() {
    let (dir, cfg) = workspace(|s| s);
    assert!(nitrosep(&["run", cfg.to_str().unwrap()]).status.success());
    let out = dir.path().join("out");
    let series = parse_csv(fs::File::open(out.join("timeseries.csv")).unwrap()).unwrap();
    assert_eq!((series.n_rows(), series.n_vars()), (468, 30));
    let annual = AnnualTable::read_csv(fs::File::open(out.join("preprocessed.csv")).unwrap()).unwrap();
    assert_eq!((annual.n_rows(), annual.n_vars()), (39, 11));
    for (name, bytes) in read_dir_sorted(&out) {
        if name.ends_with(".json") {
            serde_json::from_slice::<serde_json::Value>(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        } else {
            let mut r = csv::Reader::from_reader(bytes.as_slice());
            let width = r.headers().unwrap().len();
            for rec in r.records() {
                assert_eq!(rec.unwrap().len(), width, "{name}");
            }
        }
    }
    let loadings = fs::read_to_string(out.join("pca_loadings.csv")).unwrap();
    assert!(loadings.lines().last().unwrap().starts_with("total_stdev,"));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("fa_summary.json")).unwrap()).unwrap();
    assert!(summary["residual_verdict"] == "adequate" || summary["residual_verdict"] == "inadequate");
}

#[test]
fn stages_run_independently() {
    let (dir, cfg) = workspace(|s| s);
    let cfg = cfg.to_str().unwrap();
    for sub in ["ingest", "preprocess", "pca", "ica", "fa", "diagnose"] {
        let o = nitrosep(&[sub, cfg]);
        assert!(o.status.success(), "{sub}: {}", stderr(&o));
    }
    let staged = dir.path().join("out");
    let (full_dir, full_cfg) = workspace(|s| s);
    assert!(nitrosep(&["run", full_cfg.to_str().unwrap()]).status.success());
    // the RDB carries 4 decimals, so the dated CSV round-trips exactly
    for f in ["timeseries.csv", "preprocessed.csv"] {
        assert_eq!(
            fs::read(staged.join(f)).unwrap(),
            fs::read(full_dir.path().join("out").join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(staged.join("mi.csv").exists() && staged.join("fa_tests.csv").exists());
}

#[test]
fn difference_before_annual_mean_is_a_validation_error() {
    let (dir, cfg) = workspace(|s| s.replace("\"annual_mean\", \"drop_na_columns\", \"drop_redundant\", \"difference\"", "\"difference\", \"annual_mean\", \"drop_na_columns\", \"drop_redundant\""));
    let o = nitrosep(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("difference"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_is_a_validation_error() {
    let (_dir, cfg) = workspace(|s| s.replace("[fa]\n", "[fa]\nrotation = \"varimax\"\n"));
    let o = nitrosep(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rotation"), "{}", stderr(&o));
}

#[test]
fn runtime_errors_exit_3_and_name_the_stage() {
    let (_dir, cfg) = workspace(|s| s.replace("path = \"site.rdb\"", "path = \"absent.rdb\""));
    let o = nitrosep(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ingest"), "{}", stderr(&o));

    // a required variable nobody measured leaves no rows
    let (_dir, cfg) = workspace(|s| s.replace("required_variable = \"00618\"", "required_variable = \"99999\""));
    let o = nitrosep(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("filter"), "{}", stderr(&o));
}

#[test]
fn seed_flag_overrides_config() {
    let (dir, cfg) = workspace(|s| s);
    assert!(nitrosep(&["run", cfg.to_str().unwrap(), "--seed", "5"]).status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/ica_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
}

fn remote_config(s: String) -> String {
    s.replace(
        "path = \"site.rdb\"",
        "[input.remote]\nsite = \"01000000\"\ncodes = [\"00618\"]\nstart = \"1978-01-01\"\nend = \"2021-12-31\"\nurl_template = \"http://127.0.0.1:9/rdb?site={site}&parm={codes}&begin={start}&end={end}\"\ncache_dir = \"cache\"",
    )
}

#[test]
fn offline_uses_cache_only() {
    let (dir, cfg) = workspace(remote_config);
    let o = nitrosep(&["run", cfg.to_str().unwrap(), "--offline"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("network unavailable"), "{}", stderr(&o));

    let req = FetchRequest {
        site: "01000000".into(),
        codes: vec!["00618".into()],
        start: "1978-01-01".parse().unwrap(),
        end: "2021-12-31".parse().unwrap(),
    };
    fs::create_dir_all(dir.path().join("cache")).unwrap();
    fs::copy(dir.path().join("site.rdb"), dir.path().join("cache").join(format!("{}.rdb", cache_key(&req)))).unwrap();
    let o = nitrosep(&["run", cfg.to_str().unwrap(), "--offline"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_bench_writes_sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(
        &cfg,
        "[sweep]\ndistribution_sets = [[\"uniform\", \"laplace\"], [\"gaussian\", \"gaussian\"]]\nnoise_levels = [0.0, 0.5]\nseeds = 3\nrows = 400\n",
    )
    .unwrap();
    let out = dir.path().join("bench.csv");
    let o = nitrosep(&["synth-bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);

    let seq = dir.path().join("seq.csv");
    let o = nitrosep(&["synth-bench", "--config", cfg.to_str().unwrap(), "--out", seq.to_str().unwrap(), "--sequential"]);
    assert!(o.status.success());
    assert_eq!(fs::read(&seq).unwrap(), text.as_bytes());

    let o = nitrosep(&["synth-bench", "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
