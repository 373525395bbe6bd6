use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nitrosep_cli::config::Stage;
use nitrosep_cli::pipeline::{Options, Pipeline};
use nitrosep_cli::{synth_bench, CliError};
use nitrosep_core::Execution;

/// Source apportionment of water-quality records: ingest, aggregate,
/// decompose (PCA, ICA, factor analysis) and diagnose.
#[derive(Debug, Parser)]
#[command(name = "nitrosep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Never touch the network; remote inputs must already be cached.
    #[arg(long, global = true)]
    offline: bool,
    /// Run replicate loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full pipeline as configured, ending with manifest.json.
    Run { config: PathBuf },
    /// Read and filter the input; writes timeseries.csv.
    Ingest { config: PathBuf },
    /// Annual aggregation, pruning and differencing; writes preprocessed.csv.
    Preprocess {
        config: PathBuf,
        /// Dated CSV to read instead of <output_dir>/timeseries.csv.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Principal components of the preprocessed table.
    Pca {
        config: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// FastICA on the preprocessed table.
    Ica {
        config: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Maximum-likelihood factor analysis for k = 1..k_max.
    Fa {
        config: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Autocorrelation and mutual-information tables.
    Diagnose {
        config: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Separation quality of ICA and PCA on synthetic mixtures (CSV).
    SynthBench {
        /// Sweep definition (TOML); built-in grid when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replicates per grid cell.
        #[arg(long)]
        seeds: Option<usize>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let opts = Options {
        seed: cli.seed,
        offline: cli.offline,
        execution: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    let analysis = |config: &PathBuf, stage: Stage, input: Option<PathBuf>| {
        Pipeline::load(config, opts)?.run_analysis(stage, input.as_deref())
    };
    match cli.command {
        Command::Run { config } => {
            let manifest = Pipeline::load(&config, opts)?.run()?;
            for s in &manifest.stages {
                eprintln!("{:<22}{:>6} rows {:>4} vars", s.stage, s.rows, s.cols);
            }
            Ok(())
        }
        Command::Ingest { config } => Pipeline::load(&config, opts)?.run_ingest().map(drop),
        Command::Preprocess { config, input } => Pipeline::load(&config, opts)?.run_preprocess(input.as_deref()).map(drop),
        Command::Pca { config, input } => analysis(&config, Stage::Pca, input),
        Command::Ica { config, input } => analysis(&config, Stage::Ica, input),
        Command::Fa { config, input } => analysis(&config, Stage::Fa, input),
        Command::Diagnose { config, input } => analysis(&config, Stage::Diagnose, input),
        Command::SynthBench { config, seeds, out } => {
            synth_bench::run(config.as_deref(), seeds, opts.seed, out.as_deref(), opts.execution)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
