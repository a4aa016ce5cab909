use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rgmm::covariance::RegularizationMethod;
use rgmm::datagen::{self, DatasetSpec};
use rgmm::error::Error;
use rgmm::gmm::FitConfig;
use rgmm::harness::{
    self, emit_report, io, Algorithm, DatasetSource, ExperimentConfig, MethodSpec, ReportFormat,
    SearchParams,
};

#[derive(Parser)]
#[command(
    name = "rgmm",
    about = "Regularized Gaussian mixture clustering with multi-start, random-swap, \
             and hybrid-genetic search",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset with controlled cluster separation
    Generate {
        /// Number of clusters
        #[arg(long)]
        k: usize,
        /// Number of features
        #[arg(long)]
        d: usize,
        /// Target minimum pairwise separation index, in (-1, 1)
        #[arg(long)]
        c: f64,
        /// Total samples (defaults to 100 * k)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path (features plus a trailing label column)
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one method on a CSV dataset and print a JSON record
    Fit {
        /// Input CSV path
        #[arg(long)]
        data: PathBuf,
        /// kmeans, kmeans_hg, gmm, gmm_ms, gmm_rs, or gmm_hg
        #[arg(long)]
        method: Algorithm,
        /// empirical, shrunk[:delta], ledoit_wolf, or oas
        #[arg(long, default_value = "empirical")]
        regularizer: RegularizationMethod,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Treat the last column as ground-truth labels and report ARI/NMI/CI
        #[arg(long)]
        has_labels: bool,
        /// Z-score each feature before fitting
        #[arg(long)]
        standardize: bool,
    },
    /// Run a (method x seed) experiment grid from a JSON config
    Bench {
        /// Experiment config path (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Report output path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        /// Z-score each feature before fitting (overrides the config)
        #[arg(long)]
        standardize: bool,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::InvalidParameter(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    match cli.command {
        Command::Generate {
            k,
            d,
            c,
            n,
            seed,
            out,
        } => {
            let spec = DatasetSpec {
                k,
                d,
                c,
                n,
                eig_range: (1.0, 200.0),
                seed,
            };
            let (data, truth) =
                datagen::generate(&spec).map_err(|e| (exit_code_for(&e), e.to_string()))?;
            io::write_dataset(&out, &data, Some(&truth.labels))
                .map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            eprintln!(
                "wrote {} samples x {} features ({} clusters) to {}",
                data.nrows(),
                data.ncols(),
                k,
                out.display()
            );
            Ok(())
        }
        Command::Fit {
            data,
            method,
            regularizer,
            k,
            seed,
            has_labels,
            standardize,
        } => {
            let config = ExperimentConfig {
                dataset: DatasetSource::Path(data.display().to_string()),
                has_labels,
                k,
                runs: 1,
                seeds: Some(vec![seed]),
                standardize,
                methods: vec![MethodSpec {
                    algorithm: method,
                    regularizer,
                }],
                reference: None,
                fit: FitConfig::default(),
                search: SearchParams::default(),
            };
            let records =
                harness::run_experiment(&config).map_err(|e| (exit_code_for(&e), e.to_string()))?;
            let record = &records[0];
            if record.failed {
                return Err((
                    EXIT_RUNTIME,
                    record.error.clone().unwrap_or_else(|| "fit failed".into()),
                ));
            }
            println!(
                "{}",
                serde_json::to_string_pretty(record).expect("record serializes")
            );
            Ok(())
        }
        Command::Bench {
            config,
            out,
            format,
            standardize,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| {
                (
                    EXIT_CONFIG,
                    format!("cannot read {}: {e}", config.display()),
                )
            })?;
            let mut experiment: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| (EXIT_CONFIG, format!("invalid config: {e}")))?;
            if standardize {
                experiment.standardize = true;
            }
            let records = harness::run_experiment(&experiment)
                .map_err(|e| (exit_code_for(&e), e.to_string()))?;
            if records.iter().all(|r| r.failed) {
                return Err((EXIT_RUNTIME, "every run in the grid failed".into()));
            }
            let report = emit_report(&records, format, experiment.reference.as_deref())
                .map_err(|e| (exit_code_for(&e), e.to_string()))?;
            std::fs::write(&out, report).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
            let failed = records.iter().filter(|r| r.failed).count();
            eprintln!(
                "ran {} cells ({} failed), report written to {}",
                records.len(),
                failed,
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
