//! Command-line interface of the benchmark harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 data verification failure,
//! 3 at least one cell failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use deconv_bench::{emit_report, parse_baseline, run_plan, ExperimentPlan, RunOptions, ThresholdMode};
use deconv_bench::record::{from_csv, read_record_file, RunRecord, RunStatus};
use deconv_core::data::{verify_cifar10, verify_cifar100};
use deconv_core::{Error, Precision};

#[derive(Parser)]
#[command(name = "deconv-bench", version, about = "Deconvolution vs batch normalization benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a plan file, writing one record per cell under OUT/records.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads for the tensor kernels (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Timing-grade execution (sequential cells; recorded in records).
        #[arg(long)]
        timed: bool,
        #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
        precision: PrecisionArg,
    },
    /// Render report files from recorded cells.
    Report {
        /// Records directory (of `run`) or a single raw CSV file.
        #[arg(long)]
        records: PathBuf,
        /// Baseline CSV of original values to classify against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ThresholdModeArg::Points)]
        threshold_mode: ThresholdModeArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Verify dataset files (presence, exact sizes, label ranges).
    VerifyData {
        #[arg(long, value_enum)]
        dataset: DatasetArg,
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThresholdModeArg {
    Points,
    Relative,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Cifar10,
    Cifar100,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::MissingFile { .. } | Error::FileSize { .. } | Error::CorruptRecord { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { plan, data_dir, out, threads, timed, precision } => {
            let text = std::fs::read_to_string(&plan)?;
            let plan = ExperimentPlan::parse(&text)?;
            if threads > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            }
            let opts = RunOptions {
                data_dir,
                out_dir: out,
                precision: match precision {
                    PrecisionArg::F32 => Precision::F32,
                    PrecisionArg::F64 => Precision::F64,
                },
                threads: if threads == 0 { rayon::current_num_threads() } else { threads },
                timed: timed || plan.timed,
            };
            let records = run_plan(&plan, &opts)?;
            let failed = records.iter().filter(|r| r.status == RunStatus::Failed).count();
            eprintln!("{} cells, {} failed", records.len(), failed);
            if failed > 0 {
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { records, baseline, threshold_mode, out } => {
            let recs = load_records(&records)?;
            let baseline_rows = match baseline {
                Some(path) => Some(parse_baseline(&std::fs::read_to_string(path)?)?),
                None => None,
            };
            let mode = match threshold_mode {
                ThresholdModeArg::Points => ThresholdMode::Points,
                ThresholdModeArg::Relative => ThresholdMode::Relative,
            };
            let paths = emit_report(&recs, baseline_rows.as_deref(), mode, &out)?;
            eprintln!("wrote {}", paths.raw.display());
            if let Some(c) = &paths.comparison {
                eprintln!("wrote {}", c.display());
            }
            eprintln!("wrote {}", paths.series.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyData { dataset, dir } => {
            let report = match dataset {
                DatasetArg::Cifar10 => verify_cifar10(&dir)?,
                DatasetArg::Cifar100 => verify_cifar100(&dir)?,
            };
            eprintln!(
                "verified {} records across {} files",
                report.records,
                report.files_checked.len()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_records(path: &std::path::Path) -> Result<Vec<RunRecord>, Error> {
    if path.is_dir() {
        let mut out = Vec::new();
        let mut entries: Vec<_> = std::fs::read_dir(path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        entries.sort();
        for entry in entries {
            out.push(read_record_file(&entry)?);
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no record files under {}",
                path.display()
            )));
        }
        Ok(out)
    } else {
        from_csv(&std::fs::read_to_string(path)?)
    }
}
