use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use femm_varx::driver::fit;
use femm_varx::harness::{mask_data, run_case, BenchmarkReport, BenchmarkSettings, Case, Preset};
use femm_varx::synth::generate;
use femm_varx::Series;
use log::info;

mod error;
mod io;
mod settings;

use error::CliError;

#[derive(Parser)]
#[command(name = "femm", version, about = "Nonstationary VARX fits with missing data reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with benchmark keys and [femm] / [generator] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if needed.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-regime test data: x.csv, u.csv, truth.json.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Mark entries of x.csv and/or u.csv missing at random.
    Mask {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        u: PathBuf,
        #[arg(long, default_value = "x")]
        case: Case,
        #[arg(long)]
        fraction: f64,
    },
    /// Fit one model and reconstruct the missing entries.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        u: PathBuf,
    },
    /// Run the benchmark protocol for one case.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        case: Option<Case>,
        /// Comma-separated missing fractions.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Merge summary.json files from earlier runs.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<BenchmarkSettings, CliError> {
    let mut s = settings::load(common.preset, common.config.as_deref())?;
    if let Some(seed) = common.seed {
        s.seeds = vec![seed];
        s.generator.seed = seed;
        s.femm.seed = seed;
    }
    Ok(s)
}

fn out_dir(dir: &Path) -> Result<&Path, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn write_report(dir: &Path, report: &BenchmarkReport) -> Result<(), CliError> {
    let csv = dir.join("report.csv");
    fs::write(&csv, report.to_csv()).map_err(|e| CliError::io(&csv, e))?;
    io::write_json(&dir.join("summary.json"), &report.summary_json())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common } => {
            let s = load(&common)?;
            let dir = out_dir(&common.out)?;
            let data = generate(&s.generator)?;
            io::write_matrix(&dir.join("x.csv"), &data.x)?;
            io::write_matrix(&dir.join("u.csv"), &data.u)?;
            io::write_json(&dir.join("truth.json"), &io::TruthBundle::new(&s.generator, &data))?;
        }
        Command::Mask {
            common,
            x,
            u,
            case,
            fraction,
        } => {
            let s = load(&common)?;
            let (xs, us) = (io::read_series(&x)?, io::read_series(&u)?);
            if xs.has_missing() || us.has_missing() {
                return Err(CliError::usage("inputs to mask must be complete"));
            }
            if xs.len() != us.len() {
                return Err(CliError::usage("x and u differ in length"));
            }
            let seed = common.seed.unwrap_or(s.generator.seed);
            let masked = mask_data(xs.values(), us.values(), s.femm.mem(), case, fraction, s.protect_initial, seed)?;
            let dir = out_dir(&common.out)?;
            io::write_series(&dir.join("x.csv"), &masked.x)?;
            io::write_series(&dir.join("u.csv"), &masked.u)?;
        }
        Command::Fit { common, x, u } => {
            let s = load(&common)?;
            let (xs, us): (Series, Series) = (io::read_series(&x)?, io::read_series(&u)?);
            let result = fit(&xs, &us, &s.femm)?;
            let dir = out_dir(&common.out)?;
            io::write_matrix(&dir.join("x_filled.csv"), &result.x_filled)?;
            io::write_matrix(&dir.join("u_filled.csv"), &result.u_filled)?;
            io::write_matrix(&dir.join("gamma.csv"), result.gamma.weights())?;
            io::write_json(&dir.join("fit.json"), &io::FitBundle::new(&s.femm, &result))?;
        }
        Command::Benchmark {
            common,
            case,
            fractions,
            workers,
        } => {
            let mut s = load(&common)?;
            if let Some(c) = case {
                s.case = c;
            }
            if let Some(f) = fractions {
                s.fractions = f;
            }
            if let Some(w) = workers {
                s.workers = w;
            }
            let run = run_case(&s)?;
            let failed = run.report.records.iter().filter(|r| r.error.is_some()).count();
            info!("{} cells, {failed} failed", run.report.records.len());
            write_report(out_dir(&common.out)?, &run.report)?;
        }
        Command::Report { inputs, out } => {
            let reports = inputs
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                    Ok(BenchmarkReport::from_summary_json(&text)?)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            write_report(out_dir(&out)?, &BenchmarkReport::merge(reports))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e).unwrap_or_else(|_| e.message.clone()));
            ExitCode::FAILURE
        }
    }
}
