use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cpinn::experiment::{run_experiment, trajectory_csv, ExperimentConfig};
use cpinn::metrics::{probe_points, solution_on_probe, PROBE_POINTS};
use cpinn::problems::{Benchmark, ProblemSpec};
use cpinn::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "cpinn", version, about = "Constrained PINN parameter-estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method × (zeta, xi) grid and write results under the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `key=value` in TOML syntax; dotted keys reach nested tables.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads; overrides the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Parse and check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Forward-solve a benchmark at the given parameters.
    Oracle {
        benchmark: Benchmark,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        eta: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = PROBE_POINTS)]
        points: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, overrides, workers } => {
            let mut cfg = ExperimentConfig::load(&config, &overrides)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let rows = run_experiment(&cfg)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            log::info!("{} rows written to {}", rows.len(), cfg.output_dir.display());
            if failed > 0 {
                log::warn!("{failed} of {} jobs did not complete cleanly", rows.len());
            }
            Ok(())
        }
        Command::Validate { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            println!(
                "ok: {} with {} jobs of {} epochs",
                cfg.benchmark,
                cfg.jobs().len(),
                cfg.epochs()
            );
            Ok(())
        }
        Command::Oracle { benchmark, eta, out, points } => {
            let problem = ProblemSpec::new(benchmark);
            if eta.len() != problem.param_dim() {
                return Err(Error::Config(format!(
                    "{benchmark} takes {} parameters ({}), got {}",
                    problem.param_dim(),
                    problem.param_names.join(", "),
                    eta.len()
                )));
            }
            if points < 2 {
                return Err(Error::Config("--points must be at least 2".into()));
            }
            let sol = solution_on_probe(&problem, &eta, points)?;
            fs::write(&out, trajectory_csv(&probe_points(&problem, points), &sol))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
