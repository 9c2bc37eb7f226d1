use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use parobs::diamond::EfficiencyMode;
use parobs::experiments::{self, ExperimentConfig, RunOptions};
use parobs::parareal::Workers;

#[derive(Parser)]
#[command(name = "parobs", version, about = "Time-parallel Luenberger observer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Threads for the fine sweeps; defaults to logical cores, capped at N.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Modeled)]
        efficiency_mode: Mode,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Modeled,
    Measured,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        workers,
        out,
        efficiency_mode,
    } = cli.command;

    let cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cap = cfg.subintervals.max(cfg.n_sweep.iter().copied().max().unwrap_or(1));
    let count = workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(cap)
    });
    let workers = match Workers::new(count) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let options = RunOptions {
        out_dir: out,
        workers,
        efficiency_mode: match efficiency_mode {
            Mode::Modeled => EfficiencyMode::Modeled,
            Mode::Measured => EfficiencyMode::Measured,
        },
    };

    match experiments::run(&cfg, &options) {
        Ok((report, _)) => {
            println!(
                "{}: {} CSV files in {} ({:.2} s, {} workers)",
                report.experiment.as_str(),
                report.csv_files.len(),
                options.out_dir.display(),
                report.elapsed_s,
                report.workers
            );
            for c in report.checks.iter().filter(|c| !c.passed) {
                println!("check failed: {}: {}", c.name, c.detail);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_NUMERIC })
        }
    }
}
