use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spde_lab_cli::config::{parse_config, EXPERIMENTS};
use spde_lab_cli::run;

#[derive(Parser)]
#[command(name = "spde-lab", version, about = "Numerical experiments for linear stochastic parabolic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Parse and validate a config, then print it with defaults filled in.
    Validate { config: PathBuf },
    /// List the experiment names.
    ListExperiments,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn load(path: &PathBuf) -> Result<spde_lab_cli::config::ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    parse_config(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListExperiments => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<22} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                print!("{}", cfg.echo());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, seed, out, workers } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let report = run(&cfg, workers);
            if let Err(e) = report.write_to(&dir) {
                eprintln!("error: cannot write to {}: {e}", dir.display());
                return ExitCode::from(EXIT_RUNTIME);
            }
            print!("{}", report.to_text());
            if report.error.is_some() {
                ExitCode::from(EXIT_RUNTIME)
            } else if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
    }
}
