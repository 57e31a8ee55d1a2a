use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dwmin::error::Error;
use dwmin::harness::{parse_config, run};
use dwmin::schemes::SchemeKind;
use dwmin::verify::{verify_with_observer, VerifyLevel};

#[derive(Parser)]
#[command(
    name = "dwmin",
    version,
    about = "Constrained convex minimization of the double-well energy and \
             energy-stable time stepping for the Allen-Cahn equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the energy with the iterative constrained method
    /// (requires `scheme = algorithm1` in the config)
    Minimize { config: PathBuf },
    /// Evolve the Allen-Cahn equation with the configured scheme
    Evolve { config: PathBuf },
    /// Run the numerical certification suite
    Verify {
        /// Small grids and short sweeps (< 30 s); the default
        #[arg(long, conflicts_with = "full")]
        quick: bool,
        /// Complete sweeps
        #[arg(long)]
        full: bool,
        /// Also show what happens when the box constraint is dropped from
        /// the minimization (informational)
        #[arg(long)]
        demo_unconstrained: bool,
    },
}

fn load_config(path: &PathBuf) -> Result<dwmin::harness::RunConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_config(&text)
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Minimize { config } => {
            let cfg = load_config(&config)?;
            if cfg.scheme.scheme != SchemeKind::Algorithm1 {
                return Err(Error::Config {
                    line: 0,
                    msg: format!(
                        "`minimize` requires scheme = algorithm1, config has {}",
                        cfg.scheme.scheme.as_str()
                    ),
                });
            }
            let summary = run(&cfg)?;
            println!("{}", summary.one_line());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evolve { config } => {
            let cfg = load_config(&config)?;
            let summary = run(&cfg)?;
            println!("{}", summary.one_line());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            quick: _,
            full,
            demo_unconstrained,
        } => {
            let level = if full {
                VerifyLevel::Full
            } else {
                VerifyLevel::Quick
            };
            let report = verify_with_observer(level, demo_unconstrained, |check| {
                let tag = if check.passed { " ok " } else { "FAIL" };
                println!(
                    "[{tag}] {:<28} {:>8.0} ms  {}",
                    check.name, check.elapsed_ms, check.detail
                );
            });
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {} failed", report.checks.len(), failed);
            if report.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
