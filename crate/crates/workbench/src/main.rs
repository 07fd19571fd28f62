use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fkns_workbench::{execute, Command, Invocation};

/// Feynman-Kac and large-deviation experiments for the periodically forced
/// 2D stochastic Navier-Stokes equation.
#[derive(Parser, Debug)]
#[command(name = "fkns", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Config file of `key = value` lines overriding the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set eigen.grid=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output root; takes precedence over FKNS_OUT and `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the reference defaults and exit.
    #[arg(long)]
    print_defaults: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", fkns_workbench::config::DEFAULTS);
        return ExitCode::SUCCESS;
    }
    let inv = Invocation {
        command: cli.command,
        config: cli.config,
        sets: cli.sets,
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
    };
    match execute(&inv) {
        Ok(report) => {
            for line in &report.outcome.lines {
                println!("{line}");
            }
            println!("results in {}", report.dir.display());
            if report.outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: one or more checks failed", inv.command.name());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
