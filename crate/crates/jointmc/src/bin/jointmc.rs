//! Thin command-line front end over the library's experiment pipeline.
//! The library's `examples/` directory is the primary interface; this
//! binary only wires configs on disk to `run`, `sweep`, `validate`, and
//! `report`.

use clap::{Parser, Subcommand};
use jointmc::experiment::{
    format_report, run_experiment, run_sweep, sweep_csv, validate_config, write_outputs,
    ExperimentConfig, RunReport,
};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "jointmc", version, about = "Joint-class sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment config and write its outputs.
    Run {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (manifest.json, report.json, samples.csv,
        /// diagnostics.csv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a config over consecutive seeds (and optional targets).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of consecutive seeds starting at the config seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Comma-separated alternative targets, e.g. "+0,+1,+0+1".
        #[arg(long)]
        targets: Option<String>,
    },
    /// Check a config (world, target, support coverage) without sampling.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the digest of a completed run directory.
    Report {
        /// Directory previously written by `run`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> jointmc::Result<ExperimentConfig> {
    ExperimentConfig::from_toml(&fs::read_to_string(path)?)
}

fn execute(cli: Cli) -> jointmc::Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let config = load_config(&config)?;
            let outcome = run_experiment(&config)?;
            write_outputs(&out, &outcome)?;
            print!("{}", format_report(&outcome.report));
            println!("written to {}", out.display());
        }
        Command::Sweep { config, out, seeds, targets } => {
            let config = load_config(&config)?;
            let target_list: Option<Vec<String>> =
                targets.map(|t| t.split(',').map(|s| s.trim().to_string()).collect());
            let rows = run_sweep(&config, seeds, target_list.as_deref())?;
            fs::create_dir_all(&out)?;
            let path = out.join("sweep.csv");
            fs::write(&path, sweep_csv(&rows))?;
            println!("{} runs written to {}", rows.len(), path.display());
        }
        Command::Validate { config } => {
            let summary = validate_config(&load_config(&config)?)?;
            println!("ok: {summary}");
        }
        Command::Report { out } => {
            let report: RunReport =
                serde_json::from_str(&fs::read_to_string(out.join("report.json"))?)?;
            print!("{}", format_report(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
