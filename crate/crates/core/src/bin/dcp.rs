use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dropout_conformal::runner::{emit_reports, load_artifacts, parse_config, run_experiment_with, RunRecord};
use dropout_conformal::{Error, Result};

#[derive(Parser)]
#[command(name = "dcp", version, about = "Dropout conformal predictors: experiments and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Concurrent runs (overrides `workers`).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-aggregate an existing output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Parse and validate a configuration without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn progress(rec: &RunRecord) {
    let parts: Vec<String> = rec
        .models
        .iter()
        .map(|m| match (&m.report, &m.failure) {
            (Some(r), _) => format!("{} rmse={:.4}", m.label, r.rmse),
            (None, Some(_)) => format!("{} failed", m.label),
            _ => m.label.clone(),
        })
        .collect();
    eprintln!("run {:03}: {}", rec.index, parts.join(", "));
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            workers,
        } => {
            let mut cfg = parse_config(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.validate()?;
            let artifacts = run_experiment_with(&cfg, &progress)?;
            let manifest = emit_reports(&artifacts, &cfg.output_dir)?;
            println!(
                "wrote {} files to {}",
                manifest.entries.len() + 1,
                cfg.output_dir.display()
            );
        }
        Command::Report { input } => {
            let artifacts = load_artifacts(&input)?;
            let manifest = emit_reports(&artifacts, &input)?;
            println!("wrote {} files to {}", manifest.entries.len() + 1, input.display());
        }
        Command::ValidateConfig { config } => {
            let cfg = parse_config(&config)?;
            print!("{}", cfg.to_canonical_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            match e {
                Error::Config { .. } | Error::UnknownKey(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
