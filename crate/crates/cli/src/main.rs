use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod args;
mod commands;
mod demo;

use args::{parse_pair, ConfigArgs};
use commands::{CliError, CliResult, EstimateArgs};

#[derive(Debug, Parser)]
#[command(name = "chebhopgd", version, about = "Parametric reduced order models from shifted Krylov snapshots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the node plan and write snapshot lines plus a manifest.
    Snapshots {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output>/snapshots`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Separated decomposition of a snapshot directory.
    Decompose {
        #[arg(long)]
        snapshots: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output>/model`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a model at one parameter pair.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        mu1: f64,
        #[arg(long, allow_negative_numbers = true)]
        mu2: f64,
        /// Also solve directly and report the relative error.
        #[arg(long)]
        reference: bool,
        /// Write the vector (f64le with a JSON sidecar).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Relative error of a model against direct solves on an equidistant grid.
    Errmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        g1: usize,
        #[arg(long, default_value_t = 20)]
        g2: usize,
        /// Defaults to `<output>/errmap.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recover the parameters of an observed solution.
    Estimate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Observed solution (f64le with sidecar); otherwise synthesized at --truth.
        #[arg(long)]
        observation: Option<PathBuf>,
        #[arg(long, value_parser = parse_pair)]
        truth: Option<(f64, f64)>,
        /// Relative noise level added to the observation.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        shrink: Option<f64>,
        /// Defaults to `<output>/estimate.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Desk-scale end-to-end runs with a PASS/FAIL summary.
    Demo {
        #[arg(long, default_value = "demo")]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    match cli.command {
        Command::Snapshots { cfg, out } => {
            let c = cfg.resolve(None)?;
            let out = out.unwrap_or_else(|| c.output.join("snapshots"));
            commands::snapshots(&c, &out)
        }
        Command::Decompose { snapshots, cfg, out } => commands::decompose(&snapshots, &cfg, out),
        Command::Eval { model, mu1, mu2, reference, out, cfg } => {
            commands::eval(&model, &cfg, (mu1, mu2), reference, out.as_deref())
        }
        Command::Errmap { model, g1, g2, out, cfg } => commands::errmap(&model, &cfg, (g1, g2), out),
        Command::Estimate { cfg, observation, truth, noise, runs, shrink, out } => {
            let c = cfg.resolve(None)?;
            commands::estimate(&c, &EstimateArgs { observation, truth, noise, runs, shrink }, out)
        }
        Command::Demo { output } => demo::demo(&output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::input(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code as u8);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.code as u8)
        }
    }
}
