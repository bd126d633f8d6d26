use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qcka_cli::commands::{cmd_rate, cmd_scan, cmd_simulate, cmd_validate, failed_checks, Overrides};
use qcka_cli::config::RunConfig;
use qcka_cli::output::{json_string, write_file};
use qcka_cli::CliError;
use qcka_core::optimizer::{Objective, Protocol};
use qcka_core::validation::{Effort, SUITES};

/// Key rates of three-party sending-or-not-sending conference key
/// agreement over channels of unequal length.
#[derive(Parser)]
#[command(name = "qcka", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate at the configured source settings and distances.
    Rate(RunArgs),
    /// Optimized key rate over a grid of total distances, as CSV.
    Scan(RunArgs),
    /// Sample one run's detection counts and compute its key length.
    Simulate(RunArgs),
    /// Run the self-check suites.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output file; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Only used for its seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated suites to run (default: all).
    #[arg(long, value_delimiter = ',')]
    suites: Option<Vec<String>>,
    /// Smaller sample sizes.
    #[arg(long)]
    quick: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Asymmetric,
    Symmetric,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Asymptotic,
    Finite,
}

fn load(args: &RunArgs) -> Result<(RunConfig, Option<PathBuf>), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    Overrides {
        seed: args.seed,
        protocol: args.protocol.map(|p| match p {
            ProtocolArg::Asymmetric => Protocol::Asymmetric,
            ProtocolArg::Symmetric => Protocol::Symmetric,
        }),
        regime: args.regime.map(|r| match r {
            RegimeArg::Asymptotic => Objective::Asymptotic,
            RegimeArg::Finite => Objective::Finite,
        }),
    }
    .apply(&mut cfg);
    let out = args.out.clone().or_else(|| cfg.output.clone());
    Ok((cfg, out))
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rate(args) => {
            let (cfg, out) = load(&args)?;
            let text = cmd_rate(&cfg)?;
            if out.is_some() {
                print!("{text}");
            }
            emit(&text, out.as_ref())
        }
        Command::Scan(args) => {
            let (cfg, out) = load(&args)?;
            let (csv, diagnostics) = cmd_scan(&cfg)?;
            for d in diagnostics {
                eprintln!("warning: {d}");
            }
            emit(&csv, out.as_ref())
        }
        Command::Simulate(args) => {
            let (cfg, out) = load(&args)?;
            let text = cmd_simulate(&cfg, out.as_deref())?;
            emit(&text, out.as_ref())
        }
        Command::Validate(args) => {
            let mut seed = match &args.config {
                Some(p) => RunConfig::load(p)?.seed,
                None => 1,
            };
            if let Some(s) = args.seed {
                seed = s;
            }
            let suites: Vec<String> = match args.suites {
                Some(list) => list.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                None => SUITES.iter().map(|s| s.to_string()).collect(),
            };
            if suites.is_empty() {
                eprintln!("warning: no suites selected; nothing to check");
            }
            let effort = if args.quick { Effort::Quick } else { Effort::Full };
            let (report, summary) = cmd_validate(&suites, effort, seed)?;
            for line in summary {
                println!("{line}");
            }
            if let Some(p) = &args.out {
                write_file(p, &json_string(&report)?)?;
            }
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Validation(failed_checks(&report)))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qcka: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
