use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rotflow::cli::{self, ExitStatus, RunSpec};
use rotflow::Error;

#[derive(Parser)]
#[command(version, about = "Rotationally symmetric Ricci flow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as `--dotted.key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the initial profile only.
    Generate(ConfigArgs),
    /// Run the flow and write the run directory.
    Simulate(ConfigArgs),
    /// Recompute report.json of a finished run.
    Classify { dir: PathBuf },
    /// Blow-up matching on the snapshots of a finished run.
    Rescale { dir: PathBuf },
    /// One run per (alpha, r0) pair, each in its own subdirectory.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn spec(args: &ConfigArgs) -> rotflow::Result<RunSpec> {
    let mut pairs = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            cli::parse_config(&text)?;
            cli::parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend(cli::parse_flags(&args.overrides)?);
    cli::resolve(&pairs)
}

/// Stdout may be a closed pipe; that is not an error of the run.
fn print_json<T: serde::Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    let _ = writeln!(io::stdout(), "{text}");
}

fn execute(command: Command) -> rotflow::Result<ExitStatus> {
    match command {
        Command::Generate(args) => {
            let (_, manifest) = cli::generate(&spec(&args)?)?;
            let _ = writeln!(io::stdout(), "{}", manifest.config_hash);
            Ok(ExitStatus::Success)
        }
        Command::Simulate(args) => {
            let spec = spec(&args)?;
            let (out, _) = cli::simulate(&spec)?;
            print_json(&out.report);
            Ok(ExitStatus::of_report(&out.report))
        }
        Command::Classify { dir } => {
            let report = cli::classify(&dir)?;
            print_json(&report);
            Ok(ExitStatus::of_report(&report))
        }
        Command::Rescale { dir } => {
            print_json(&cli::rescale(&dir)?.matches);
            Ok(ExitStatus::Success)
        }
        Command::Sweep { alphas, radii, config } => {
            let spec = spec(&config)?;
            let mut status = ExitStatus::Success;
            for run in cli::sweep(&spec, &alphas, &radii) {
                let verdict = match &run.result {
                    Ok(report) => {
                        let s = ExitStatus::of_report(report);
                        if s as i32 > status as i32 {
                            status = s;
                        }
                        serde_json::to_string(&report.type_verdict).expect("serializable")
                    }
                    Err(e) => {
                        let s = ExitStatus::of_error(e);
                        if s as i32 > status as i32 {
                            status = s;
                        }
                        format!("error: {e}")
                    }
                };
                let _ = writeln!(io::stdout(), "{}\t{}\t{}\t{}", run.alpha, run.r0, run.dir.display(), verdict);
            }
            Ok(status)
        }
    }
}

fn main() -> ExitCode {
    let status = match execute(Cli::parse().command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::of_error(&e)
        }
    };
    ExitCode::from(status as u8)
}
