use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levelset_cli::{parse_config, run_case_with_threads, CaseKind, CliError};

#[derive(Parser)]
#[command(name = "levelset", version, about = "Forced mean curvature flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for the solver (overrides the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (overrides the config; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the 2D solver and its checks.
    Simulate,
    /// Radial solution against its large-time limit.
    RadialLimit,
    /// Channel arc analytics, barrier rates and masks.
    ChannelAnalyze,
    /// Sample the forcing condition on the domain.
    CheckCondition,
    /// Predicted time and gradient bounds.
    Bounds,
}

impl Command {
    fn kind(self) -> CaseKind {
        match self {
            Command::Simulate => CaseKind::Simulate,
            Command::RadialLimit => CaseKind::RadialLimit,
            Command::ChannelAnalyze => CaseKind::ChannelAnalyze,
            Command::CheckCondition => CaseKind::CheckCondition,
            Command::Bounds => CaseKind::Bounds,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Invalid("--config PATH is required".into()))?;
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let cfg = parse_config(&text).map_err(CliError::Config)?;
    let wanted = cli.command.kind();
    if cfg.case != wanted {
        return Err(CliError::Invalid(format!(
            "config describes case `{}` but `{wanted}` was requested",
            cfg.case
        )));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let report = run_case_with_threads(&cfg, &out, cli.threads)?;
    for (k, v) in &report.summary {
        println!("{k} = {v}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    println!("{}", report.summary_line());
    Ok(report.passed())
}
