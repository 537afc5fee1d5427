use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use star_secrecy::harness::{emit_csv, run_experiment, solve_one, ExperimentKind, ExperimentSpec};
use star_secrecy::Error;

/// Secrecy beamforming experiments for STAR-RIS assisted uplink NOMA.
#[derive(Parser)]
#[command(name = "star-secrecy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form vs Monte-Carlo outage probability against the surface-eavesdropper distance.
    SopTightness(Common),
    /// Minimum secrecy capacity per alternation of the full-CSI design.
    ConvergeFull(Common),
    /// Maximum outage per alternation of the statistical-CSI design.
    ConvergeStat(Common),
    /// Schemes against the users' power cap (dBm).
    SweepPower(Common),
    /// Schemes against the number of surface elements.
    SweepElements(Common),
    /// No-eavesdropper rate against quantization bits.
    Quantization(Common),
    /// Schemes against the surface abscissa (m).
    Placement(Common),
    /// Solve one realization and print its report as JSON.
    SolveOne(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Directory for the CSV output.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Setting as key=value with dotted keys, e.g. radio.num_ris_elements=16. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &Common) {
        match self {
            Command::SopTightness(c) => (ExperimentKind::SopTightness, c),
            Command::ConvergeFull(c) => (ExperimentKind::ConvergeFull, c),
            Command::ConvergeStat(c) => (ExperimentKind::ConvergeStat, c),
            Command::SweepPower(c) => (ExperimentKind::SweepPower, c),
            Command::SweepElements(c) => (ExperimentKind::SweepElements, c),
            Command::Quantization(c) => (ExperimentKind::Quantization, c),
            Command::Placement(c) => (ExperimentKind::Placement, c),
            Command::SolveOne(c) => (ExperimentKind::SolveOne, c),
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn load_spec(kind: ExperimentKind, c: &Common) -> Result<ExperimentSpec, Failure> {
    let text = match &c.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut overrides = c.overrides.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = c.trials {
        overrides.push(format!("trials={t}"));
    }
    ExperimentSpec::load(kind, text.as_deref(), &overrides).map_err(|e| Failure::Config(e.to_string()))
}

fn runtime(e: Error) -> Failure {
    match e {
        Error::Config(m) => Failure::Config(m),
        other => Failure::Runtime(other.to_string()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (kind, common) = cli.command.parts();
    let spec = load_spec(kind, common)?;
    if kind == ExperimentKind::SolveOne {
        let report = solve_one(&spec).map_err(runtime)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
        println!("{json}");
        return Ok(());
    }
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", common.out.display())))?;
    let records = run_experiment(&spec).map_err(runtime)?;
    for r in &records {
        println!("{}", r.summary());
    }
    let path = common.out.join(format!("{kind}.csv"));
    emit_csv(&records, &path).map_err(runtime)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
