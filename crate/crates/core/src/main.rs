use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};

use lod_gpe::harness::config::EllSpec;
use lod_gpe::harness::{self, Experiment, ExperimentConfig, HarnessError};

/// Conservative Crank-Nicolson experiments for the 1D Gross-Pitaevskii
/// equation in LOD spaces.
#[derive(Parser)]
#[command(name = "lod-gpe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invariant errors of the projected initial value over coarse levels.
    Invariants(RunArgs),
    /// Energy error against the number of localization layers.
    Decay(RunArgs),
    /// Space and time convergence of the modified scheme.
    Converge(RunArgs),
    /// Soliton drift of CN-FEM and CN-LOD.
    Drift(RunArgs),
    /// Per-step cost of CN-LOD against CN-FEM.
    Cpu(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file merged onto the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Coarse exponents k, H = (b - a) / 2^k (comma separated).
    #[arg(long = "H-exp", value_delimiter = ',')]
    h_exp: Vec<u32>,
    /// Layer counts (comma separated) or "auto".
    #[arg(long)]
    ell: Option<String>,
    /// Time step; keeps the final time unless --steps is also given.
    #[arg(long)]
    tau: Option<f64>,
    /// Number of steps; keeps tau and drops the final time.
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 when a built-in check fails.
    #[arg(long)]
    assert: bool,
}

const EXIT_ASSERT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

fn load_config(experiment: Experiment, args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml(experiment, &text)?
        }
        None => ExperimentConfig::defaults(experiment),
    };
    if !args.h_exp.is_empty() {
        cfg.mesh.coarse_exponents = args.h_exp.clone();
    }
    if let Some(ell) = &args.ell {
        cfg.mesh.ell = if ell.trim() == "auto" {
            EllSpec::Auto
        } else {
            let layers = ell
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("--ell {ell:?}"))?;
            EllSpec::Layers(layers)
        };
    }
    match (args.tau, args.steps) {
        (Some(tau), Some(n)) => {
            cfg.time.tau = Some(tau);
            cfg.time.steps = Some(n);
            cfg.time.final_time = None;
        }
        (Some(tau), None) => {
            cfg.time.tau = Some(tau);
            cfg.time.steps = None;
        }
        (None, Some(n)) => {
            cfg.time.steps = Some(n);
            cfg.time.final_time = None;
        }
        (None, None) => {}
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(experiment: Experiment, args: &RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(experiment, args)?;
    let report = harness::run(experiment, &cfg)?;
    let files = report.write(&cfg.output.dir)?;
    for (name, value) in &report.summary {
        println!("{name} = {value:.6e}");
    }
    for f in &report.failures {
        eprintln!("failed: {f}");
    }
    for c in &report.checks {
        println!(
            "[{}] {} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!(
        "wrote {} files to {}",
        files.len(),
        cfg.output.dir.display()
    );
    if report.non_convergence {
        return Ok(ExitCode::from(EXIT_NOT_CONVERGED));
    }
    if args.assert && (!report.all_checks_pass() || !report.failures.is_empty()) {
        return Ok(ExitCode::from(EXIT_ASSERT));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Invariants(a) => (Experiment::Invariants, a),
        Command::Decay(a) => (Experiment::Decay, a),
        Command::Converge(a) => (Experiment::Converge, a),
        Command::Drift(a) => (Experiment::Drift, a),
        Command::Cpu(a) => (Experiment::Cpu, a),
    };
    match execute(experiment, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let not_converged = e
                .downcast_ref::<HarnessError>()
                .is_some_and(HarnessError::is_not_converged);
            ExitCode::from(if not_converged { EXIT_NOT_CONVERGED } else { 1 })
        }
    }
}
