mod config;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use assr_core::{demo_spec, parse_values, Error, Penalty, SampleGrid, SweepAxis};
use clap::{Parser, Subcommand};

use config::{Command, Meta, RunConfig};

#[derive(Parser)]
#[command(name = "assr", version, about = "Adaptive spiking sparse recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured methods on one instance and over all trials.
    Solve {
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Repeat the trials at every value of one parameter.
    Sweep {
        config: PathBuf,
        /// sparsity, snr_db or measurement
        #[arg(long)]
        axis: String,
        /// `lo:hi:step` or a comma-separated list
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Three-neuron demonstration, L1 against the exponential penalty.
    Demo {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a penalty against the admissibility rules; prints a JSON report.
    Validate {
        #[arg(long)]
        penalty: String,
        #[arg(long)]
        param: Option<f64>,
        #[arg(long)]
        lambda: f64,
    },
    /// Rerun a previous command from its meta.json.
    Replay {
        meta: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<Error>())
        .any(Error::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn validate(penalty: &str, param: Option<f64>, lambda: f64) -> anyhow::Result<bool> {
    let penalty = Penalty::from_name(penalty, param)?;
    let report = penalty.validate_rules(lambda, &SampleGrid::default());
    // a closed pipe (`| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&report)?);
    if report.baseline_exempt {
        eprintln!("warning: {penalty} is the convex baseline and exempt from rule-3");
        return Ok(true);
    }
    for v in &report.violations {
        eprintln!("{penalty} violates {} at lambda = {lambda} (x = {}, value = {})", v.rule, v.x, v.value);
    }
    Ok(report.passed)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let dir = match cli.command {
        Cmd::Solve { config, out, jobs } => {
            let cfg = RunConfig::load(&config)?;
            run::solve_command(Command::Solve, &cfg.experiment, out.or(cfg.out), jobs)?
        }
        Cmd::Sweep { config, axis, values, out, jobs } => {
            let cfg = RunConfig::load(&config)?;
            let axis = SweepAxis::parse(&axis)?;
            let values = parse_values(&values)?;
            run::sweep_command(&cfg.experiment, axis, &values, out.or(cfg.out), jobs)?
        }
        Cmd::Demo { out, jobs } => run::solve_command(Command::Demo, &demo_spec(), out, jobs)?,
        Cmd::Validate { penalty, param, lambda } => return validate(&penalty, param, lambda),
        Cmd::Replay { meta, out, jobs } => {
            let text = std::fs::read_to_string(&meta)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", meta.display())))?;
            let meta: Meta = serde_json::from_str(&text)
                .map_err(Error::from)
                .with_context(|| format!("invalid metadata {}", meta.display()))?;
            run::replay(&meta, out, jobs)?
        }
    };
    eprintln!("wrote {}", dir.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
