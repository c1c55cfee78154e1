use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ifpopt_cli::commands::{self, Experiment, Mode};
use ifpopt_cli::scenario::{Overrides, Scenario};
use ifpopt_core::IndexFormula;

#[derive(Parser, Debug)]
#[command(
    name = "ifpopt",
    version,
    about = "Passivity-certified distributed optimization with event-triggered communication"
)]
struct Cli {
    /// Scenario file (TOML). The built-in reference scenario is used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for the initial states.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Simulate even when the certificate fails.
    #[arg(long, global = true)]
    force: bool,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Coupling gain. For reproduce-paper, runs only this gain.
    #[arg(long, global = true, value_name = "X")]
    beta: Option<f64>,
    /// Discrete-time stepsize.
    #[arg(long, global = true, value_name = "X")]
    delta: Option<f64>,
    /// Trigger floor; a positive value selects the floored trigger rule.
    #[arg(long, global = true, value_name = "X")]
    zeta: Option<f64>,
    /// Broadcast at every step instead of on events.
    #[arg(long, global = true)]
    no_trigger: bool,
    /// Discrete-time index formula.
    #[arg(long, global = true, value_enum)]
    index: Option<IndexArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum IndexArg {
    Printed,
    WorstCase,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print per-agent indices and bounds; exit 1 if a condition fails.
    Check,
    /// Continuous-time run: writes trace.csv, metrics.json, certificate.txt.
    RunCt,
    /// Discrete-time run: writes trace.csv, metrics.json, certificate.txt.
    RunDt,
    /// Metrics table over a grid of gains and stepsizes.
    Sweep {
        #[arg(long, value_enum, default_value = "dt")]
        mode: Mode,
        /// Comma-separated coupling gains.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        betas: Option<Vec<f64>>,
        /// Comma-separated stepsizes.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        deltas: Option<Vec<f64>>,
    },
    /// Run the reference experiments and check their outcomes.
    ReproducePaper {
        #[arg(value_enum, default_value = "all")]
        experiment: Experiment,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut scenario = match &cli.config {
        Some(p) => Scenario::load(p)?,
        None => Scenario::reference(),
    };
    let reproduce = matches!(cli.command, Command::ReproducePaper { .. });
    scenario.apply(&Overrides {
        seed: cli.seed,
        // reproduction handles its own gain grid
        beta: if reproduce { None } else { cli.beta },
        delta: cli.delta,
        zeta: cli.zeta,
        no_trigger: cli.no_trigger,
        index: cli.index.map(|i| match i {
            IndexArg::Printed => IndexFormula::Printed,
            IndexArg::WorstCase => IndexFormula::WorstCase,
        }),
    });
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::Check => commands::cmd_check(&scenario, cli.out.as_deref()),
        Command::RunCt => commands::cmd_run(&scenario, Mode::Ct, cli.force, &out("out")),
        Command::RunDt => commands::cmd_run(&scenario, Mode::Dt, cli.force, &out("out")),
        Command::Sweep {
            mode,
            ref betas,
            ref deltas,
        } => commands::cmd_sweep(&scenario, mode, betas.as_deref(), deltas.as_deref(), &out("out")),
        Command::ReproducePaper { experiment } => {
            commands::cmd_reproduce(&scenario, experiment, cli.beta, cli.force, &out("out/reproduce"))
        }
    }
}
