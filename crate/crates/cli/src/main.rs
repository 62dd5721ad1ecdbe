use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nrbundle_cli::{parse_config, run_scenario, ScenarioKind};

#[derive(Parser)]
#[command(name = "nrbundle", version, about = "Nonreciprocal bundle emission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Steady-state occupations over a detuning grid.
    Spectrum(Common),
    /// Closed or open evolution over a time grid.
    Dynamics {
        #[command(flatten)]
        common: Common,
        /// Include dissipation (master equation).
        #[arg(long)]
        open: bool,
    },
    /// Quantum-jump trajectories and ensemble averages.
    Trajectory(Common),
    /// Steady-state g1/g2 over a decay-rate grid.
    Correlations(Common),
    /// QFI entanglement witnesses over a decay-rate grid.
    Witness(Common),
    /// Closed-form and located resonance detunings.
    Resonances(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Spectrum(c) => (ScenarioKind::Spectrum, c),
        Command::Dynamics { common, open } => (if open { ScenarioKind::OpenDynamics } else { ScenarioKind::ClosedDynamics }, common),
        Command::Trajectory(c) => (ScenarioKind::Trajectory, c),
        Command::Correlations(c) => (ScenarioKind::CorrelationSweep, c),
        Command::Witness(c) => (ScenarioKind::WitnessSweep, c),
        Command::Resonances(c) => (ScenarioKind::ResonanceTable, c),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: threads: {e}");
            return ExitCode::from(2);
        }
    }
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_scenario(kind, &cfg, &text, &common.out, common.seed) {
        Ok(m) if m.failed_points > 0 => {
            eprintln!("{} point(s) failed; see the error column", m.failed_points);
            ExitCode::from(1)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
