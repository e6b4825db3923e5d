use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tetherkit::commands::{cmd_check, cmd_observability_table, cmd_simulate};

#[derive(Parser)]
#[command(
    name = "tetherkit",
    version,
    about = "Simulation, observability analysis, and disturbance-observer filtering for a bar payload tethered to two UAVs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write trace.csv, metrics.json, and
    /// manifest.json.
    Simulate {
        /// Scenario name: point_stab | figure8 | payload_pulse
        scenario: String,
        /// Optional flat key-value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds to run as a parallel batch
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Output directory
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Filter mode: do | baseline
        #[arg(long, default_value = "do")]
        filter: String,
    },
    /// Reproduce the disturbance-combination observability rank table.
    ObservabilityTable {
        /// Optional flat key-value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the table here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of random equilibria to sample
        #[arg(long, default_value_t = 3)]
        samples: usize,
    },
    /// Run a self-check suite: manifold | jacobians | energy | all.
    Check {
        #[arg(default_value = "all")]
        suite: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            scenario,
            config,
            seed,
            seeds,
            out_dir,
            filter,
        } => cmd_simulate(scenario, config.as_deref(), *seed, *seeds, out_dir, filter),
        Command::ObservabilityTable {
            config,
            out,
            samples,
        } => cmd_observability_table(config.as_deref(), out.as_deref(), *samples),
        Command::Check { suite } => cmd_check(suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
