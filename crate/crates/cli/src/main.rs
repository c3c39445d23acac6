use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dronebid::auction::WinnerRule;
use dronebid::harness::{self, aggregate, Overrides, StrategyKind};
use dronebid::par::ExecMode;

/// Run seeded sweeps of the UAV delivery simulator and write result tables.
#[derive(Debug, Parser)]
#[command(name = "dronebid", version)]
struct Args {
    /// TOML experiment file; omitted keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// learning or threshold (comma-separated for several).
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<StrategyKind>>,
    /// least_confident, most_confident or random (comma-separated).
    #[arg(long, value_delimiter = ',')]
    winner_rule: Option<Vec<WinnerRule>>,
    /// Mean order inter-arrival time in minutes (comma-separated).
    #[arg(long, value_delimiter = ',')]
    tau_minutes: Option<Vec<f64>>,
    /// Horizon in weeks.
    #[arg(long)]
    weeks: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    fleet_size: Option<Vec<u32>>,
    /// Abort fraction (comma-separated).
    #[arg(long, value_delimiter = ',')]
    xi: Option<Vec<f64>>,
    /// Enable reservation bids.
    #[arg(long)]
    forecasting: bool,
    /// SoC levels for threshold cells (comma-separated).
    #[arg(long, value_delimiter = ',')]
    threshold_level: Option<Vec<f64>>,
    /// Seeds per cell.
    #[arg(long)]
    seeds: Option<u32>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print the run matrix and exit.
    #[arg(long)]
    dry_run: bool,
    /// Rebuild the aggregate tables from existing run files.
    #[arg(long)]
    aggregate_only: bool,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

impl Args {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            strategies: self.strategy.clone(),
            rules: self.winner_rule.clone(),
            tau_minutes: self.tau_minutes.clone(),
            weeks: self.weeks,
            fleet_sizes: self.fleet_size.clone(),
            xis: self.xi.clone(),
            forecasting: self.forecasting.then_some(true),
            threshold_levels: self.threshold_level.clone(),
            seeds_per_cell: self.seeds,
            out_dir: self.out.clone(),
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let spec = match harness::parse_config(args.config.as_deref(), &args.overrides()) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.dry_run {
        print!("{}", harness::describe_matrix(&spec));
        return ExitCode::SUCCESS;
    }
    if args.aggregate_only {
        return match aggregate::aggregate_dir(&spec.out_dir) {
            Ok(rows) => {
                println!("aggregated {} runs into {}", rows.len(), spec.out_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }
    let mode = if args.sequential { ExecMode::Sequential } else { ExecMode::available() };
    match harness::run_experiment(&spec, mode) {
        Ok(outcomes) => {
            println!("{} runs written to {}", outcomes.len(), spec.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
