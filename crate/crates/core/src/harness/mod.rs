//! Seeded experiment sweeps and their on-disk results.
//!
//! A spec expands into cells (one per combination of sweep values) and each
//! cell runs once per seed index. Run `k` of every cell uses the seed
//! `run_seed(master, k)`, so cells are compared on common random numbers:
//! the same orders and the same fleet.
//!
//! Layout under the output directory:
//!
//! ```text
//! runs/<cell-hash>-s<k>/   orders.csv attempts.csv models.csv fleet.csv
//!                          accuracy.csv [grid.csv] summary.txt
//! manifest.csv             one row per run with its status
//! runs.csv fig3a.csv fig3b.csv fig3c.csv fig4a.csv fig4b.csv fig5.csv
//! ```

pub mod aggregate;
pub mod config;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::auction::Strategy;
use crate::evaluation::{final_fleet, summarize, weekly_accuracy, winner_soh_grid, GridSpec, MetricsSummary};
use crate::par::{self, ExecMode};
use crate::sim::{rng_substream, run, run_seed, RunConfig, SimError, MINUTE};

pub use config::{
    parse_config, parse_config_file, parse_config_str, ConfigError, ExperimentSpec, Overrides, StrategyKind,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{failed} of {total} runs failed; see manifest.csv")]
    RunsFailed { failed: usize, total: usize },
    #[error("malformed result file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// One point of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub strategy: Strategy,
    /// Mean inter-arrival time (s).
    pub tau: f64,
    pub xi: f64,
    pub fleet_size: u32,
    pub forecasting: bool,
}

impl Cell {
    pub fn config(&self, base: &RunConfig, seed: u64) -> RunConfig {
        RunConfig {
            strategy: self.strategy,
            mean_interarrival: self.tau,
            xi: self.xi,
            fleet_size: self.fleet_size,
            forecasting: self.forecasting,
            seed,
            ..base.clone()
        }
    }

    /// Columns identifying the cell in summaries and tables.
    pub fn descriptor(&self) -> Vec<(String, String)> {
        let (rule, level) = match self.strategy {
            Strategy::Learning(rule) => (rule.as_str().to_string(), String::new()),
            Strategy::Threshold { level } => (String::new(), level.to_string()),
        };
        [
            ("cell_index", self.index.to_string()),
            ("strategy", self.strategy.name().to_string()),
            ("winner_rule", rule),
            ("threshold_level", level),
            ("tau_minutes", (self.tau / MINUTE).to_string()),
            ("xi", self.xi.to_string()),
            ("fleet_size", self.fleet_size.to_string()),
            ("forecasting", self.forecasting.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn label(&self) -> String {
        self.descriptor()
            .into_iter()
            .skip(1)
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Cells in a fixed order: strategy, then rule or level, τ̄, ξ, fleet size,
/// forecasting. Forecasting only applies to learning cells.
pub fn expand_cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut strategies = Vec::new();
    for kind in &spec.strategies {
        match kind {
            StrategyKind::Learning => {
                strategies.extend(spec.rules.iter().map(|r| (Strategy::Learning(*r), spec.forecasting.clone())))
            }
            StrategyKind::Threshold => strategies
                .extend(spec.threshold_levels.iter().map(|&level| (Strategy::Threshold { level }, vec![false]))),
        }
    }
    let mut cells = Vec::new();
    for (strategy, forecasting) in strategies {
        for &tau in &spec.taus {
            for &xi in &spec.xis {
                for &fleet_size in &spec.fleet_sizes {
                    for &f in &forecasting {
                        let index = cells.len();
                        cells.push(Cell { index, strategy, tau, xi, fleet_size, forecasting: f });
                    }
                }
            }
        }
    }
    cells
}

/// Hash of everything in the run configuration except the seed.
pub fn config_hash(config: &RunConfig) -> String {
    let canonical = format!("{:?}", RunConfig { seed: 0, ..config.clone() });
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub cell: Cell,
    pub seed_index: u32,
    pub config: RunConfig,
    /// Relative to the output directory.
    pub dir: PathBuf,
}

pub fn jobs(spec: &ExperimentSpec) -> Vec<Job> {
    let mut out = Vec::new();
    for cell in expand_cells(spec) {
        for k in 0..spec.seeds_per_cell {
            let config = cell.config(&spec.base, run_seed(spec.master_seed, k));
            let dir = PathBuf::from("runs").join(format!("{}-s{k}", config_hash(&config)));
            out.push(Job { cell: cell.clone(), seed_index: k, config, dir });
        }
    }
    out
}

/// The run matrix as text, one line per cell.
pub fn describe_matrix(spec: &ExperimentSpec) -> String {
    let cells = expand_cells(spec);
    let mut s = String::new();
    for cell in &cells {
        let hash = config_hash(&cell.config(&spec.base, 0));
        let _ = writeln!(s, "cell {:>3}  {hash}  x{} seeds  {}", cell.index, spec.seeds_per_cell, cell.label());
    }
    let _ = writeln!(
        s,
        "{} cells x {} seeds = {} runs, master seed {}, output {}",
        cells.len(),
        spec.seeds_per_cell,
        cells.len() * spec.seeds_per_cell as usize,
        spec.master_seed,
        spec.out_dir.display()
    );
    s
}

/// In-memory outcome of one job.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub job: Job,
    pub result: Result<MetricsSummary, String>,
}

fn execute_job(spec: &ExperimentSpec, job: &Job, write: bool) -> Result<MetricsSummary, String> {
    let result = run(&job.config).map_err(|e: SimError| e.to_string())?;
    let mut summary = summarize(&result).map_err(|e| e.to_string())?;
    if spec.probes != crate::evaluation::DEFAULT_PROBES {
        summary.accuracy = weekly_accuracy(&result, spec.probes).map_err(|e| e.to_string())?;
    }
    let grid = match (spec.grid, job.config.strategy) {
        (true, Strategy::Learning(rule)) => {
            let mut rng = rng_substream(job.config.seed, "grid");
            Some(winner_soh_grid(&final_fleet(&result), &job.config.standardizer, rule, &GridSpec::default(), &mut rng))
        }
        _ => None,
    };
    if write {
        let dir = spec.out_dir.join(&job.dir);
        output::write_run(&dir, &job.cell, job.seed_index, &result, &summary, grid.as_deref())
            .map_err(|e| format!("writing {}: {e}", dir.display()))?;
    }
    Ok(summary)
}

/// Runs every job without touching the file system.
pub fn run_matrix(spec: &ExperimentSpec, mode: ExecMode) -> Vec<RunOutcome> {
    let jobs = jobs(spec);
    par::map(mode, &jobs, |job| RunOutcome { job: job.clone(), result: execute_job(spec, job, false) })
}

/// Runs every job, writes per-run files, the manifest and the aggregate
/// tables. Failed runs are listed in the manifest and turn into an error
/// after everything else has been written.
pub fn run_experiment(spec: &ExperimentSpec, mode: ExecMode) -> Result<Vec<RunOutcome>, HarnessError> {
    fs::create_dir_all(&spec.out_dir).map_err(io_err(&spec.out_dir))?;
    let jobs = jobs(spec);
    let outcomes = par::map(mode, &jobs, |job| RunOutcome { job: job.clone(), result: execute_job(spec, job, true) });
    write_manifest(&spec.out_dir, &outcomes)?;
    aggregate::aggregate_dir(&spec.out_dir)?;
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    if failed > 0 {
        return Err(HarnessError::RunsFailed { failed, total: outcomes.len() });
    }
    Ok(outcomes)
}

fn write_manifest(out: &Path, outcomes: &[RunOutcome]) -> Result<(), HarnessError> {
    let mut s = String::from("run_dir,cell_index,seed_index,seed,status,error\n");
    for o in outcomes {
        let (status, err) = match &o.result {
            Ok(_) => ("ok", String::new()),
            Err(e) => ("failed", e.replace([',', '\n'], ";")),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{status},{err}",
            o.job.dir.display(),
            o.job.cell.index,
            o.job.seed_index,
            o.job.config.seed
        );
    }
    let path = out.join("manifest.csv");
    fs::write(&path, s).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::WinnerRule;

    #[test]
    fn paper_default_matrix_has_360_runs() {
        let spec = ExperimentSpec::default();
        assert_eq!(expand_cells(&spec).len(), 18);
        assert_eq!(jobs(&spec).len(), 360);
        assert!(describe_matrix(&spec).contains("18 cells x 20 seeds = 360 runs"));
    }

    #[test]
    fn threshold_cells_skip_forecasting() {
        let spec = ExperimentSpec {
            strategies: vec![StrategyKind::Learning, StrategyKind::Threshold],
            rules: vec![WinnerRule::LeastConfident],
            taus: vec![1200.0],
            forecasting: vec![false, true],
            ..ExperimentSpec::default()
        };
        let cells = expand_cells(&spec);
        assert_eq!(cells.len(), 2 + 6);
        assert!(cells.iter().filter(|c| matches!(c.strategy, Strategy::Threshold { .. })).all(|c| !c.forecasting));
    }

    #[test]
    fn seeds_are_shared_across_cells() {
        let spec = ExperimentSpec { seeds_per_cell: 2, ..ExperimentSpec::default() };
        let js = jobs(&spec);
        let a: Vec<u64> = js.iter().filter(|j| j.cell.index == 0).map(|j| j.config.seed).collect();
        let b: Vec<u64> = js.iter().filter(|j| j.cell.index == 5).map(|j| j.config.seed).collect();
        assert_eq!(a, b);
        assert_ne!(js[0].dir, js[2].dir);
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = RunConfig::default();
        assert_eq!(config_hash(&a), config_hash(&RunConfig { seed: 99, ..a.clone() }));
        assert_ne!(config_hash(&a), config_hash(&RunConfig { xi: 0.6, ..a }));
    }
}
