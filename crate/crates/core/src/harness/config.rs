//! Experiment configuration: a TOML document with flat dotted keys, plus
//! command-line overrides.
//!
//! Tables and dotted keys are interchangeable (`[sweep] seeds = 5` is the
//! same as `sweep.seeds = 5`). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::Value;

use crate::auction::{Strategy, WinnerRule};
use crate::learning::LearningSchedule;
use crate::sim::{RunConfig, MINUTE, WEEK};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Learning,
    Threshold,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Learning => "learning",
            StrategyKind::Threshold => "threshold",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "learning" => Ok(StrategyKind::Learning),
            "threshold" => Ok(StrategyKind::Threshold),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// A sweep: the base run configuration and the axes varied around it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Every field not named by an axis comes from here.
    pub base: RunConfig,
    /// Mean inter-arrival times (s).
    pub taus: Vec<f64>,
    pub rules: Vec<WinnerRule>,
    pub strategies: Vec<StrategyKind>,
    pub threshold_levels: Vec<f64>,
    pub xis: Vec<f64>,
    pub fleet_sizes: Vec<u32>,
    pub forecasting: Vec<bool>,
    pub seeds_per_cell: u32,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Write winner-SoH grids for learning runs.
    pub grid: bool,
    pub probes: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: RunConfig::default(),
            taus: [15.0, 20.0, 25.0, 30.0, 35.0, 40.0].iter().map(|m| m * MINUTE).collect(),
            rules: WinnerRule::ALL.to_vec(),
            strategies: vec![StrategyKind::Learning],
            threshold_levels: vec![50.0, 60.0, 70.0, 80.0, 90.0, 100.0],
            xis: vec![0.5],
            fleet_sizes: vec![25],
            forecasting: vec![false],
            seeds_per_cell: 20,
            master_seed: 1,
            out_dir: PathBuf::from("results"),
            grid: false,
            probes: crate::evaluation::DEFAULT_PROBES,
        }
    }
}

/// Command-line values that replace whatever the file says.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub strategies: Option<Vec<StrategyKind>>,
    pub rules: Option<Vec<WinnerRule>>,
    pub tau_minutes: Option<Vec<f64>>,
    pub weeks: Option<f64>,
    pub fleet_sizes: Option<Vec<u32>>,
    pub xis: Option<Vec<f64>>,
    pub forecasting: Option<bool>,
    pub threshold_levels: Option<Vec<f64>>,
    pub seeds_per_cell: Option<u32>,
    pub out_dir: Option<PathBuf>,
}

/// All recognised keys with a one-line description; the README mirrors this.
pub const KEYS: &[(&str, &str)] = &[
    ("run.weeks", "horizon in weeks (float)"),
    ("run.seed", "master seed"),
    ("run.soh_min", "lower bound of the uniform SoH draw"),
    ("run.soh_max", "upper bound of the uniform SoH draw"),
    ("run.advert_period", "seconds between advertisements"),
    ("run.pretrain_weeks", "learning-only warm-up weeks before the measured run"),
    ("run.freeze_learning", "disable SGD updates during the measured run"),
    ("run.reservation_margin", "SoC added to the forecast boundary before a reserved departure"),
    ("learning.alpha", "L2 regularisation strength"),
    ("learning.eta0", "initial learning rate of the `decay` schedule"),
    ("learning.schedule", "`optimal` or `decay`"),
    ("learning.init_max_steps", "step cap of the seed initialisation"),
    ("learning.mu", "standardisation means [d, m, soc]"),
    ("learning.sigma", "standardisation deviations [d, m, soc]"),
    ("orders.distance_min", "m"),
    ("orders.distance_max", "m"),
    ("orders.mass_min", "kg"),
    ("orders.mass_max", "kg"),
    ("uav.frame_mass", "kg"),
    ("uav.battery_mass", "kg"),
    ("uav.rotor_count", "rotors"),
    ("uav.blade_disc_area", "m^2"),
    ("uav.speed", "m/s"),
    ("uav.capacity_wh", "theoretical capacity, Wh"),
    ("uav.charger_power", "W"),
    ("uav.charger_efficiency", "in (0, 1]"),
    ("uav.gravity", "m/s^2"),
    ("uav.air_density", "kg/m^3"),
    ("sweep.tau_minutes", "mean inter-arrival times, minutes"),
    ("sweep.winner_rules", "least_confident, most_confident, random"),
    ("sweep.strategies", "learning, threshold"),
    ("sweep.threshold_levels", "SoC levels for threshold cells"),
    ("sweep.xi", "abort fractions"),
    ("sweep.fleet_sizes", "fleet sizes"),
    ("sweep.forecasting", "booleans; applies to learning cells"),
    ("sweep.seeds", "seeds per cell"),
    ("output.dir", "output directory"),
    ("output.grid", "write winner-SoH grids"),
    ("output.probes", "probe tasks per accuracy evaluation"),
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(invalid(key, "expected a number")),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(invalid(key, "expected a non-negative integer")),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| invalid(key, "expected true or false"))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or_else(|| invalid(key, "expected a string"))
}

/// Accepts a scalar as a one-element list.
fn as_list(v: &Value) -> Vec<&Value> {
    match v {
        Value::Array(xs) => xs.iter().collect(),
        other => vec![other],
    }
}

fn list<T>(key: &str, v: &Value, f: impl Fn(&str, &Value) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    let xs = as_list(v).into_iter().map(|x| f(key, x)).collect::<Result<Vec<_>, _>>()?;
    if xs.is_empty() {
        return Err(invalid(key, "list must not be empty"));
    }
    Ok(xs)
}

fn parsed<T: std::str::FromStr<Err = String>>(key: &str, v: &Value) -> Result<T, ConfigError> {
    as_str(key, v)?.parse().map_err(|e: String| invalid(key, e))
}

fn vec3(key: &str, v: &Value) -> Result<[f64; 3], ConfigError> {
    let xs = list(key, v, as_f64)?;
    xs.try_into().map_err(|_| invalid(key, "expected three numbers"))
}

/// Parses a TOML document into a spec on top of the defaults.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let table: toml::Table = text.parse()?;
    let mut flat = BTreeMap::new();
    flatten("", &table, &mut flat);
    let mut spec = ExperimentSpec::default();
    for (key, v) in &flat {
        let k = key.as_str();
        let base = &mut spec.base;
        match k {
            "run.weeks" => base.horizon = as_f64(k, v)? * WEEK,
            "run.seed" => spec.master_seed = as_u64(k, v)?,
            "run.soh_min" => base.soh_range.0 = as_f64(k, v)?,
            "run.soh_max" => base.soh_range.1 = as_f64(k, v)?,
            "run.advert_period" => base.advert_period = as_f64(k, v)?,
            "run.pretrain_weeks" => base.pretrain_weeks = as_u64(k, v)? as u32,
            "run.freeze_learning" => base.freeze_learning = as_bool(k, v)?,
            "run.reservation_margin" => base.reservation_margin = as_f64(k, v)?,
            "learning.alpha" => base.alpha = as_f64(k, v)?,
            "learning.eta0" => base.eta0 = as_f64(k, v)?,
            "learning.schedule" => base.schedule = parsed::<LearningSchedule>(k, v)?,
            "learning.init_max_steps" => base.init_max_steps = as_u64(k, v)?,
            "learning.mu" => base.standardizer.mu = vec3(k, v)?,
            "learning.sigma" => base.standardizer.sigma = vec3(k, v)?,
            "orders.distance_min" => base.bounds.distance_min = as_f64(k, v)?,
            "orders.distance_max" => base.bounds.distance_max = as_f64(k, v)?,
            "orders.mass_min" => base.bounds.mass_min = as_f64(k, v)?,
            "orders.mass_max" => base.bounds.mass_max = as_f64(k, v)?,
            "uav.frame_mass" => base.params.frame_mass = as_f64(k, v)?,
            "uav.battery_mass" => base.params.battery_mass = as_f64(k, v)?,
            "uav.rotor_count" => base.params.rotor_count = as_u64(k, v)? as u32,
            "uav.blade_disc_area" => base.params.blade_disc_area = as_f64(k, v)?,
            "uav.speed" => base.params.speed = as_f64(k, v)?,
            "uav.capacity_wh" => base.params.theoretical_capacity = as_f64(k, v)?,
            "uav.charger_power" => base.params.charger_power = as_f64(k, v)?,
            "uav.charger_efficiency" => base.params.charger_efficiency = as_f64(k, v)?,
            "uav.gravity" => base.params.gravity = as_f64(k, v)?,
            "uav.air_density" => base.params.air_density = as_f64(k, v)?,
            "sweep.tau_minutes" => spec.taus = list(k, v, as_f64)?.into_iter().map(|m| m * MINUTE).collect(),
            "sweep.winner_rules" => spec.rules = list(k, v, parsed::<WinnerRule>)?,
            "sweep.strategies" => spec.strategies = list(k, v, parsed::<StrategyKind>)?,
            "sweep.threshold_levels" => spec.threshold_levels = list(k, v, as_f64)?,
            "sweep.xi" => spec.xis = list(k, v, as_f64)?,
            "sweep.fleet_sizes" => spec.fleet_sizes = list(k, v, |k, v| as_u64(k, v).map(|n| n as u32))?,
            "sweep.forecasting" => spec.forecasting = list(k, v, as_bool)?,
            "sweep.seeds" => spec.seeds_per_cell = as_u64(k, v)? as u32,
            "output.dir" => spec.out_dir = PathBuf::from(as_str(k, v)?),
            "output.grid" => spec.grid = as_bool(k, v)?,
            "output.probes" => spec.probes = as_u64(k, v)? as usize,
            _ => return Err(ConfigError::UnknownKey(key.clone())),
        }
    }
    validate(&spec)?;
    Ok(spec)
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

/// Reads the file if given (defaults otherwise), then applies `overrides`.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentSpec, ConfigError> {
    let mut spec = match path {
        Some(p) => parse_config_file(p)?,
        None => ExperimentSpec::default(),
    };
    apply_overrides(&mut spec, overrides);
    validate(&spec)?;
    Ok(spec)
}

pub fn apply_overrides(spec: &mut ExperimentSpec, o: &Overrides) {
    if let Some(seed) = o.seed {
        spec.master_seed = seed;
    }
    if let Some(s) = &o.strategies {
        spec.strategies = s.clone();
    }
    if let Some(r) = &o.rules {
        spec.rules = r.clone();
    }
    if let Some(t) = &o.tau_minutes {
        spec.taus = t.iter().map(|m| m * MINUTE).collect();
    }
    if let Some(w) = o.weeks {
        spec.base.horizon = w * WEEK;
    }
    if let Some(f) = &o.fleet_sizes {
        spec.fleet_sizes = f.clone();
    }
    if let Some(x) = &o.xis {
        spec.xis = x.clone();
    }
    if let Some(f) = o.forecasting {
        spec.forecasting = vec![f];
    }
    if let Some(l) = &o.threshold_levels {
        spec.threshold_levels = l.clone();
    }
    if let Some(n) = o.seeds_per_cell {
        spec.seeds_per_cell = n;
    }
    if let Some(d) = &o.out_dir {
        spec.out_dir = d.clone();
    }
}

/// Domain checks with the offending key named.
pub fn validate(spec: &ExperimentSpec) -> Result<(), ConfigError> {
    if spec.taus.is_empty() || spec.taus.iter().any(|t| !(*t > 0.0)) {
        return Err(invalid("sweep.tau_minutes", "mean inter-arrival time must be positive"));
    }
    if spec.xis.is_empty() || spec.xis.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
        return Err(invalid("sweep.xi", "xi must lie in (0, 1)"));
    }
    if spec.fleet_sizes.is_empty() || spec.fleet_sizes.iter().any(|s| *s < 1) {
        return Err(invalid("sweep.fleet_sizes", "fleet size must be at least 1"));
    }
    if spec.rules.is_empty() {
        return Err(invalid("sweep.winner_rules", "at least one rule is required"));
    }
    if spec.strategies.is_empty() {
        return Err(invalid("sweep.strategies", "at least one strategy is required"));
    }
    if spec.strategies.contains(&StrategyKind::Threshold)
        && (spec.threshold_levels.is_empty() || spec.threshold_levels.iter().any(|l| !(0.0..=100.0).contains(l)))
    {
        return Err(invalid("sweep.threshold_levels", "levels must lie in [0, 100]"));
    }
    if spec.forecasting.is_empty() {
        return Err(invalid("sweep.forecasting", "at least one value is required"));
    }
    if spec.seeds_per_cell < 1 {
        return Err(invalid("sweep.seeds", "at least one seed per cell"));
    }
    if spec.probes < 1 {
        return Err(invalid("output.probes", "at least one probe"));
    }
    if !(spec.base.horizon > 0.0 && spec.base.horizon.is_finite()) {
        return Err(invalid("run.weeks", "horizon must be positive"));
    }
    // everything else through the run-level checks, on a representative cell
    let probe = RunConfig {
        mean_interarrival: spec.taus[0],
        xi: spec.xis[0],
        fleet_size: spec.fleet_sizes[0],
        strategy: Strategy::Learning(spec.rules[0]),
        ..spec.base.clone()
    };
    probe.validate().map_err(|e| invalid("run", e.to_string()))
}
