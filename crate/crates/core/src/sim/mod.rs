//! Deterministic discrete-event simulation of one fleet over one horizon.

mod engine;
pub mod events;
pub mod rng;

use thiserror::Error;

use crate::agent::AgentError;
use crate::auction::{Strategy, WinnerRule};
use crate::energy::{EnergyError, UavParams};
use crate::fulfilment::{FulfilmentError, Order, OrderBounds};
use crate::learning::{BidModel, LearningError, LearningSchedule, Standardizer, INIT_MAX_STEPS};

pub use engine::{run, run_with_models};
pub use rng::{rng_substream, run_seed};

pub const MINUTE: f64 = 60.0;
pub const HOUR: f64 = 3600.0;
pub const DAY: f64 = 86_400.0;
pub const WEEK: f64 = 7.0 * DAY;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("event scheduled at {time} before current time {now}")]
    ScheduleInPast { time: f64, now: f64 },
    #[error("internal consistency fault: {0}")]
    Consistency(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Fulfilment(#[from] FulfilmentError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Everything that determines one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fleet_size: u32,
    /// Horizon T (s).
    pub horizon: f64,
    /// Mean order inter-arrival time (s).
    pub mean_interarrival: f64,
    pub strategy: Strategy,
    pub forecasting: bool,
    /// Disable SGD updates during the run.
    pub freeze_learning: bool,
    /// Extra SoC above the forecast boundary before a reserved departure.
    pub reservation_margin: f64,
    /// Abort fraction: turn back once SoC falls to `xi·soc_takeoff`.
    pub xi: f64,
    pub alpha: f64,
    pub eta0: f64,
    pub schedule: LearningSchedule,
    pub init_max_steps: u64,
    pub standardizer: Standardizer,
    pub bounds: OrderBounds,
    pub params: UavParams,
    /// SoH is drawn uniformly from this range for each UAV.
    pub soh_range: (f64, f64),
    /// Advertisement period (s).
    pub advert_period: f64,
    /// Weeks of learning-only operation before the measured run. The
    /// pretraining fleet uses the same SoHs and an independent order stream.
    pub pretrain_weeks: u32,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fleet_size: 25,
            horizon: 8.0 * WEEK,
            mean_interarrival: 15.0 * MINUTE,
            strategy: Strategy::Learning(WinnerRule::LeastConfident),
            forecasting: false,
            freeze_learning: false,
            reservation_margin: 0.0,
            xi: 0.5,
            alpha: 0.01,
            eta0: 0.01,
            schedule: LearningSchedule::Optimal,
            init_max_steps: INIT_MAX_STEPS,
            standardizer: Standardizer::default(),
            bounds: OrderBounds::default(),
            params: UavParams::default(),
            soh_range: (0.5, 1.0),
            advert_period: 2.0,
            pretrain_weeks: 0,
            seed: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        if self.fleet_size < 1 {
            return bad("fleet_size must be at least 1");
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(self.mean_interarrival > 0.0) {
            return bad("mean inter-arrival time must be positive");
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return bad("xi must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.eta0 > 0.0) {
            return bad("alpha and eta0 must be positive");
        }
        if !(self.soh_range.0 > 0.0 && self.soh_range.0 <= self.soh_range.1 && self.soh_range.1 <= 1.0) {
            return bad("soh range must satisfy 0 < min <= max <= 1");
        }
        if !(self.advert_period > 0.0) {
            return bad("advertisement period must be positive");
        }
        if !(self.reservation_margin >= 0.0) {
            return bad("reservation margin must be non-negative");
        }
        if let Strategy::Threshold { level } = self.strategy {
            if !(0.0..=100.0).contains(&level) {
                return bad("threshold level must lie in [0, 100]");
            }
        }
        if !self.standardizer.is_valid() {
            return bad("standardiser sigma must be positive");
        }
        if !self.bounds.is_valid() {
            return bad("order bounds are inconsistent");
        }
        self.params.validate()?;
        Ok(())
    }

    /// Whole weeks covered by the horizon.
    pub fn weeks(&self) -> u32 {
        (self.horizon / WEEK + 1e-9).floor() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavRecord {
    pub uav_id: u32,
    pub soh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptOutcome {
    Success,
    Abort,
    Lost,
}

impl AttemptOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttemptOutcome::Success => "success",
            AttemptOutcome::Abort => "abort",
            AttemptOutcome::Lost => "lost",
        }
    }
}

/// One completed delivery attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttemptRecord {
    /// Takeoff time.
    pub time: f64,
    pub uav_id: u32,
    pub task_id: u64,
    pub soc_takeoff: f64,
    pub outcome: AttemptOutcome,
    /// Set iff the destination was reached.
    pub dest_arrival_time: Option<f64>,
    /// Unset for lost UAVs.
    pub fc_return_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSnapshot {
    pub week: u32,
    pub uav_id: u32,
    pub model: BidModel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events: u64,
    pub advertisements: u64,
    pub allocations: u64,
    pub reservations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: RunConfig,
    pub fleet: Vec<UavRecord>,
    pub orders: Vec<Order>,
    pub attempts: Vec<AttemptRecord>,
    /// Week 0 is the post-initialisation model; week k is taken at k·7 days.
    pub snapshots: Vec<ModelSnapshot>,
    pub lost_uavs: u32,
    pub stats: RunStats,
}
