//! Ground truth and run metrics.
//!
//! The capability oracle answers whether a UAV of known SoH would complete a
//! task from a given SoC under the abort rule. Decision accuracy compares a
//! bidding policy against it on random probe tasks.

use rand::Rng;

use crate::auction::{evaluate_bids, learning_bid, Bid, TaskAnnouncement, WinnerRule};
use crate::energy::{delivery_discharge_rate, EnergyError, UavParams};
use crate::fulfilment::{OrderBounds, OrderStatus};
use crate::learning::{bid_decision, standardize, BidModel, FeatureVector, Standardizer};
use crate::sim::{rng_substream, AttemptOutcome, RunResult, WEEK};

pub const DEFAULT_PROBES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleVerdict {
    pub capable: bool,
    /// SoC spent on the loaded outbound leg (%).
    pub outbound_soc_drop: f64,
    /// Outbound plus unloaded return (%).
    pub roundtrip_soc_drop: f64,
}

/// Capable iff the destination is reached no later than the abort trigger
/// and the round trip leaves a non-negative SoC.
pub fn capability_oracle(
    distance: f64,
    mass: f64,
    soc: f64,
    soh: f64,
    xi: f64,
    params: &UavParams,
) -> Result<OracleVerdict, EnergyError> {
    let outbound_rate = delivery_discharge_rate(mass, params, soh)?;
    let return_rate = delivery_discharge_rate(0.0, params, soh)?;
    let t_dest = distance / params.speed;
    let t_trig = soc * (1.0 - xi) / outbound_rate;
    let outbound_soc_drop = t_dest * outbound_rate;
    let roundtrip_soc_drop = outbound_soc_drop + t_dest * return_rate;
    Ok(OracleVerdict { capable: t_dest <= t_trig && roundtrip_soc_drop <= soc, outbound_soc_drop, roundtrip_soc_drop })
}

/// Probe features: distance and mass uniform over the order bounds, SoC
/// uniform over [0, 100].
pub fn draw_probes<R: Rng + ?Sized>(rng: &mut R, n: usize, bounds: &OrderBounds) -> Vec<FeatureVector> {
    (0..n)
        .map(|_| {
            let distance = rng.random_range(bounds.distance_min..=bounds.distance_max);
            let mass = rng.random_range(bounds.mass_min..=bounds.mass_max);
            let soc = rng.random_range(0.0..=100.0);
            FeatureVector::new(distance, mass, soc)
        })
        .collect()
}

/// Fraction of probes on which `decide` agrees with the oracle.
pub fn accuracy_on<F>(
    probes: &[FeatureVector],
    decide: F,
    soh: f64,
    xi: f64,
    params: &UavParams,
) -> Result<f64, EnergyError>
where
    F: Fn(&FeatureVector) -> bool,
{
    if probes.is_empty() {
        return Err(EnergyError::InvalidArgument("probe set is empty"));
    }
    let mut correct = 0usize;
    for p in probes {
        let truth = capability_oracle(p.distance, p.mass, p.soc, soh, xi, params)?.capable;
        if decide(p) == truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / probes.len() as f64)
}

/// Accuracy of a learned model's bid decision over `n` fresh probes.
#[allow(clippy::too_many_arguments)]
pub fn decision_accuracy<R: Rng + ?Sized>(
    model: &BidModel,
    s: &Standardizer,
    soh: f64,
    xi: f64,
    params: &UavParams,
    bounds: &OrderBounds,
    probe_rng: &mut R,
    n: usize,
) -> Result<f64, EnergyError> {
    let probes = draw_probes(probe_rng, n, bounds);
    accuracy_on(&probes, |p| bid_decision(model, &standardize(p, s)), soh, xi, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub socs: Vec<f64>,
    pub distances: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            socs: (1..=10).map(|i| 10.0 * i as f64).collect(),
            distances: (0..=80).map(|i| 1000.0 + 50.0 * i as f64).collect(),
            masses: (0..=45).map(|i| (5.0 + i as f64) / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetMember {
    pub uav_id: u32,
    pub soh: f64,
    pub model: BidModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub soc: f64,
    pub distance: f64,
    pub mass: f64,
    /// `None` when no UAV bids.
    pub winner_soh: Option<f64>,
}

/// SoH of the auction winner for every (SoC, distance, mass) cell, with all
/// UAVs probed at the same SoC. Random-rule values come from `rng`, drawn in
/// UAV order.
pub fn winner_soh_grid<R: Rng + ?Sized>(
    fleet: &[FleetMember],
    s: &Standardizer,
    rule: WinnerRule,
    grid: &GridSpec,
    rng: &mut R,
) -> Vec<GridCell> {
    let mut cells = Vec::with_capacity(grid.socs.len() * grid.distances.len() * grid.masses.len());
    let mut bids: Vec<Bid> = Vec::with_capacity(fleet.len());
    for &soc in &grid.socs {
        for &distance in &grid.distances {
            for &mass in &grid.masses {
                let task = TaskAnnouncement { task_id: 0, mass, distance };
                bids.clear();
                for member in fleet {
                    if let Some(mut bid) = learning_bid(member.uav_id, &member.model, s, &task, soc) {
                        if rule == WinnerRule::Random {
                            bid.value = rng.random::<f64>();
                        }
                        bids.push(bid);
                    }
                }
                let winner_soh = evaluate_bids(&bids, rule, false)
                    .and_then(|id| fleet.iter().find(|m| m.uav_id == id))
                    .map(|m| m.soh);
                cells.push(GridCell { soc, distance, mass, winner_soh });
            }
        }
    }
    cells
}

/// Final-week fleet of a learning run, lost UAVs excluded.
pub fn final_fleet(run: &RunResult) -> Vec<FleetMember> {
    let Some(last) = run.snapshots.iter().map(|s| s.week).max() else {
        return Vec::new();
    };
    run.snapshots
        .iter()
        .filter(|s| s.week == last)
        .filter_map(|s| {
            let soh = run.fleet.iter().find(|u| u.uav_id == s.uav_id)?.soh;
            Some(FleetMember { uav_id: s.uav_id, soh, model: s.model })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub count: usize,
    pub mean: f64,
    pub p05: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Quantiles {
    /// NaN statistics for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mean = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        Self {
            count: v.len(),
            mean,
            p05: quantile(&v, 0.05),
            p25: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            p75: quantile(&v, 0.75),
            p95: quantile(&v, 0.95),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeeklyAccuracy {
    pub week: u32,
    pub uav_id: u32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub generated_orders: usize,
    pub delivered_count: usize,
    /// Still queued at the horizon.
    pub pending_count: usize,
    /// Allocated or reserved at the horizon.
    pub in_flight_count: usize,
    /// Order arrival to destination arrival (s).
    pub delivery_time: Quantiles,
    pub successes: usize,
    pub aborts: usize,
    /// `aborts / (aborts + successes)` in percent; NaN without attempts.
    pub aborted_percent: f64,
    /// Σ (T − arrival) over orders not delivered by T, by arrival week.
    pub backlog_age_by_week: Vec<f64>,
    pub backlog_age_total: f64,
    pub lost_uav_count: u32,
    pub accuracy: Vec<WeeklyAccuracy>,
}

/// Number of week buckets for a horizon; a partial last week counts.
pub fn week_buckets(horizon: f64) -> usize {
    ((horizon / WEEK - 1e-9).ceil() as usize).max(1)
}

/// Backlog age per arrival week. Orders in flight at T count as unfulfilled.
pub fn backlog_age_by_week(run: &RunResult) -> Vec<f64> {
    let horizon = run.config.horizon;
    let mut buckets = vec![0.0; week_buckets(horizon)];
    let last = buckets.len() - 1;
    for order in &run.orders {
        let fulfilled = order.status == OrderStatus::Delivered && order.delivered_time.is_some_and(|t| t <= horizon);
        if !fulfilled {
            let week = ((order.arrival_time / WEEK).floor() as usize).min(last);
            buckets[week] += horizon - order.arrival_time;
        }
    }
    buckets
}

/// Per-week, per-UAV decision accuracy over one shared probe set drawn from
/// the run's `probes` stream.
pub fn weekly_accuracy(run: &RunResult, n_probes: usize) -> Result<Vec<WeeklyAccuracy>, EnergyError> {
    if run.snapshots.is_empty() {
        return Ok(Vec::new());
    }
    let cfg = &run.config;
    let probes = draw_probes(&mut rng_substream(cfg.seed, "probes"), n_probes, &cfg.bounds);
    run.snapshots
        .iter()
        .map(|snap| {
            let soh = run
                .fleet
                .iter()
                .find(|u| u.uav_id == snap.uav_id)
                .map(|u| u.soh)
                .ok_or(EnergyError::InvalidArgument("snapshot of unknown UAV"))?;
            let accuracy = accuracy_on(
                &probes,
                |p| bid_decision(&snap.model, &standardize(p, &cfg.standardizer)),
                soh,
                cfg.xi,
                &cfg.params,
            )?;
            Ok(WeeklyAccuracy { week: snap.week, uav_id: snap.uav_id, accuracy })
        })
        .collect()
}

pub fn summarize(run: &RunResult) -> Result<MetricsSummary, EnergyError> {
    let mut delivery_times = Vec::new();
    let (mut pending_count, mut in_flight_count) = (0, 0);
    for order in &run.orders {
        match order.status {
            OrderStatus::Delivered => {
                let t = order.delivered_time.expect("delivered orders carry a time");
                delivery_times.push(t - order.arrival_time);
            }
            OrderStatus::Unallocated => pending_count += 1,
            OrderStatus::Allocated | OrderStatus::Reserved => in_flight_count += 1,
        }
    }
    let successes = run.attempts.iter().filter(|a| a.outcome == AttemptOutcome::Success).count();
    let aborts = run.attempts.iter().filter(|a| a.outcome == AttemptOutcome::Abort).count();
    let aborted_percent =
        if successes + aborts == 0 { f64::NAN } else { 100.0 * aborts as f64 / (successes + aborts) as f64 };
    let backlog_age_by_week = backlog_age_by_week(run);
    Ok(MetricsSummary {
        generated_orders: run.orders.len(),
        delivered_count: delivery_times.len(),
        pending_count,
        in_flight_count,
        delivery_time: Quantiles::of(&delivery_times),
        successes,
        aborts,
        aborted_percent,
        backlog_age_total: backlog_age_by_week.iter().sum(),
        backlog_age_by_week,
        lost_uav_count: run.lost_uavs,
        accuracy: weekly_accuracy(run, DEFAULT_PROBES)?,
    })
}

/// Fleet-mean accuracy in week `week`, if any UAV has a snapshot then.
pub fn mean_accuracy(summary: &MetricsSummary, week: u32) -> Option<f64> {
    let xs: Vec<f64> = summary.accuracy.iter().filter(|a| a.week == week).map(|a| a.accuracy).collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
