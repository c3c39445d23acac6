use rand::Rng;

use super::events::{EventId, EventKind, EventQueue};
use super::rng::{rng_substream, uav_stream_label};
use super::{AttemptOutcome, AttemptRecord, ModelSnapshot, RunConfig, RunResult, RunStats, SimError, UavRecord, WEEK};
use crate::agent::{AgentState, AuctionResponse, FlightOutcome, FlightPlan, Policy, UavAgent};
use crate::auction::{evaluate_bids, Bid, Strategy};
use crate::fulfilment::{generate_arrivals, AdvertOutcome, FulfilmentCentre};
use crate::learning::{init_model_with, BidModel};

/// Runs one simulation to the horizon.
pub fn run(config: &RunConfig) -> Result<RunResult, SimError> {
    config.validate()?;
    let fleet = sample_fleet(config);
    let models = match config.strategy {
        Strategy::Threshold { .. } => None,
        Strategy::Learning(_) if config.pretrain_weeks > 0 => Some(pretrain(config, &fleet)?),
        Strategy::Learning(_) => Some(initial_models(config)?),
    };
    simulate(config, &fleet, models, "orders")
}

/// Runs with externally supplied models, one per UAV in id order.
pub fn run_with_models(config: &RunConfig, models: Vec<BidModel>) -> Result<RunResult, SimError> {
    config.validate()?;
    if models.len() != config.fleet_size as usize {
        return Err(SimError::InvalidConfig(format!("expected {} models, got {}", config.fleet_size, models.len())));
    }
    let fleet = sample_fleet(config);
    simulate(config, &fleet, Some(models), "orders")
}

fn sample_fleet(config: &RunConfig) -> Vec<UavRecord> {
    let mut rng = rng_substream(config.seed, "fleet");
    let (lo, hi) = config.soh_range;
    (1..=config.fleet_size).map(|uav_id| UavRecord { uav_id, soh: rng.random_range(lo..=hi) }).collect()
}

fn initial_models(config: &RunConfig) -> Result<Vec<BidModel>, SimError> {
    let start = BidModel::zeroed(config.alpha, config.eta0).with_schedule(config.schedule);
    let model = init_model_with(start, &config.bounds, &config.standardizer, config.init_max_steps)?;
    Ok(vec![model; config.fleet_size as usize])
}

fn pretrain(config: &RunConfig, fleet: &[UavRecord]) -> Result<Vec<BidModel>, SimError> {
    let warmup = RunConfig {
        horizon: config.pretrain_weeks as f64 * WEEK,
        forecasting: false,
        freeze_learning: false,
        pretrain_weeks: 0,
        ..config.clone()
    };
    let result = simulate(&warmup, fleet, Some(initial_models(config)?), "pretrain-orders")?;
    let last_week = result.snapshots.iter().map(|s| s.week).max().unwrap_or(0);
    let mut models = initial_models(config)?;
    for snap in result.snapshots.iter().filter(|s| s.week == last_week) {
        models[(snap.uav_id - 1) as usize] = snap.model;
    }
    Ok(models)
}

#[derive(Debug, Default, Clone, Copy)]
struct FlightEvents {
    destination: Option<EventId>,
    abort: Option<EventId>,
}

struct Engine<'a> {
    config: &'a RunConfig,
    policy: Policy,
    queue: EventQueue,
    fc: FulfilmentCentre,
    agents: Vec<UavAgent>,
    flights: Vec<FlightEvents>,
    attempts: Vec<AttemptRecord>,
    snapshots: Vec<ModelSnapshot>,
    tick_pending: bool,
    last_tick: f64,
    lost: u32,
    stats: RunStats,
    bids: Vec<Bid>,
}

fn simulate(
    config: &RunConfig,
    fleet: &[UavRecord],
    models: Option<Vec<BidModel>>,
    order_label: &str,
) -> Result<RunResult, SimError> {
    let mut order_rng = rng_substream(config.seed, order_label);
    let orders = generate_arrivals(&mut order_rng, config.mean_interarrival, config.horizon, &config.bounds);
    let agents = fleet
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let model = models.as_ref().map(|m| m[i]);
            UavAgent::new(u.uav_id, u.soh, model, rng_substream(config.seed, &uav_stream_label(u.uav_id)))
        })
        .collect::<Vec<_>>();
    let policy = Policy {
        strategy: config.strategy,
        standardizer: config.standardizer,
        forecasting: config.forecasting && matches!(config.strategy, Strategy::Learning(_)),
        learning_enabled: !config.freeze_learning,
        reservation_margin: config.reservation_margin,
        xi: config.xi,
        params: config.params,
    };
    let mut engine = Engine {
        config,
        policy,
        queue: EventQueue::new(),
        flights: vec![FlightEvents::default(); agents.len()],
        agents,
        fc: FulfilmentCentre::new(orders),
        attempts: Vec::new(),
        snapshots: Vec::new(),
        tick_pending: false,
        last_tick: f64::NEG_INFINITY,
        lost: 0,
        stats: RunStats::default(),
        bids: Vec::with_capacity(fleet.len()),
    };
    engine.execute()?;
    let stats = RunStats { events: engine.queue.processed(), ..engine.stats };
    Ok(RunResult {
        config: config.clone(),
        fleet: fleet.to_vec(),
        orders: engine.fc.into_orders(),
        attempts: engine.attempts,
        snapshots: engine.snapshots,
        lost_uavs: engine.lost,
        stats,
    })
}

impl Engine<'_> {
    fn execute(&mut self) -> Result<(), SimError> {
        let horizon = self.config.horizon;
        self.take_snapshot(0);
        if !self.fc.orders().is_empty() {
            self.queue.schedule(0.0, EventKind::OrderArrival(0))?;
        }
        for week in 1..=self.config.weeks() {
            self.queue.schedule(week as f64 * WEEK, EventKind::WeekSnapshot(week))?;
        }
        self.queue.schedule(horizon, EventKind::HorizonEnd)?;

        while let Some(event) = self.queue.next_event() {
            let now = event.time;
            match event.kind {
                EventKind::OrderArrival(id) => {
                    self.fc.arrive(id)?;
                    if let Some(next) = self.fc.orders().get(id as usize + 1) {
                        self.queue.schedule(next.arrival_time, EventKind::OrderArrival(next.id))?;
                    }
                    self.ensure_tick(now)?;
                }
                EventKind::AdvertisementTick => self.advertise(now)?,
                EventKind::DestinationArrival(uav) => {
                    let slot = self.slot(uav);
                    if let Some(id) = self.flights[slot].abort.take() {
                        self.queue.cancel(id);
                    }
                    self.flights[slot].destination = None;
                    let task = self.task_of(slot)?;
                    self.fc.mark_delivered(task, now)?;
                    self.turn_back(slot, now)?;
                }
                EventKind::AbortTrigger(uav) => {
                    let slot = self.slot(uav);
                    if let Some(id) = self.flights[slot].destination.take() {
                        self.queue.cancel(id);
                    }
                    self.flights[slot].abort = None;
                    self.turn_back(slot, now)?;
                }
                EventKind::FcArrival(uav) => self.fc_arrival(self.slot(uav), now)?,
                EventKind::UavLost(uav) => self.uav_lost(self.slot(uav), now)?,
                EventKind::ReservationReady(uav) => {
                    let slot = self.slot(uav);
                    let task = self.task_of(slot)?;
                    let plan = self.agents[slot].depart_reserved(now, &self.policy)?;
                    self.fc.start_reserved(task)?;
                    self.schedule_flight(slot, &plan)?;
                }
                EventKind::WeekSnapshot(week) => self.take_snapshot(week),
                EventKind::HorizonEnd => break,
            }
        }
        Ok(())
    }

    fn slot(&self, uav_id: u32) -> usize {
        (uav_id - 1) as usize
    }

    fn task_of(&self, slot: usize) -> Result<u64, SimError> {
        self.agents[slot]
            .current_task()
            .map(|t| t.task_id)
            .ok_or_else(|| SimError::Consistency(format!("UAV {} has no task", slot + 1)))
    }

    fn any_waiting(&self) -> bool {
        self.agents.iter().any(|a| a.state() == AgentState::Wait)
    }

    /// Schedules the next advertisement on the period grid if the FC could
    /// advertise: an unallocated order exists and some UAV waits.
    fn ensure_tick(&mut self, now: f64) -> Result<(), SimError> {
        if self.tick_pending || self.fc.queue().is_empty() || !self.any_waiting() {
            return Ok(());
        }
        let period = self.config.advert_period;
        let mut t = (now / period).ceil() * period;
        if t <= self.last_tick {
            t = self.last_tick + period;
        }
        if t > self.config.horizon {
            return Ok(());
        }
        self.queue.schedule(t, EventKind::AdvertisementTick)?;
        self.tick_pending = true;
        Ok(())
    }

    fn advertise(&mut self, now: f64) -> Result<(), SimError> {
        self.tick_pending = false;
        self.last_tick = now;
        let Some(task) = self.fc.advertisement_tick(self.any_waiting()) else {
            return Ok(());
        };
        self.stats.advertisements += 1;

        self.bids.clear();
        for agent in self.agents.iter_mut() {
            if let Some(bid) = agent.handle_announcement(&task, now, &self.policy) {
                self.bids.push(bid);
            }
        }
        if self.bids.is_empty() {
            self.fc.record_outcome(task.task_id, AdvertOutcome::NoBids)?;
            return self.ensure_tick(now);
        }

        // each bidder evaluates the broadcast set on its own
        let rule = self.config.strategy.evaluation_rule();
        let forecasting = self.policy.forecasting;
        let mut winner = None;
        for (i, bid) in self.bids.iter().enumerate() {
            let mut view = self.bids.clone();
            view.rotate_left(i);
            let local = evaluate_bids(&view, rule, forecasting);
            match (winner, local) {
                (None, _) => winner = Some(local),
                (Some(w), l) if w != l => {
                    return Err(SimError::Consistency(format!(
                        "UAV {} disagrees on the winner of task {}",
                        bid.uav_id, task.task_id
                    )))
                }
                _ => {}
            }
        }
        let winner = winner.flatten();

        let bidders: Vec<u32> = self.bids.iter().map(|b| b.uav_id).collect();
        let mut outcome = AdvertOutcome::NoBids;
        for uav in bidders {
            let slot = self.slot(uav);
            match self.agents[slot].handle_auction_result(winner, now, &self.policy)? {
                AuctionResponse::NotWon => {}
                AuctionResponse::Depart(plan) => {
                    outcome = AdvertOutcome::Allocated;
                    self.schedule_flight(slot, &plan)?;
                }
                AuctionResponse::Reserved { ready_time, .. } => {
                    outcome = AdvertOutcome::Reserved;
                    self.stats.reservations += 1;
                    self.queue.schedule(ready_time, EventKind::ReservationReady(uav))?;
                }
            }
        }
        if outcome == AdvertOutcome::NoBids {
            return Err(SimError::Consistency(format!("bids on task {} but no winner", task.task_id)));
        }
        self.stats.allocations += 1;
        self.fc.record_outcome(task.task_id, outcome)?;
        self.ensure_tick(now)
    }

    fn schedule_flight(&mut self, slot: usize, plan: &FlightPlan) -> Result<(), SimError> {
        let uav = self.agents[slot].id;
        let destination = self.queue.schedule(plan.dest_arrival_time, EventKind::DestinationArrival(uav))?;
        let abort = self.queue.schedule(plan.trigger_time, EventKind::AbortTrigger(uav))?;
        self.flights[slot] = FlightEvents { destination: Some(destination), abort: Some(abort) };
        Ok(())
    }

    fn turn_back(&mut self, slot: usize, now: f64) -> Result<(), SimError> {
        self.agents[slot].turn_back(now)?;
        let plan = *self.agents[slot].plan().expect("plan while flying");
        let uav = self.agents[slot].id;
        match plan.lost_time {
            Some(t) => self.queue.schedule(t, EventKind::UavLost(uav))?,
            None => self.queue.schedule(plan.fc_return_time, EventKind::FcArrival(uav))?,
        };
        Ok(())
    }

    fn fc_arrival(&mut self, slot: usize, now: f64) -> Result<(), SimError> {
        let agent = &self.agents[slot];
        let plan = *agent.plan().expect("plan while returning");
        let task = self.task_of(slot)?;
        let soc_takeoff = agent.soc_takeoff().expect("takeoff SoC recorded");
        self.agents[slot].handle_return(now, &self.policy)?;
        let outcome = match plan.outcome {
            FlightOutcome::Success => AttemptOutcome::Success,
            FlightOutcome::Abort => {
                self.fc.release_order(task)?;
                AttemptOutcome::Abort
            }
        };
        self.attempts.push(AttemptRecord {
            time: plan.depart_time,
            uav_id: self.agents[slot].id,
            task_id: task,
            soc_takeoff,
            outcome,
            dest_arrival_time: (outcome == AttemptOutcome::Success).then_some(plan.dest_arrival_time),
            fc_return_time: Some(now),
        });
        self.ensure_tick(now)
    }

    fn uav_lost(&mut self, slot: usize, _now: f64) -> Result<(), SimError> {
        let plan = *self.agents[slot].plan().expect("plan while returning");
        let task = self.task_of(slot)?;
        let soc_takeoff = self.agents[slot].soc_takeoff().expect("takeoff SoC recorded");
        self.agents[slot].lose()?;
        if plan.outcome == FlightOutcome::Abort {
            self.fc.release_order(task)?;
        }
        self.lost += 1;
        self.attempts.push(AttemptRecord {
            time: plan.depart_time,
            uav_id: self.agents[slot].id,
            task_id: task,
            soc_takeoff,
            outcome: AttemptOutcome::Lost,
            dest_arrival_time: (plan.outcome == FlightOutcome::Success).then_some(plan.dest_arrival_time),
            fc_return_time: None,
        });
        Ok(())
    }

    fn take_snapshot(&mut self, week: u32) {
        for agent in &self.agents {
            if agent.state() == AgentState::Lost {
                continue;
            }
            if let Some(model) = agent.model() {
                self.snapshots.push(ModelSnapshot { week, uav_id: agent.id, model: *model });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::WinnerRule;
    use crate::fulfilment::OrderStatus;
    use crate::sim::DAY;

    fn small(seed: u64) -> RunConfig {
        RunConfig { fleet_size: 5, horizon: 2.0 * DAY, mean_interarrival: 900.0, seed, ..RunConfig::default() }
    }

    #[test]
    fn infinite_interarrival_means_idle_fleet() {
        let cfg = RunConfig { mean_interarrival: f64::INFINITY, horizon: DAY, ..RunConfig::default() };
        let r = run(&cfg).unwrap();
        assert!(r.orders.is_empty());
        assert!(r.attempts.is_empty());
        assert_eq!(r.stats.advertisements, 0);
    }

    #[test]
    fn single_uav_single_order() {
        // τ = 1e9 s yields exactly the t = 0 order within a one-day horizon
        let cfg = RunConfig { fleet_size: 1, horizon: DAY, mean_interarrival: 1e9, seed: 3, ..RunConfig::default() };
        let r = run(&cfg).unwrap();
        assert_eq!(r.orders.len(), 1);
        let order = &r.orders[0];
        assert_eq!(r.attempts.len(), 1);
        assert_eq!(r.attempts[0].outcome, AttemptOutcome::Success);
        assert_eq!(order.status, OrderStatus::Delivered);
        let expected = order.distance / cfg.params.speed;
        assert!((order.delivered_time.unwrap() - order.arrival_time - expected).abs() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = run(&small(9)).unwrap();
        let b = run(&small(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn winner_rule_does_not_change_orders() {
        let a = run(&small(4)).unwrap();
        let b = run(&RunConfig { strategy: Strategy::Learning(WinnerRule::MostConfident), ..small(4) }).unwrap();
        let strip = |r: &RunResult| r.orders.iter().map(|o| (o.arrival_time, o.mass, o.distance)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn fleet_size_does_not_change_orders() {
        let a = run(&small(4)).unwrap();
        let b = run(&RunConfig { fleet_size: 9, ..small(4) }).unwrap();
        let strip = |r: &RunResult| r.orders.iter().map(|o| (o.arrival_time, o.mass, o.distance)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn threshold_run_has_no_snapshots() {
        let r = run(&RunConfig { strategy: Strategy::Threshold { level: 80.0 }, ..small(2) }).unwrap();
        assert!(r.snapshots.is_empty());
        assert!(!r.attempts.is_empty());
    }

    #[test]
    fn run_with_models_checks_fleet_size() {
        let cfg = small(1);
        assert!(matches!(run_with_models(&cfg, vec![]), Err(SimError::InvalidConfig(_))));
    }
}
