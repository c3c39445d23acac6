//! UAV controller: a finite-state machine driven by the simulation engine.
//!
//! ```text
//! Wait -> Deciding -> AwaitingOutcome -> Deliver -> Return -> Wait
//!            |               |                         |
//!            +-> Wait        +-> Wait                  +-> Lost
//!                            +-> ReservedCharging -> Deliver
//! ```
//!
//! While at the FC the battery charges along the closed-form curve from the
//! last checkpoint. In flight, SoC follows the linear plan fixed at takeoff.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::auction::{
    learning_bid, reservation_bid, threshold_bid, Bid, BidKind, Strategy, TaskAnnouncement, WinnerRule,
};
use crate::energy::{charge_soc, delivery_discharge_rate, discharge_soc, time_to_reach_soc, EnergyError, UavParams};
use crate::learning::{sgd_step, BidModel, FeatureVector, LabelledSample, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentState {
    Wait,
    Deciding,
    AwaitingOutcome,
    Deliver,
    Return,
    Lost,
    ReservedCharging,
}

impl AgentState {
    pub fn at_fc(&self) -> bool {
        matches!(
            self,
            AgentState::Wait | AgentState::Deciding | AgentState::AwaitingOutcome | AgentState::ReservedCharging
        )
    }

    pub fn can_transition_to(&self, to: AgentState) -> bool {
        use AgentState::*;
        matches!(
            (self, to),
            (Wait, Deciding)
                | (Deciding, Wait)
                | (Deciding, AwaitingOutcome)
                | (AwaitingOutcome, Wait)
                | (AwaitingOutcome, Deliver)
                | (AwaitingOutcome, ReservedCharging)
                | (ReservedCharging, Deliver)
                | (Deliver, Return)
                | (Return, Wait)
                | (Return, Lost)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AgentError {
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: AgentState, to: AgentState },
    #[error("operation requires state {expected:?}, agent is {actual:?}")]
    WrongState { expected: AgentState, actual: AgentState },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlightOutcome {
    Success,
    Abort,
}

/// Closed-form timeline of one delivery attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightPlan {
    pub depart_time: f64,
    pub distance: f64,
    pub mass: f64,
    pub soc_takeoff: f64,
    /// Loaded SoC drain (%/s).
    pub outbound_rate: f64,
    /// Unloaded SoC drain (%/s).
    pub return_rate: f64,
    /// When the destination would be reached.
    pub dest_arrival_time: f64,
    /// When the abort rule would fire on the outbound leg.
    pub trigger_time: f64,
    /// Set only if the attempt is aborted.
    pub abort_time: Option<f64>,
    pub outcome: FlightOutcome,
    /// Turn-around distance from the FC (m).
    pub turn_position: f64,
    pub soc_at_turn: f64,
    pub fc_return_time: f64,
    pub soc_at_return: f64,
    /// Set if the battery empties before the FC is reached.
    pub lost_time: Option<f64>,
}

impl FlightPlan {
    pub fn turn_time(&self) -> f64 {
        self.abort_time.unwrap_or(self.dest_arrival_time)
    }

    pub fn is_lost(&self) -> bool {
        self.lost_time.is_some()
    }

    pub fn soc_at(&self, t: f64) -> f64 {
        let turn = self.turn_time();
        if t <= turn {
            discharge_soc(self.soc_takeoff, t - self.depart_time, self.outbound_rate)
        } else {
            discharge_soc(self.soc_at_turn, t - turn, self.return_rate)
        }
    }

    pub fn position_at(&self, t: f64, speed: f64) -> f64 {
        let turn = self.turn_time();
        if t <= turn {
            speed * (t - self.depart_time)
        } else {
            (self.turn_position - speed * (t - turn)).max(0.0)
        }
    }
}

/// Plans an attempt: fly out loaded, turn back when the destination is
/// reached or when SoC falls to `xi·soc_takeoff`, whichever comes first, and
/// return unloaded.
pub fn plan_flight(
    task: &TaskAnnouncement,
    soc_takeoff: f64,
    xi: f64,
    soh: f64,
    params: &UavParams,
    depart_time: f64,
) -> Result<FlightPlan, EnergyError> {
    let outbound_rate = delivery_discharge_rate(task.mass, params, soh)?;
    let return_rate = delivery_discharge_rate(0.0, params, soh)?;
    let t_trig = soc_takeoff * (1.0 - xi) / outbound_rate;
    let t_dest = task.distance / params.speed;
    let (outcome, t_turn) =
        if t_dest <= t_trig { (FlightOutcome::Success, t_dest) } else { (FlightOutcome::Abort, t_trig) };
    let turn_position = match outcome {
        FlightOutcome::Success => task.distance,
        FlightOutcome::Abort => params.speed * t_trig,
    };
    let soc_at_turn = discharge_soc(soc_takeoff, t_turn, outbound_rate);
    let t_back = turn_position / params.speed;
    let remaining = soc_at_turn - return_rate * t_back;
    let turn_time = depart_time + t_turn;
    let lost_time = (remaining < 0.0).then(|| turn_time + soc_at_turn / return_rate);
    Ok(FlightPlan {
        depart_time,
        distance: task.distance,
        mass: task.mass,
        soc_takeoff,
        outbound_rate,
        return_rate,
        dest_arrival_time: depart_time + t_dest,
        trigger_time: depart_time + t_trig,
        abort_time: (outcome == FlightOutcome::Abort).then_some(turn_time),
        outcome,
        turn_position,
        soc_at_turn,
        fc_return_time: turn_time + t_back,
        soc_at_return: remaining.max(0.0),
        lost_time,
    })
}

/// Fleet-wide bidding configuration handed to every agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    pub strategy: Strategy,
    pub standardizer: Standardizer,
    pub forecasting: bool,
    /// Apply SGD updates on return.
    pub learning_enabled: bool,
    pub reservation_margin: f64,
    pub xi: f64,
    pub params: UavParams,
}

/// What an agent does after the auction resolves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuctionResponse {
    NotWon,
    Depart(FlightPlan),
    /// Charging towards `target_soc`, departing at `ready_time`.
    Reserved {
        ready_time: f64,
        target_soc: f64,
    },
}

#[derive(Debug, Clone)]
pub struct UavAgent {
    pub id: u32,
    soh: f64,
    model: Option<BidModel>,
    state: AgentState,
    soc_checkpoint: f64,
    checkpoint_time: f64,
    soc_takeoff: Option<f64>,
    task: Option<TaskAnnouncement>,
    plan: Option<FlightPlan>,
    pending: Option<(BidKind, Option<f64>)>,
    reservation_target: Option<f64>,
    position: f64,
    rng: ChaCha8Rng,
}

impl UavAgent {
    /// A fully charged agent waiting at the FC. `model` is `None` for
    /// strategies without a learner.
    pub fn new(id: u32, soh: f64, model: Option<BidModel>, rng: ChaCha8Rng) -> Self {
        Self {
            id,
            soh,
            model,
            state: AgentState::Wait,
            soc_checkpoint: 100.0,
            checkpoint_time: 0.0,
            soc_takeoff: None,
            task: None,
            plan: None,
            pending: None,
            reservation_target: None,
            position: 0.0,
            rng,
        }
    }

    pub fn state(&self) -> AgentState {
        self.state
    }

    /// Hidden from the bidding logic; exposed for the simulator and probes.
    pub fn soh(&self) -> f64 {
        self.soh
    }

    pub fn model(&self) -> Option<&BidModel> {
        self.model.as_ref()
    }

    pub fn soc_takeoff(&self) -> Option<f64> {
        self.soc_takeoff
    }

    pub fn current_task(&self) -> Option<&TaskAnnouncement> {
        self.task.as_ref()
    }

    pub fn plan(&self) -> Option<&FlightPlan> {
        self.plan.as_ref()
    }

    pub fn reservation_target(&self) -> Option<f64> {
        self.reservation_target
    }

    /// Distance from the FC as of the last processed event.
    pub fn position(&self) -> f64 {
        self.position
    }

    /// SoC at time `t` (not earlier than the last event for this agent).
    pub fn soc_at(&self, t: f64, params: &UavParams) -> f64 {
        match (self.state, &self.plan) {
            (AgentState::Lost, _) => 0.0,
            (s, _) if s.at_fc() => charge_soc(self.soc_checkpoint, t - self.checkpoint_time, params),
            (_, Some(plan)) => plan.soc_at(t),
            _ => self.soc_checkpoint,
        }
    }

    /// Folds charging up to `t` into the checkpoint.
    pub fn checkpoint(&mut self, t: f64, params: &UavParams) {
        if self.state.at_fc() {
            self.soc_checkpoint = self.soc_at(t, params);
            self.checkpoint_time = t;
        }
    }

    fn transition(&mut self, to: AgentState) -> Result<(), AgentError> {
        if !self.state.can_transition_to(to) {
            return Err(AgentError::IllegalTransition { from: self.state, to });
        }
        self.state = to;
        Ok(())
    }

    fn require(&self, expected: AgentState) -> Result<(), AgentError> {
        if self.state != expected {
            return Err(AgentError::WrongState { expected, actual: self.state });
        }
        Ok(())
    }

    /// Decides whether to bid on an announced task. Agents not in `Wait`
    /// ignore announcements.
    pub fn handle_announcement(&mut self, task: &TaskAnnouncement, now: f64, policy: &Policy) -> Option<Bid> {
        if self.state != AgentState::Wait {
            return None;
        }
        self.state = AgentState::Deciding;
        let soc = self.soc_at(now, &policy.params);
        let mut target = None;
        let bid = match policy.strategy {
            Strategy::Threshold { level } => threshold_bid(self.id, task, soc, level),
            Strategy::Learning(rule) => {
                let model = self.model.as_ref().expect("learning strategy requires a model");
                let immediate = learning_bid(self.id, model, &policy.standardizer, task, soc).map(|mut b| {
                    if rule == WinnerRule::Random {
                        b.value = self.rng.random::<f64>();
                    }
                    b
                });
                immediate.or_else(|| {
                    if !policy.forecasting {
                        return None;
                    }
                    let r = reservation_bid(
                        self.id,
                        model,
                        &policy.standardizer,
                        task,
                        soc,
                        &policy.params,
                        policy.reservation_margin,
                    )?;
                    target = Some(r.target_soc);
                    Some(r.bid)
                })
            }
        };
        match bid {
            Some(b) => {
                self.pending = Some((b.kind, target));
                self.task = Some(*task);
                self.state = AgentState::AwaitingOutcome;
            }
            None => self.state = AgentState::Wait,
        }
        bid
    }

    pub fn handle_auction_result(
        &mut self,
        winner: Option<u32>,
        now: f64,
        policy: &Policy,
    ) -> Result<AuctionResponse, AgentError> {
        self.require(AgentState::AwaitingOutcome)?;
        let (kind, target) = self.pending.take().expect("pending bid while awaiting outcome");
        if winner != Some(self.id) {
            self.task = None;
            self.transition(AgentState::Wait)?;
            return Ok(AuctionResponse::NotWon);
        }
        match kind {
            BidKind::Immediate => self.depart(now, policy).map(AuctionResponse::Depart),
            BidKind::Reservation => {
                let target_soc = target.expect("reservation bids carry a target");
                let soc = self.soc_at(now, &policy.params);
                let wait = time_to_reach_soc(soc, target_soc, &policy.params)?;
                self.reservation_target = Some(target_soc);
                self.transition(AgentState::ReservedCharging)?;
                Ok(AuctionResponse::Reserved { ready_time: now + wait, target_soc })
            }
        }
    }

    /// Takes off for the reserved task once the target SoC is reached.
    pub fn depart_reserved(&mut self, now: f64, policy: &Policy) -> Result<FlightPlan, AgentError> {
        self.require(AgentState::ReservedCharging)?;
        self.reservation_target = None;
        self.depart(now, policy)
    }

    fn depart(&mut self, now: f64, policy: &Policy) -> Result<FlightPlan, AgentError> {
        let task = self.task.expect("task assigned before takeoff");
        let soc = self.soc_at(now, &policy.params);
        let plan = plan_flight(&task, soc, policy.xi, self.soh, &policy.params, now)?;
        self.transition(AgentState::Deliver)?;
        self.soc_takeoff = Some(soc);
        self.plan = Some(plan);
        Ok(plan)
    }

    /// Destination reached or abort rule fired; the UAV heads home.
    pub fn turn_back(&mut self, now: f64) -> Result<(), AgentError> {
        self.require(AgentState::Deliver)?;
        let plan = self.plan.expect("flight plan while delivering");
        self.transition(AgentState::Return)?;
        self.position = plan.turn_position;
        debug_assert!((now - plan.turn_time()).abs() < 1e-6);
        Ok(())
    }

    /// Back at the FC: emit the labelled sample, update the model and resume
    /// charging.
    pub fn handle_return(&mut self, now: f64, policy: &Policy) -> Result<LabelledSample, AgentError> {
        self.require(AgentState::Return)?;
        let plan = self.plan.take().expect("flight plan while returning");
        let soc_takeoff = self.soc_takeoff.take().expect("takeoff SoC recorded on win");
        self.task = None;
        let sample = LabelledSample {
            features: FeatureVector::new(plan.distance, plan.mass, soc_takeoff),
            label: plan.outcome == FlightOutcome::Success,
        };
        if policy.learning_enabled {
            if let Some(model) = self.model.as_mut() {
                *model = sgd_step(model, &sample, &policy.standardizer);
            }
        }
        self.transition(AgentState::Wait)?;
        self.position = 0.0;
        self.soc_checkpoint = plan.soc_at_return;
        self.checkpoint_time = now;
        Ok(sample)
    }

    /// Battery emptied away from the FC.
    pub fn lose(&mut self) -> Result<(), AgentError> {
        self.require(AgentState::Return)?;
        self.transition(AgentState::Lost)?;
        self.task = None;
        self.soc_takeoff = None;
        Ok(())
    }
}
