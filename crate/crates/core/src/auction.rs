//! Bidding policies and winner selection.
//!
//! Every UAV broadcasts its bid and runs [`evaluate_bids`] locally on the
//! full broadcast set. The function is pure and independent of bid order, so
//! all bidders agree on the winner without a coordinator.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::energy::{time_to_reach_soc, UavParams};
use crate::learning::{bid_confidence, bid_decision, standardize, BidModel, FeatureVector, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskAnnouncement {
    pub task_id: u64,
    pub mass: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BidKind {
    Immediate,
    Reservation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bid {
    pub task_id: u64,
    pub uav_id: u32,
    pub kind: BidKind,
    /// Confidence (immediate) or forecast seconds until departure (reservation).
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WinnerRule {
    LeastConfident,
    MostConfident,
    Random,
}

impl WinnerRule {
    pub const ALL: [WinnerRule; 3] = [WinnerRule::LeastConfident, WinnerRule::MostConfident, WinnerRule::Random];

    pub fn as_str(&self) -> &'static str {
        match self {
            WinnerRule::LeastConfident => "least_confident",
            WinnerRule::MostConfident => "most_confident",
            WinnerRule::Random => "random",
        }
    }
}

impl fmt::Display for WinnerRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WinnerRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "least_confident" => Ok(WinnerRule::LeastConfident),
            "most_confident" => Ok(WinnerRule::MostConfident),
            "random" => Ok(WinnerRule::Random),
            other => Err(format!("unknown winner rule `{other}`")),
        }
    }
}

/// Deployment strategy shared by the whole fleet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Learned bidding policy with the given winner rule.
    Learning(WinnerRule),
    /// Bid the current SoC whenever it is at least `level`; highest SoC wins.
    Threshold { level: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Learning(_) => "learning",
            Strategy::Threshold { .. } => "threshold",
        }
    }

    /// Rule applied by [`evaluate_bids`] for this strategy.
    pub fn evaluation_rule(&self) -> WinnerRule {
        match self {
            Strategy::Learning(rule) => *rule,
            Strategy::Threshold { .. } => WinnerRule::MostConfident,
        }
    }
}

pub fn learning_bid(
    uav_id: u32,
    model: &BidModel,
    s: &Standardizer,
    task: &TaskAnnouncement,
    soc_now: f64,
) -> Option<Bid> {
    let x = standardize(&FeatureVector::new(task.distance, task.mass, soc_now), s);
    if !bid_decision(model, &x) {
        return None;
    }
    let value = bid_confidence(model, &x).ok()?;
    Some(Bid { task_id: task.task_id, uav_id, kind: BidKind::Immediate, value })
}

/// Boundary inclusive: bids when `soc_now >= threshold`.
pub fn threshold_bid(uav_id: u32, task: &TaskAnnouncement, soc_now: f64, threshold: f64) -> Option<Bid> {
    (soc_now >= threshold).then_some(Bid { task_id: task.task_id, uav_id, kind: BidKind::Immediate, value: soc_now })
}

/// Lowest SoC at which the model would bid on `task`, from the linear
/// decision boundary. `None` when charging cannot flip the decision.
pub fn min_sufficient_soc(model: &BidModel, s: &Standardizer, task: &TaskAnnouncement) -> Option<f64> {
    let w_soc = model.w[2];
    if w_soc <= 0.0 {
        return None;
    }
    let x = standardize(&FeatureVector::new(task.distance, task.mass, s.mu[2]), s);
    let partial = model.w[0] * x[0] + model.w[1] * x[1] + model.b;
    Some(s.mu[2] + s.sigma[2] * (-partial / w_soc))
}

/// A forecast commitment: the bid plus the SoC the UAV will depart at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reservation {
    pub bid: Bid,
    pub target_soc: f64,
}

/// Reservation bid for a task the UAV declined to take on immediately.
///
/// The target is the boundary SoC plus `margin`; the bid value is the charging
/// time needed to reach it.
pub fn reservation_bid(
    uav_id: u32,
    model: &BidModel,
    s: &Standardizer,
    task: &TaskAnnouncement,
    soc_now: f64,
    params: &UavParams,
    margin: f64,
) -> Option<Reservation> {
    let boundary = min_sufficient_soc(model, s, task)?;
    if boundary <= soc_now {
        return None;
    }
    let target = boundary + margin;
    let wait = time_to_reach_soc(soc_now, target, params).ok()?;
    Some(Reservation {
        bid: Bid { task_id: task.task_id, uav_id, kind: BidKind::Reservation, value: wait },
        target_soc: target,
    })
}

/// Winning UAV for one auction.
///
/// Immediate bids always beat reservation bids. Among immediate bids the rule
/// picks the lowest (least confident) or highest value (most confident and
/// random, whose values are uniform draws). Among reservation bids, only
/// considered when forecasting is enabled, the shortest wait wins. Ties go to
/// the highest UAV id.
pub fn evaluate_bids(bids: &[Bid], rule: WinnerRule, forecasting_enabled: bool) -> Option<u32> {
    let immediate = bids.iter().filter(|b| b.kind == BidKind::Immediate);
    let prefer_low = matches!(rule, WinnerRule::LeastConfident);
    if let Some(winner) = best(immediate, prefer_low) {
        return Some(winner.uav_id);
    }
    if !forecasting_enabled {
        return None;
    }
    best(bids.iter().filter(|b| b.kind == BidKind::Reservation), true).map(|b| b.uav_id)
}

fn best<'a>(bids: impl Iterator<Item = &'a Bid>, prefer_low: bool) -> Option<&'a Bid> {
    bids.max_by(|a, b| {
        let by_value = if prefer_low { b.value.total_cmp(&a.value) } else { a.value.total_cmp(&b.value) };
        match by_value {
            Ordering::Equal => a.uav_id.cmp(&b.uav_id),
            other => other,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fulfilment::OrderBounds;
    use crate::learning::{init_model, INIT_MAX_STEPS};

    fn task(distance: f64, mass: f64) -> TaskAnnouncement {
        TaskAnnouncement { task_id: 1, mass, distance }
    }

    fn imm(uav_id: u32, value: f64) -> Bid {
        Bid { task_id: 1, uav_id, kind: BidKind::Immediate, value }
    }

    fn res(uav_id: u32, value: f64) -> Bid {
        Bid { task_id: 1, uav_id, kind: BidKind::Reservation, value }
    }

    fn fresh() -> BidModel {
        init_model(0.01, 0.01, &OrderBounds::default(), &Standardizer::default(), INIT_MAX_STEPS).unwrap()
    }

    #[test]
    fn fresh_model_bids_on_easy_declines_hard() {
        let s = Standardizer::default();
        assert!(learning_bid(0, &fresh(), &s, &task(1000.0, 0.5), 100.0).is_some());
        assert!(learning_bid(0, &fresh(), &s, &task(6000.0, 5.0), 0.0).is_none());
    }

    #[test]
    fn boundary_learning_bid_has_zero_value() {
        let m = BidModel { w: [0.0, 0.0, 1.0], b: 0.0, ..BidModel::zeroed(0.01, 0.01) };
        let bid = learning_bid(3, &m, &Standardizer::default(), &task(2000.0, 1.0), 50.0).unwrap();
        assert_eq!(bid.value, 0.0);
        assert_eq!(bid.kind, BidKind::Immediate);
    }

    #[test]
    fn degenerate_model_abstains() {
        let m = BidModel { w: [0.0; 3], b: 1.0, ..BidModel::zeroed(0.01, 0.01) };
        assert!(learning_bid(0, &m, &Standardizer::default(), &task(2000.0, 1.0), 50.0).is_none());
    }

    #[test]
    fn threshold_examples() {
        let t = task(2000.0, 1.0);
        assert_eq!(threshold_bid(2, &t, 85.0, 80.0).unwrap().value, 85.0);
        assert!(threshold_bid(2, &t, 79.9, 80.0).is_none());
        assert!(threshold_bid(2, &t, 80.0, 80.0).is_some());
    }

    #[test]
    fn reservation_examples() {
        let s = Standardizer::default();
        let p = UavParams::default();
        let m = BidModel { w: [0.0, 0.0, 1.0], b: -0.5, ..BidModel::zeroed(0.01, 0.01) };
        let r = reservation_bid(4, &m, &s, &task(3000.0, 2.0), 20.0, &p, 0.0).unwrap();
        assert!((r.target_soc - 64.435).abs() < 1e-9);
        assert!((r.bid.value - 24575.938).abs() < 1e-2, "{}", r.bid.value);
        assert_eq!(r.bid.kind, BidKind::Reservation);

        let flat = BidModel { w: [1.0, 1.0, 0.0], ..m };
        assert!(reservation_bid(4, &flat, &s, &task(3000.0, 2.0), 20.0, &p, 0.0).is_none());
        let negative = BidModel { w: [0.0, 0.0, -1.0], ..m };
        assert!(reservation_bid(4, &negative, &s, &task(3000.0, 2.0), 20.0, &p, 0.0).is_none());
        assert!(reservation_bid(4, &m, &s, &task(3000.0, 2.0), 70.0, &p, 0.0).is_none());
        // boundary above 100 cannot be reached
        let hard = BidModel { b: -2.0, ..m };
        assert!(reservation_bid(4, &hard, &s, &task(3000.0, 2.0), 20.0, &p, 0.0).is_none());
    }

    #[test]
    fn winner_rule_examples() {
        let bids = [imm(1, 0.2), imm(2, 0.5)];
        assert_eq!(evaluate_bids(&bids, WinnerRule::LeastConfident, false), Some(1));
        assert_eq!(evaluate_bids(&bids, WinnerRule::MostConfident, false), Some(2));

        let tied = [imm(4, 0.3), imm(9, 0.3)];
        for rule in WinnerRule::ALL {
            assert_eq!(evaluate_bids(&tied, rule, false), Some(9));
        }

        let mixed = [res(3, 5000.0), imm(7, 0.9)];
        assert_eq!(evaluate_bids(&mixed, WinnerRule::LeastConfident, true), Some(7));
        assert_eq!(evaluate_bids(&[], WinnerRule::LeastConfident, true), None);
    }

    #[test]
    fn reservations_need_forecasting() {
        let bids = [res(3, 5000.0), res(8, 4000.0), res(1, 4000.0)];
        assert_eq!(evaluate_bids(&bids, WinnerRule::LeastConfident, false), None);
        assert_eq!(evaluate_bids(&bids, WinnerRule::MostConfident, true), Some(8));
    }

    #[test]
    fn rule_names_round_trip() {
        for rule in WinnerRule::ALL {
            assert_eq!(rule.as_str().parse::<WinnerRule>().unwrap(), rule);
        }
        assert!("fastest".parse::<WinnerRule>().is_err());
    }
}
