//! Order generation and the fulfilment centre's advertisement queue.
//!
//! Orders are kept sorted by arrival time. The FC advertises one unallocated
//! order per tick: with no bids it moves on to the next unallocated order
//! (wrapping to the front at the end), and after any allocation it restarts
//! from the earliest unallocated order. Released orders keep their original
//! queue position.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::auction::TaskAnnouncement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FulfilmentError {
    #[error("unknown order id {0}")]
    UnknownOrder(u64),
    #[error("order {id} cannot go from {from:?} to {to:?}")]
    InvalidTransition { id: u64, from: OrderStatus, to: OrderStatus },
}

/// Uniform sampling bounds for parcel mass and delivery distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderBounds {
    pub distance_min: f64,
    pub distance_max: f64,
    pub mass_min: f64,
    pub mass_max: f64,
}

impl Default for OrderBounds {
    fn default() -> Self {
        Self { distance_min: 1000.0, distance_max: 6000.0, mass_min: 0.5, mass_max: 5.0 }
    }
}

impl OrderBounds {
    pub fn is_valid(&self) -> bool {
        self.distance_min > 0.0
            && self.distance_min <= self.distance_max
            && self.mass_min >= 0.0
            && self.mass_min <= self.mass_max
            && self.distance_max.is_finite()
            && self.mass_max.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderStatus {
    Unallocated,
    Allocated,
    Reserved,
    Delivered,
}

impl OrderStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrderStatus::Unallocated => "unallocated",
            OrderStatus::Allocated => "allocated",
            OrderStatus::Reserved => "reserved",
            OrderStatus::Delivered => "delivered",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub id: u64,
    pub arrival_time: f64,
    pub mass: f64,
    pub distance: f64,
    pub status: OrderStatus,
    pub delivered_time: Option<f64>,
    /// Number of times the order was released after a failed attempt.
    pub attempt_count: u32,
}

impl Order {
    pub fn announcement(&self) -> TaskAnnouncement {
        TaskAnnouncement { task_id: self.id, mass: self.mass, distance: self.distance }
    }
}

/// Draws the order stream: the first order at t = 0, then exponential
/// inter-arrival gaps with mean `mean_interarrival` until the horizon.
///
/// An infinite mean inter-arrival time yields no orders at all.
pub fn generate_arrivals<R: Rng + ?Sized>(
    rng: &mut R,
    mean_interarrival: f64,
    horizon: f64,
    bounds: &OrderBounds,
) -> Vec<Order> {
    assert!(mean_interarrival > 0.0, "mean inter-arrival time must be positive");
    if mean_interarrival.is_infinite() {
        return Vec::new();
    }
    let gap = Exp::new(1.0 / mean_interarrival).expect("positive rate");
    let mut orders = Vec::new();
    let mut t = 0.0;
    while t <= horizon {
        let mass = rng.random_range(bounds.mass_min..=bounds.mass_max);
        let distance = rng.random_range(bounds.distance_min..=bounds.distance_max);
        orders.push(Order {
            id: orders.len() as u64,
            arrival_time: t,
            mass,
            distance,
            status: OrderStatus::Unallocated,
            delivered_time: None,
            attempt_count: 0,
        });
        t += gap.sample(rng);
    }
    orders
}

/// Unallocated orders that have arrived, plus the advertisement cursor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueueState {
    unallocated: BTreeSet<u64>,
    cursor: Option<u64>,
}

impl QueueState {
    pub fn is_empty(&self) -> bool {
        self.unallocated.is_empty()
    }

    pub fn len(&self) -> usize {
        self.unallocated.len()
    }

    pub fn cursor(&self) -> Option<u64> {
        self.cursor
    }

    pub fn contains(&self, id: u64) -> bool {
        self.unallocated.contains(&id)
    }

    /// The order the next advertisement targets.
    pub fn current(&self) -> Option<u64> {
        self.cursor.or_else(|| self.unallocated.first().copied())
    }

    fn insert(&mut self, id: u64) {
        self.unallocated.insert(id);
    }

    fn advance_past(&mut self, id: u64) {
        self.cursor = self.unallocated.range(id + 1..).next().copied().or_else(|| self.unallocated.first().copied());
    }

    fn remove(&mut self, id: u64) {
        self.unallocated.remove(&id);
        if self.cursor == Some(id) {
            self.cursor = None;
        }
    }
}

/// Result of advertising one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvertOutcome {
    NoBids,
    Allocated,
    Reserved,
}

/// Order book and advertisement queue of the FC.
#[derive(Debug, Clone)]
pub struct FulfilmentCentre {
    orders: Vec<Order>,
    queue: QueueState,
}

impl FulfilmentCentre {
    /// Order ids must equal their index, sorted by arrival time.
    pub fn new(orders: Vec<Order>) -> Self {
        debug_assert!(orders.iter().enumerate().all(|(i, o)| o.id == i as u64));
        debug_assert!(orders.windows(2).all(|w| w[0].arrival_time <= w[1].arrival_time));
        Self { orders, queue: QueueState::default() }
    }

    pub fn orders(&self) -> &[Order] {
        &self.orders
    }

    pub fn into_orders(self) -> Vec<Order> {
        self.orders
    }

    pub fn queue(&self) -> &QueueState {
        &self.queue
    }

    pub fn order(&self, id: u64) -> Result<&Order, FulfilmentError> {
        self.orders.get(id as usize).ok_or(FulfilmentError::UnknownOrder(id))
    }

    fn order_mut(&mut self, id: u64) -> Result<&mut Order, FulfilmentError> {
        self.orders.get_mut(id as usize).ok_or(FulfilmentError::UnknownOrder(id))
    }

    /// Makes an arrived order visible to the advertisement queue.
    pub fn arrive(&mut self, id: u64) -> Result<(), FulfilmentError> {
        let order = self.order(id)?;
        if order.status != OrderStatus::Unallocated {
            return Err(FulfilmentError::InvalidTransition { id, from: order.status, to: OrderStatus::Unallocated });
        }
        self.queue.insert(id);
        Ok(())
    }

    /// Task to advertise this tick, if any. Advertising is suspended while no
    /// UAV waits at the FC.
    pub fn advertisement_tick(&self, any_uav_waiting: bool) -> Option<TaskAnnouncement> {
        if !any_uav_waiting {
            return None;
        }
        let id = self.queue.current()?;
        Some(self.orders[id as usize].announcement())
    }

    /// Moves the cursor according to the auction outcome for `id`.
    pub fn record_outcome(&mut self, id: u64, outcome: AdvertOutcome) -> Result<(), FulfilmentError> {
        let to = match outcome {
            AdvertOutcome::NoBids => {
                self.order(id)?;
                self.queue.advance_past(id);
                return Ok(());
            }
            AdvertOutcome::Allocated => OrderStatus::Allocated,
            AdvertOutcome::Reserved => OrderStatus::Reserved,
        };
        let order = self.order_mut(id)?;
        if order.status != OrderStatus::Unallocated {
            return Err(FulfilmentError::InvalidTransition { id, from: order.status, to });
        }
        order.status = to;
        self.queue.remove(id);
        self.queue.cursor = None;
        Ok(())
    }

    /// A reserved order whose UAV has taken off.
    pub fn start_reserved(&mut self, id: u64) -> Result<(), FulfilmentError> {
        let order = self.order_mut(id)?;
        if order.status != OrderStatus::Reserved {
            return Err(FulfilmentError::InvalidTransition { id, from: order.status, to: OrderStatus::Allocated });
        }
        order.status = OrderStatus::Allocated;
        Ok(())
    }

    pub fn mark_delivered(&mut self, id: u64, time: f64) -> Result<(), FulfilmentError> {
        let order = self.order_mut(id)?;
        if order.status != OrderStatus::Allocated {
            return Err(FulfilmentError::InvalidTransition { id, from: order.status, to: OrderStatus::Delivered });
        }
        order.status = OrderStatus::Delivered;
        order.delivered_time = Some(time);
        Ok(())
    }

    /// Returns an allocated or reserved order to the queue at its original
    /// position.
    pub fn release_order(&mut self, id: u64) -> Result<(), FulfilmentError> {
        let order = self.order_mut(id)?;
        match order.status {
            OrderStatus::Allocated | OrderStatus::Reserved => {
                order.status = OrderStatus::Unallocated;
                order.attempt_count += 1;
                self.queue.insert(id);
                Ok(())
            }
            from => Err(FulfilmentError::InvalidTransition { id, from, to: OrderStatus::Unallocated }),
        }
    }
}
