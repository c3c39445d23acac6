//! Event queue ordered by (time, class, sequence).
//!
//! Simultaneous events are processed by a fixed class priority (order
//! arrivals, then advertisement ticks, then flight events, snapshots and
//! finally the horizon) and then in scheduling order.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    OrderArrival(u64),
    AdvertisementTick,
    DestinationArrival(u32),
    AbortTrigger(u32),
    FcArrival(u32),
    UavLost(u32),
    ReservationReady(u32),
    WeekSnapshot(u32),
    HorizonEnd,
}

impl EventKind {
    fn class(&self) -> u8 {
        match self {
            EventKind::OrderArrival(_) => 0,
            EventKind::AdvertisementTick => 1,
            EventKind::DestinationArrival(_) => 2,
            EventKind::AbortTrigger(_) => 3,
            EventKind::FcArrival(_) => 4,
            EventKind::UavLost(_) => 5,
            EventKind::ReservationReady(_) => 6,
            EventKind::WeekSnapshot(_) => 7,
            EventKind::HorizonEnd => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(u64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Event {
    pub fn id(&self) -> EventId {
        EventId(self.sequence)
    }

    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.kind.class(), self.sequence)
    }
}

impl Eq for Event {}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ca, sa) = self.key();
        let (tb, cb, sb) = other.key();
        tb.total_cmp(&ta).then(cb.cmp(&ca)).then(sb.cmp(&sa))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    cancelled: HashSet<EventId>,
    next_sequence: u64,
    now: f64,
    processed: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) -> Result<EventId, SimError> {
        if !(time >= self.now) {
            return Err(SimError::ScheduleInPast { time, now: self.now });
        }
        let event = Event { time, sequence: self.next_sequence, kind };
        self.next_sequence += 1;
        self.heap.push(event);
        Ok(event.id())
    }

    /// Cancels a pending event. Returns `false` if it already fired or was
    /// cancelled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if self.heap.iter().any(|e| e.id() == id) {
            self.cancelled.insert(id)
        } else {
            false
        }
    }

    /// Next live event, advancing the clock. `None` once the queue is drained.
    pub fn next_event(&mut self) -> Option<Event> {
        while let Some(event) = self.heap.pop() {
            if self.cancelled.remove(&event.id()) {
                continue;
            }
            debug_assert!(event.time >= self.now);
            self.now = event.time;
            self.processed += 1;
            return Some(event);
        }
        None
    }
}
