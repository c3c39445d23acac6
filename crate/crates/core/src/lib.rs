//! Simulation of UAV parcel-delivery fleets that decide for themselves
//! whether to bid on delivery tasks.
//!
//! Each UAV carries an online linear classifier over (distance, mass, SoC)
//! and learns from the outcome of every attempt. A fulfilment centre
//! advertises pending orders one at a time; bids are broadcast and each
//! bidder applies the same winner rule locally.
//!
//! Module map:
//!
//! - [`energy`]: consumption, discharge and charging curves
//! - [`learning`]: standardisation, modified-Huber SGD, initialisation
//! - [`auction`]: bid construction and winner selection
//! - [`agent`]: the per-UAV state machine and flight planning
//! - [`fulfilment`]: order generation and the advertisement queue
//! - [`sim`]: the discrete-event engine
//! - [`evaluation`]: capability oracle, accuracy probes, metrics
//! - [`harness`]: configuration, sweeps and table export

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod auction;
pub mod energy;
pub mod evaluation;
pub mod fulfilment;
pub mod harness;
pub mod learning;
pub mod par;
pub mod sim;

pub use sim::{run, run_with_models, RunConfig, RunResult, SimError};
