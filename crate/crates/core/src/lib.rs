//! Energy-aware task allocation and trajectory generation for fleets of
//! autonomous mobile robots.
//!
//! The crate is `no_std` with `alloc`. Everything here is a pure function of
//! its inputs (and a seed, where randomness is involved); file formats, the
//! event-loop simulator and the command line live in the `amrfleet` crate.
//!
//! The pipeline is two-staged:
//!
//! 1. [`auction::run_auction`] assigns tasks with a sequential single-item
//!    auction driven by a pluggable [`auction::BidMetric`].
//! 2. [`trajectory::optimize_route`] turns each robot's ordered task list into
//!    a physically simulated, energy-minimizing trajectory, after which
//!    [`collision::refine`] retimes segments that bring robots too close.
//!
//! [`reschedule`] holds the event-triggered warm-start logic and
//! [`baselines`] the comparison allocators.

#![no_std]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

pub mod auction;
pub mod baselines;
pub mod collision;
pub mod dubins;
pub mod energy;
mod error;
pub mod geometry;
pub(crate) mod math;
pub mod model;
pub mod physics;
pub mod reschedule;
pub mod scenario;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{Point, Rect};
pub use model::{
    BatteryParams, ControlInput, CostWeights, Robot, RobotId, RobotParams, RobotState, Schedule,
    Task, TaskId, Workspace,
};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;
