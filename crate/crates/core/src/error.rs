use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{RobotId, TaskId};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("physics model produced a non-finite derivative at t = {t}")]
    ModelBlowUp { t: f64 },

    #[error("battery depleted at t = {t} (soc {soc} below minimum {soc_min})")]
    Depleted { t: f64, soc: f64, soc_min: f64 },

    #[error("waypoint {index} at ({x}, {y}) is infeasible: {reason}")]
    InfeasibleWaypoint {
        index: usize,
        x: f64,
        y: f64,
        reason: &'static str,
    },

    #[error("no robots available for {} task(s)", orphans.len())]
    NoAvailableRobots { orphans: Vec<TaskId> },

    #[error("unknown task {0}")]
    UnknownTask(TaskId),

    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),

    #[error("instance too large for {what}: {size} exceeds guard {limit}")]
    SizeGuard {
        what: &'static str,
        size: u64,
        limit: u64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
