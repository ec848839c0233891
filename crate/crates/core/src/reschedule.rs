//! Event-triggered warm-start rescheduling.
//!
//! Three event kinds can trigger a reschedule: a robot fault, the arrival of
//! a priority task, and a robot whose realized energy deviates from its
//! prediction by more than `δ`. Deviation triggers for one robot are spaced
//! at least `Δt_min` apart, which bounds the number of reschedules on any
//! finite horizon.
//!
//! A warm start keeps every started prefix and re-auctions only the unstarted
//! tasks of the affected robots plus any newly arrived or reopened tasks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::auction::{run_auction, AuctionTrace, BidContext, BidMetric, Bidder};
use crate::energy::{route_energy_closed_form, FrictionField};
use crate::geometry::Point;
use crate::model::{resolve_tasks, Robot, RobotId, Schedule, Task, TaskId};
use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    /// Relative energy deviation threshold.
    pub delta: f64,
    /// Minimum spacing between deviation reschedules of one robot, s.
    pub dt_min: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            delta: 0.10,
            dt_min: 5.0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.dt_min > 0.0) {
            return Err(Error::invalid("trigger", "delta and dt_min must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisruptionKind {
    Fault,
    PriorityTask,
    EnergyDeviation,
}

impl DisruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            DisruptionKind::Fault => "fault",
            DisruptionKind::PriorityTask => "priority_task",
            DisruptionKind::EnergyDeviation => "energy_deviation",
        }
    }
}

/// A scripted disruption. Energy-deviation events carry the friction
/// multiplier that the robot experiences from time `t` on; whether a
/// reschedule follows is up to the trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisruptionEvent {
    pub kind: DisruptionKind,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction_factor: Option<f64>,
}

impl DisruptionEvent {
    pub fn fault(t: f64, robot: RobotId) -> Self {
        Self {
            kind: DisruptionKind::Fault,
            t,
            robot: Some(robot),
            task: None,
            friction_factor: None,
        }
    }

    pub fn priority(t: f64, mut task: Task) -> Self {
        task.priority = true;
        task.arrival_time = t;
        Self {
            kind: DisruptionKind::PriorityTask,
            t,
            robot: None,
            task: Some(task),
            friction_factor: None,
        }
    }

    pub fn deviation(t: f64, robot: RobotId, friction_factor: f64) -> Self {
        Self {
            kind: DisruptionKind::EnergyDeviation,
            t,
            robot: Some(robot),
            task: None,
            friction_factor: Some(friction_factor),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::invalid("event time", "must be finite and ≥ 0"));
        }
        let ok = match self.kind {
            DisruptionKind::Fault => self.robot.is_some(),
            DisruptionKind::PriorityTask => self.task.is_some(),
            DisruptionKind::EnergyDeviation => {
                self.robot.is_some() && self.friction_factor.is_some_and(|k| k > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "event",
                "faults and deviations need a robot, priority events a task, deviations a factor > 0",
            ))
        }
    }
}

/// Per-robot energy bookkeeping seen by the deviation trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotMonitor {
    pub robot: RobotId,
    pub active: bool,
    /// Realized energy over the monitored window, J.
    pub e_act: f64,
    /// Predicted energy over the same window, J.
    pub e_pred: f64,
    pub last_deviation_reschedule: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriggerDecision {
    pub faults: Vec<RobotId>,
    pub priority_tasks: Vec<Task>,
    pub deviations: Vec<RobotId>,
}

impl TriggerDecision {
    /// The global switching signal.
    pub fn fires(&self) -> bool {
        !(self.faults.is_empty() && self.priority_tasks.is_empty() && self.deviations.is_empty())
    }
}

/// Deviation indicator: relative gap above `δ` and at least `Δt_min` since
/// that robot's last deviation reschedule (or since the start of the run).
pub fn deviation_fires(e_act: f64, e_pred: f64, elapsed: f64, config: &TriggerConfig) -> bool {
    e_pred > 0.0 && (e_act - e_pred).abs() / e_pred > config.delta && elapsed >= config.dt_min
}

/// Evaluates the fault, priority and deviation indicators at time `t`.
pub fn evaluate_triggers(
    monitors: &[RobotMonitor],
    events_at_t: &[DisruptionEvent],
    config: &TriggerConfig,
    t: f64,
) -> TriggerDecision {
    let mut d = TriggerDecision::default();
    for e in events_at_t {
        match e.kind {
            DisruptionKind::Fault => {
                if let Some(r) = e.robot {
                    if monitors.iter().any(|m| m.robot == r && m.active) && !d.faults.contains(&r) {
                        d.faults.push(r);
                    }
                }
            }
            DisruptionKind::PriorityTask => d.priority_tasks.extend(e.task.clone()),
            // The disturbance itself is not a trigger; its effect is.
            DisruptionKind::EnergyDeviation => {}
        }
    }
    for m in monitors {
        if !m.active || d.faults.contains(&m.robot) {
            continue;
        }
        let elapsed = t - m.last_deviation_reschedule.unwrap_or(0.0);
        if deviation_fires(m.e_act, m.e_pred, elapsed, config) {
            d.deviations.push(m.robot);
        }
    }
    d
}

/// Largest number of reschedules a run of length `horizon` can contain.
pub fn zeno_budget(horizon: f64, robots: usize, config: &TriggerConfig, faults: usize, priorities: usize) -> u64 {
    let per_robot = math::floor(horizon.max(0.0) / config.dt_min) as u64 + 1;
    (faults + priorities) as u64 + robots as u64 * per_robot
}

/// What a reschedule may touch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RescheduleRequest {
    /// Robots whose unstarted tasks are re-auctioned.
    pub affected: BTreeSet<RobotId>,
    /// Robots that may not bid (faulted). Their unstarted tasks are pooled.
    pub excluded: BTreeSet<RobotId>,
    /// Started tasks to take back out of their sequence (in progress on a
    /// faulted robot).
    pub reopened: Vec<TaskId>,
    /// Newly arrived tasks.
    pub arrivals: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RescheduleOutcome {
    /// Tasks that went through the auction, in award order.
    pub reassigned: Vec<TaskId>,
    /// Robots whose sequences changed.
    pub changed: BTreeSet<RobotId>,
    pub trace: AuctionTrace,
}

fn remove_task(schedule: &mut Schedule, task: TaskId) -> Option<RobotId> {
    let owner = schedule.owner_of(task)?;
    let seq = schedule.sequences.get_mut(&owner)?;
    let idx = seq.iter().position(|t| *t == task)?;
    seq.remove(idx);
    if let Some(c) = schedule.cursor.get_mut(&owner) {
        if idx < *c {
            *c -= 1;
        }
    }
    Some(owner)
}

/// Warm-start reschedule. `bidders` carries every robot allowed to bid with
/// the position its retained sequence ends at; `tasks` must contain every
/// task id referenced by the schedule and the request.
pub fn warm_start_reschedule(
    schedule: &Schedule,
    request: &RescheduleRequest,
    tasks: &[Task],
    bidders: &[Bidder],
    metric: BidMetric,
    ctx: &BidContext,
) -> Result<(Schedule, RescheduleOutcome)> {
    let mut next = schedule.clone();
    let mut pool: Vec<TaskId> = Vec::new();
    let mut changed = BTreeSet::new();
    for t in &request.reopened {
        if let Some(owner) = remove_task(&mut next, *t) {
            changed.insert(owner);
            pool.push(*t);
        }
    }
    for r in request.affected.iter().chain(&request.excluded) {
        let cursor = next.cursor(*r);
        if let Some(seq) = next.sequences.get_mut(r) {
            if cursor < seq.len() {
                pool.extend(seq.drain(cursor..));
                changed.insert(*r);
            }
        }
    }
    for t in &request.arrivals {
        if next.owner_of(*t).is_none() && !pool.contains(t) {
            pool.push(*t);
        }
    }
    let bidders: Vec<Bidder> = bidders
        .iter()
        .filter(|b| !request.excluded.contains(&b.robot.id))
        .copied()
        .collect();
    if bidders.is_empty() && !pool.is_empty() {
        return Err(Error::NoAvailableRobots { orphans: pool });
    }
    let pool_tasks: Vec<Task> = resolve_tasks(tasks, &pool)?.into_iter().cloned().collect();
    let (awarded, trace) = run_auction(&bidders, &pool_tasks, metric, ctx)?;
    let mut reassigned = Vec::with_capacity(trace.rounds.len());
    for round in &trace.rounds {
        next.push(round.winner, round.task);
        changed.insert(round.winner);
        reassigned.push(round.task);
    }
    for (r, e) in &awarded.predicted_energy {
        *next.predicted_energy.entry(*r).or_insert(0.0) += e;
    }
    Ok((
        next,
        RescheduleOutcome {
            reassigned,
            changed,
            trace,
        },
    ))
}

/// Cold comparator: every unstarted task of every robot is re-auctioned.
pub fn cold_reschedule(
    schedule: &Schedule,
    request: &RescheduleRequest,
    tasks: &[Task],
    bidders: &[Bidder],
    metric: BidMetric,
    ctx: &BidContext,
) -> Result<(Schedule, RescheduleOutcome)> {
    let mut all = request.clone();
    all.affected = schedule.sequences.keys().copied().collect();
    warm_start_reschedule(schedule, &all, tasks, bidders, metric, ctx)
}

/// Predicted remaining cost-to-go `V_k = Σ Ĵ_rem + ρ·|U_k|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostToGo {
    pub value: f64,
    pub unstarted_count: usize,
    pub k: usize,
}

/// `Ĵ_rem` is the closed-form energy of each robot's unstarted tasks from
/// `positions[robot]` (where its started work will leave it).
pub fn track_cost_to_go(
    schedule: &Schedule,
    positions: &BTreeMap<RobotId, Point>,
    robots: &[Robot],
    tasks: &[Task],
    field: &FrictionField,
    rho: f64,
    k: usize,
) -> Result<CostToGo> {
    let mut value = 0.0;
    let mut count = 0;
    for r in robots {
        let pending = schedule.unstarted(r.id);
        if pending.is_empty() {
            continue;
        }
        let from = positions.get(&r.id).copied().unwrap_or(r.depot);
        let seq = resolve_tasks(tasks, pending)?;
        value += route_energy_closed_form(from, &seq, &r.params, field, false, false)?;
        count += pending.len();
    }
    Ok(CostToGo {
        value: value + rho * count as f64,
        unstarted_count: count,
        k,
    })
}

/// One row of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub t: f64,
    pub kind: DisruptionKind,
    pub robot: Option<RobotId>,
    pub tasks_reassigned: usize,
    /// Wall-clock time spent rescheduling, s.
    pub latency: f64,
    pub v_before: f64,
    pub v_after: f64,
}
