//! Comparison allocators and the exhaustive small-instance oracle.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::energy::FrictionField;
use crate::geometry::Point;
use crate::model::{Robot, RobotId, Schedule, Task, TaskId};
use crate::trajectory::ConstantVelocityExecutor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Time-driven nearest-task dispatch with optimized trajectories.
    NearestTask,
    /// Global nearest (robot, pickup) pair greedy with optimized trajectories.
    NearestPair,
    /// Each task, in id order, to the nearest robot; constant-velocity driving.
    NearestRobot,
    /// The sequential auction with distance bids.
    DistanceAuction,
    /// Exhaustive assignment enumeration on small instances.
    Enumeration,
}

/// Greedy over all (robot end, task pickup) pairs: the closest pair is
/// assigned and that robot's end moves to the dropoff. Ties go to the lower
/// task id, then the lower robot id.
pub fn nearest_task_allocate(robots: &[Robot], tasks: &[Task]) -> Result<Schedule> {
    nearest_task_from(robots, &robots.iter().map(|r| r.depot).collect::<Vec<_>>(), tasks)
}

/// [`nearest_task_allocate`] from explicit start positions (one per robot).
pub fn nearest_task_from(robots: &[Robot], starts: &[Point], tasks: &[Task]) -> Result<Schedule> {
    if robots.is_empty() && !tasks.is_empty() {
        return Err(Error::NoAvailableRobots {
            orphans: tasks.iter().map(|t| t.id).collect(),
        });
    }
    let mut schedule = Schedule::new(robots.iter().map(|r| r.id));
    let mut ends = starts.to_vec();
    let mut open: Vec<&Task> = tasks.iter().collect();
    while !open.is_empty() {
        let mut best: Option<(f64, TaskId, RobotId, usize, usize)> = None;
        for (ri, r) in robots.iter().enumerate() {
            for (ti, t) in open.iter().enumerate() {
                let key = (ends[ri].distance(t.pickup), t.id, r.id, ri, ti);
                if best.is_none_or(|b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
        }
        let (_, task, robot, ri, ti) = best.expect("nonempty");
        ends[ri] = open[ti].dropoff;
        open.remove(ti);
        schedule.push(robot, task);
    }
    Ok(schedule)
}

/// Time-driven dispatch: the robot that frees up first (ties to the lower
/// robot id) takes the open task whose pickup is nearest to it (ties to the
/// lower task id). A robot is busy for its transit plus loaded distance at
/// `speed`.
pub fn nearest_task_dispatch(robots: &[Robot], tasks: &[Task], speed: f64) -> Result<Schedule> {
    let starts: Vec<_> = robots.iter().map(|r| r.depot).collect();
    nearest_task_dispatch_from(robots, &starts, &alloc::vec![0.0; robots.len()], tasks, speed)
}

/// [`nearest_task_dispatch`] from explicit start positions and ready times
/// (one each per robot).
pub fn nearest_task_dispatch_from(
    robots: &[Robot],
    starts: &[Point],
    ready: &[f64],
    tasks: &[Task],
    speed: f64,
) -> Result<Schedule> {
    if !(speed > 0.0) {
        return Err(Error::invalid("speed", "must be > 0"));
    }
    if robots.is_empty() && !tasks.is_empty() {
        return Err(Error::NoAvailableRobots {
            orphans: tasks.iter().map(|t| t.id).collect(),
        });
    }
    let mut schedule = Schedule::new(robots.iter().map(|r| r.id));
    let mut ends = starts.to_vec();
    let mut avail = ready.to_vec();
    let mut open: Vec<&Task> = tasks.iter().collect();
    while !open.is_empty() {
        let ri = (0..robots.len())
            .min_by(|&a, &b| avail[a].total_cmp(&avail[b]).then(robots[a].id.cmp(&robots[b].id)))
            .expect("nonempty fleet");
        let (ti, _) = open
            .iter()
            .enumerate()
            .map(|(i, t)| (i, (ends[ri].distance(t.pickup), t.id)))
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.cmp(&b.1 .1)))
            .expect("nonempty");
        let t = open.remove(ti);
        avail[ri] += (ends[ri].distance(t.pickup) + t.pickup.distance(t.dropoff)) / speed;
        ends[ri] = t.dropoff;
        schedule.push(robots[ri].id, t.id);
    }
    Ok(schedule)
}

/// Tasks in ascending id order, each to the robot whose current end is
/// closest to its pickup (ties to the lower robot id).
pub fn nearest_robot_allocate(robots: &[Robot], tasks: &[Task]) -> Result<Schedule> {
    nearest_robot_from(robots, &robots.iter().map(|r| r.depot).collect::<Vec<_>>(), tasks)
}

/// [`nearest_robot_allocate`] from explicit start positions (one per robot).
pub fn nearest_robot_from(robots: &[Robot], starts: &[Point], tasks: &[Task]) -> Result<Schedule> {
    if robots.is_empty() && !tasks.is_empty() {
        return Err(Error::NoAvailableRobots {
            orphans: tasks.iter().map(|t| t.id).collect(),
        });
    }
    let mut schedule = Schedule::new(robots.iter().map(|r| r.id));
    let mut ends = starts.to_vec();
    let mut order: Vec<&Task> = tasks.iter().collect();
    order.sort_by_key(|t| t.id);
    for t in order {
        let (ri, _) = robots
            .iter()
            .enumerate()
            .map(|(i, r)| (i, (ends[i].distance(t.pickup), r.id)))
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.cmp(&b.1 .1)))
            .expect("nonempty fleet");
        ends[ri] = t.dropoff;
        schedule.push(robots[ri].id, t.id);
    }
    Ok(schedule)
}

/// Physics energy of driving `sequence` along straight legs with the
/// constant-velocity executor, starting at rest from `start` with `soc0`.
#[allow(clippy::too_many_arguments)]
pub fn const_velocity_route_energy(
    robot: &Robot,
    start: Point,
    sequence: &[&Task],
    field: &FrictionField,
    executor: &ConstantVelocityExecutor,
    return_to_depot: bool,
    soc0: f64,
) -> Result<f64> {
    let mut legs: Vec<(Point, Point, f64)> = Vec::with_capacity(2 * sequence.len() + 1);
    let mut at = start;
    for t in sequence {
        legs.push((at, t.pickup, 0.0));
        legs.push((t.pickup, t.dropoff, t.payload));
        at = t.dropoff;
    }
    if return_to_depot && !sequence.is_empty() {
        legs.push((at, robot.depot, 0.0));
    }
    let mut soc = soc0;
    let mut energy = 0.0;
    for (a, b, payload) in legs {
        let traj = executor
            .run_leg(robot, a, b, payload, soc, field, 0.0)
            .map_err(|f| f.error)?;
        energy += traj.energy();
        if let Some(s) = traj.final_state() {
            soc = s.soc;
        }
    }
    Ok(energy)
}

/// Fleet energy of `schedule` under the constant-velocity executor, every
/// robot starting at its depot with a full battery.
pub fn const_velocity_energy(
    schedule: &Schedule,
    robots: &[Robot],
    tasks: &[Task],
    field: &FrictionField,
    executor: &ConstantVelocityExecutor,
    return_to_depot: bool,
) -> Result<f64> {
    let mut total = 0.0;
    for r in robots {
        let seq = crate::model::resolve_tasks(tasks, schedule.sequence(r.id))?;
        total += const_velocity_route_energy(
            r,
            r.depot,
            &seq,
            field,
            executor,
            return_to_depot,
            r.battery.soc_max,
        )?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationGuard {
    pub max_robots: usize,
    pub max_tasks: usize,
}

impl Default for EnumerationGuard {
    fn default() -> Self {
        Self {
            max_robots: 3,
            max_tasks: 8,
        }
    }
}

/// Minimum-cost assignment over all `n^m` task-to-robot mappings, each
/// robot serving its tasks in ascending id order. `route_cost` prices one
/// robot's ordered sequence. Ties keep the lexicographically first mapping
/// (task `k`'s robot index is digit `k`, tasks sorted by id).
pub fn enumerate_optimal<F>(
    robots: &[Robot],
    tasks: &[Task],
    guard: &EnumerationGuard,
    mut route_cost: F,
) -> Result<(Schedule, f64)>
where
    F: FnMut(&Robot, &[&Task]) -> Result<f64>,
{
    let (n, m) = (robots.len(), tasks.len());
    if n > guard.max_robots || m > guard.max_tasks {
        return Err(Error::SizeGuard {
            what: "assignment enumeration",
            size: (n as u64).saturating_pow(m as u32),
            limit: (guard.max_robots as u64).saturating_pow(guard.max_tasks as u32),
        });
    }
    if n == 0 {
        return if m == 0 {
            Ok((Schedule::default(), 0.0))
        } else {
            Err(Error::NoAvailableRobots {
                orphans: tasks.iter().map(|t| t.id).collect(),
            })
        };
    }
    let mut sorted: Vec<&Task> = tasks.iter().collect();
    sorted.sort_by_key(|t| t.id);
    let mut digits = alloc::vec![0usize; m];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut cost = 0.0;
        for (ri, r) in robots.iter().enumerate() {
            let seq: Vec<&Task> = sorted
                .iter()
                .zip(&digits)
                .filter(|(_, d)| **d == ri)
                .map(|(t, _)| *t)
                .collect();
            cost += route_cost(r, &seq)?;
        }
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, digits.clone()));
        }
        // Next mapping in lexicographic order, last task varying fastest.
        let mut k = m;
        loop {
            if k == 0 {
                let (cost, digits) = best.expect("at least one mapping");
                let mut schedule = Schedule::new(robots.iter().map(|r| r.id));
                for (t, d) in sorted.iter().zip(&digits) {
                    schedule.push(robots[*d].id, t.id);
                }
                return Ok((schedule, cost));
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < n {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// The schedule's sequences re-sorted by ascending task id (the ordering
/// rule used by [`enumerate_optimal`]).
pub fn with_ascending_order(schedule: &Schedule) -> Schedule {
    let mut out = schedule.clone();
    for seq in out.sequences.values_mut() {
        seq.sort();
    }
    out
}
