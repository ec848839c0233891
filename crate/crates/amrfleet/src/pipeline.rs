//! End-to-end runs: allocate, plan every route, refine conflicts, then replay
//! the disruption stream through an event loop that reschedules on demand.
//!
//! The event loop owns the schedule and one [`RobotRun`] per robot. A robot's
//! route always covers its whole history: rescheduling keeps the segments it
//! has committed to and appends a freshly optimized tail.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use amrfleet_core::auction::{run_auction_from_depots, AuctionTrace, BidContext, BidMetric, Bidder};
use amrfleet_core::baselines::{nearest_robot_allocate, nearest_task_allocate, nearest_task_dispatch};
use amrfleet_core::collision::{refine, RefineConfig, RefineReport, Track};
use amrfleet_core::dubins::Pose;
use amrfleet_core::energy::FrictionField;
use amrfleet_core::model::{resolve_tasks, validate_partition, PhaseKind};
use amrfleet_core::reschedule::{
    cold_reschedule, evaluate_triggers, track_cost_to_go, warm_start_reschedule, zeno_budget, CostToGo,
    DisruptionEvent, DisruptionKind, EventLogEntry, RescheduleRequest, RobotMonitor, TriggerDecision,
};
use amrfleet_core::scenario::Scenario;
use amrfleet_core::trajectory::{optimize_route, optimize_route_from, ConstantVelocityExecutor, PhaseContext, RouteTrajectory};
use amrfleet_core::{Error as CoreError, Point, Robot, RobotId, Schedule, Task, TaskId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("robot {robot}: {source}")]
    Route {
        robot: RobotId,
        #[source]
        source: CoreError,
    },
    #[error("partition check failed after the reschedule at t = {t:.3} s")]
    Partition { t: f64 },
    #[error("{0} is not supported for this variant")]
    Unsupported(&'static str),
}

pub type RunResultT<T> = Result<T, RunError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "metric")]
pub enum Allocator {
    Auction(BidMetric),
    /// Time-driven dispatch: the first free robot takes its nearest task.
    NearestTask,
    /// Global nearest (robot, pickup) pair greedy.
    NearestPair,
    NearestRobot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    /// Energy-optimized Dubins trajectories.
    Optimized,
    /// The same Dubins paths driven at constant cruise speed.
    ConstantVelocity,
}

/// An allocator paired with an execution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub allocator: Allocator,
    pub execution: Execution,
}

impl Variant {
    pub const fn auction(metric: BidMetric) -> Self {
        Self {
            allocator: Allocator::Auction(metric),
            execution: Execution::Optimized,
        }
    }

    /// Nearest-task dispatch with optimized trajectories.
    pub const B1: Self = Self {
        allocator: Allocator::NearestTask,
        execution: Execution::Optimized,
    };

    /// Nearest-robot allocation driven at constant velocity.
    pub const B2: Self = Self {
        allocator: Allocator::NearestRobot,
        execution: Execution::ConstantVelocity,
    };

    /// The same auction with Euclidean distance bids.
    pub const B3: Self = Self::auction(BidMetric::EuclideanDistance);

    pub fn name(&self) -> String {
        match (self.allocator, self.execution) {
            (Allocator::Auction(m), Execution::Optimized) => format!("auction-{}", m.name()),
            (Allocator::Auction(m), Execution::ConstantVelocity) => format!("auction-{}-cv", m.name()),
            (Allocator::NearestTask, Execution::Optimized) => "b1-nearest-task".into(),
            (Allocator::NearestTask, Execution::ConstantVelocity) => "nearest-task-cv".into(),
            (Allocator::NearestPair, Execution::Optimized) => "nearest-pair".into(),
            (Allocator::NearestPair, Execution::ConstantVelocity) => "nearest-pair-cv".into(),
            (Allocator::NearestRobot, Execution::ConstantVelocity) => "b2-nearest-robot-cv".into(),
            (Allocator::NearestRobot, Execution::Optimized) => "nearest-robot".into(),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let v = match name {
            "energy" | "auction-energy" => Self::auction(BidMetric::EnergyClosedForm),
            "distance" | "auction-distance" | "b3" => Self::B3,
            "zoned" | "auction-zoned" => Self::auction(BidMetric::ZoneAwareEnergy),
            "oracle" | "auction-oracle" => Self::auction(BidMetric::ExactOcpOracle),
            "b1" | "b1-nearest-task" => Self::B1,
            "b2" | "b2-nearest-robot-cv" => Self::B2,
            "nearest-pair" => Self {
                allocator: Allocator::NearestPair,
                execution: Execution::Optimized,
            },
            _ => return None,
        };
        Some(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescheduleMode {
    /// Re-auction only what the event touches.
    #[default]
    Warm,
    /// Re-auction every unstarted task.
    Cold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub disruptions: bool,
    pub refine: bool,
    pub mode: RescheduleMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            disruptions: true,
            refine: true,
            mode: RescheduleMode::Warm,
        }
    }
}

/// Everything one run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: String,
    pub seed: u64,
    pub schedule: Schedule,
    pub auction: Option<AuctionTrace>,
    #[serde(skip)]
    pub tracks: Vec<Track>,
    /// Realized battery energy of the whole fleet, J.
    pub fleet_energy: f64,
    /// Time the last robot stops, s.
    pub makespan: f64,
    pub refine: Option<RefineReport>,
    pub event_log: Vec<EventLogEntry>,
    pub cost_to_go: Vec<CostToGo>,
    pub zeno_budget: u64,
    pub tasks_total: usize,
    pub tasks_served: usize,
}

impl RunResult {
    pub fn reschedules(&self) -> usize {
        self.event_log.len()
    }
}

/// Allocates with `variant` from the depots.
pub fn allocate(scenario: &Scenario, allocator: Allocator) -> RunResultT<(Schedule, Option<AuctionTrace>)> {
    Ok(match allocator {
        Allocator::Auction(metric) => {
            let ctx = BidContext::new(&scenario.friction, &scenario.weights, &scenario.planner);
            let (s, t) = run_auction_from_depots(&scenario.robots, &scenario.tasks, metric, &ctx)?;
            (s, Some(t))
        }
        Allocator::NearestTask => {
            let speed = scenario.robots.first().map_or(1.0, |r| scenario.planner.v_avg(&r.params));
            (nearest_task_dispatch(&scenario.robots, &scenario.tasks, speed)?, None)
        }
        Allocator::NearestPair => (nearest_task_allocate(&scenario.robots, &scenario.tasks)?, None),
        Allocator::NearestRobot => (nearest_robot_allocate(&scenario.robots, &scenario.tasks)?, None),
    })
}

/// Optimizes every robot's route concurrently.
pub fn plan_routes(scenario: &Scenario, schedule: &Schedule) -> RunResultT<Vec<Track>> {
    scenario
        .robots
        .par_iter()
        .map(|robot| {
            let seq = resolve_tasks(&scenario.tasks, schedule.sequence(robot.id))?;
            let route = optimize_route(
                robot,
                &seq,
                &scenario.friction,
                &scenario.weights,
                Some(&scenario.workspace),
                &scenario.planner,
            )
            .map_err(|f| RunError::Route {
                robot: robot.id,
                source: f.error,
            })?;
            Ok(Track { robot: robot.id, route })
        })
        .collect()
}

/// Drives every robot's route at constant velocity along the planner's paths.
pub fn drive_routes(scenario: &Scenario, schedule: &Schedule) -> RunResultT<Vec<Track>> {
    scenario
        .robots
        .par_iter()
        .map(|robot| {
            let exec = ConstantVelocityExecutor::new(scenario.planner.v_avg(&robot.params));
            let seq = resolve_tasks(&scenario.tasks, schedule.sequence(robot.id))?;
            let route = exec
                .run_route(
                    robot,
                    &seq,
                    &scenario.friction,
                    &scenario.weights,
                    Some(&scenario.workspace),
                    &scenario.planner,
                )
                .map_err(|f| RunError::Route {
                    robot: robot.id,
                    source: f.error,
                })?;
            Ok(Track { robot: robot.id, route })
        })
        .collect()
}

pub fn refine_config(scenario: &Scenario) -> RefineConfig {
    RefineConfig {
        d_safe: scenario.d_safe,
        lambda_c: scenario.weights.lambda_c,
        ..RefineConfig::default()
    }
}

/// Runs one variant on one scenario.
pub fn run_pipeline(scenario: &Scenario, variant: Variant, options: &RunOptions) -> RunResultT<RunResult> {
    run_pipeline_timed(scenario, variant, options, &|| Instant::now())
}

/// As [`run_pipeline`] with an injectable clock for latency measurement.
pub fn run_pipeline_timed(
    scenario: &Scenario,
    variant: Variant,
    options: &RunOptions,
    clock: &(dyn Fn() -> Instant + Sync),
) -> RunResultT<RunResult> {
    scenario.validate()?;
    let (schedule, auction) = allocate(scenario, variant.allocator)?;
    if variant.execution == Execution::ConstantVelocity {
        if options.disruptions && !scenario.disruptions.is_empty() {
            return Err(RunError::Unsupported("disruption replay with constant-velocity execution"));
        }
        let tracks = drive_routes(scenario, &schedule)?;
        let mut sim = EventLoop::new(scenario, schedule, tracks, BidMetric::EuclideanDistance, options.mode);
        sim.run(&[], clock)?;
        return Ok(sim.finish(variant.name(), auction, None));
    }

    let mut tracks = plan_routes(scenario, &schedule)?;
    let refine_report = if options.refine && tracks.len() > 1 {
        Some(refine(
            &mut tracks,
            &scenario.robots,
            &scenario.friction,
            &scenario.weights,
            &scenario.planner,
            &refine_config(scenario),
        )?)
    } else {
        None
    };
    let metric = match variant.allocator {
        Allocator::Auction(m) => m,
        // Baseline allocations are repaired with distance bids.
        _ => BidMetric::EuclideanDistance,
    };
    let events: &[DisruptionEvent] = if options.disruptions { &scenario.disruptions } else { &[] };
    let mut sim = EventLoop::new(scenario, schedule, tracks, metric, options.mode);
    sim.run(events, clock)?;
    Ok(sim.finish(variant.name(), auction, refine_report))
}

/// Per-robot execution state.
#[derive(Debug, Clone)]
struct RobotRun {
    route: RouteTrajectory,
    /// Predicted energy of each segment, J.
    predicted: Vec<f64>,
    active: bool,
    /// Friction multiplier and the time it takes effect.
    disturbance: Option<(f64, f64)>,
    calibration: f64,
    window_start: f64,
    last_checked: f64,
    last_deviation: Option<f64>,
    /// Segment cut short by a fault.
    cut: Option<usize>,
}

/// Where a robot will be once it finishes what it has started.
#[derive(Debug, Clone, Copy)]
struct Commit {
    keep: usize,
    pose: Pose,
    soc: f64,
    time: f64,
}

impl RobotRun {
    fn new(route: RouteTrajectory) -> Self {
        let predicted = route.segments.iter().map(|s| s.energy()).collect();
        Self {
            route,
            predicted,
            active: true,
            disturbance: None,
            calibration: 1.0,
            window_start: 0.0,
            last_checked: 0.0,
            last_deviation: None,
            cut: None,
        }
    }

    /// The in-progress segment at `t`, if any.
    fn segment_at(&self, t: f64) -> Option<usize> {
        self.route
            .segments
            .iter()
            .position(|s| t >= s.start_time && t < s.end_time())
    }

    fn commit(&self, robot: &Robot, t: f64) -> Commit {
        let segs = &self.route.segments;
        let keep = match self.segment_at(t) {
            None => segs.iter().take_while(|s| s.start_time <= t).count(),
            Some(i) => match segs[i].task {
                // Finish the task being served, through its dropoff.
                Some(task) => segs
                    .iter()
                    .rposition(|s| s.task == Some(task) && s.kind == PhaseKind::Loaded)
                    .map_or(i + 1, |j| j + 1),
                None => i + 1,
            },
        };
        match keep.checked_sub(1).map(|k| &segs[k]) {
            Some(last) => Commit {
                keep,
                pose: last.spec.end,
                soc: last.samples.last().map_or(robot.battery.soc_max, |s| s.state.soc),
                time: last.end_time().max(t),
            },
            None => Commit {
                keep: 0,
                pose: Pose::at(robot.depot, 0.0),
                soc: robot.battery.soc_max,
                time: t,
            },
        }
    }

    /// Tasks in the first `keep` segments, in order.
    fn tasks_in(&self, keep: usize) -> Vec<TaskId> {
        let mut out: Vec<TaskId> = Vec::new();
        for s in &self.route.segments[..keep] {
            if let Some(t) = s.task {
                if out.last() != Some(&t) {
                    out.push(t);
                }
            }
        }
        out
    }

    fn monitor(&self, robot: RobotId, t: f64) -> RobotMonitor {
        let (mut e_act, mut e_pred) = (0.0, 0.0);
        for (s, p) in self.route.segments.iter().zip(&self.predicted) {
            if s.start_time >= self.window_start && s.end_time() <= t {
                e_act += s.energy();
                e_pred += p;
            }
        }
        RobotMonitor {
            robot,
            active: self.active,
            e_act,
            e_pred,
            last_deviation_reschedule: self.last_deviation,
        }
    }

    /// End time of the next disturbed segment not yet checked.
    fn next_checkpoint(&self) -> Option<f64> {
        let (t_d, _) = self.disturbance?;
        if !self.active {
            return None;
        }
        self.route
            .segments
            .iter()
            .filter(|s| s.start_time >= t_d - 1e-9 && s.start_time >= self.window_start)
            .map(|s| s.end_time())
            .filter(|e| *e > self.last_checked)
            .min_by(f64::total_cmp)
    }

    /// Stops the robot at `t`, cutting the segment in progress. Returns the
    /// task that segment was serving.
    fn halt(&mut self, t: f64) -> Option<TaskId> {
        self.active = false;
        let i = self.segment_at(t);
        let keep = match i {
            Some(i) => i + 1,
            None => self.route.segments.iter().take_while(|s| s.start_time <= t).count(),
        };
        self.route.segments.truncate(keep);
        self.predicted.truncate(keep);
        let i = i?;
        let seg = &mut self.route.segments[i];
        seg.samples.retain(|s| s.t <= t);
        seg.costs.energy = seg
            .samples
            .windows(2)
            .map(|w| 0.5 * (w[0].power.p_battery + w[1].power.p_battery) * (w[1].t - w[0].t))
            .sum();
        seg.objective = seg.costs.energy;
        seg.duration = t - seg.start_time;
        let task = seg.task;
        self.route.recompute_totals();
        self.cut = Some(i);
        task
    }

    fn served(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.route
            .segments
            .iter()
            .enumerate()
            .filter(move |(i, s)| s.kind == PhaseKind::Loaded && Some(*i) != self.cut)
            .filter_map(|(_, s)| s.task)
    }
}

fn scaled_field(field: &FrictionField, k: f64) -> FrictionField {
    let mut f = field.clone();
    f.uniform_mu *= k;
    f.default_mu *= k;
    for z in &mut f.zones {
        z.mu *= k;
    }
    f
}

struct EventLoop<'a> {
    scenario: &'a Scenario,
    tasks: Vec<Task>,
    schedule: Schedule,
    runs: Vec<RobotRun>,
    metric: BidMetric,
    mode: RescheduleMode,
    log: Vec<EventLogEntry>,
    cost_to_go: Vec<CostToGo>,
    faults: usize,
    priorities: usize,
}

impl<'a> EventLoop<'a> {
    fn new(scenario: &'a Scenario, schedule: Schedule, tracks: Vec<Track>, metric: BidMetric, mode: RescheduleMode) -> Self {
        let runs = tracks.into_iter().map(|t| RobotRun::new(t.route)).collect();
        Self {
            scenario,
            tasks: scenario.tasks.clone(),
            schedule,
            runs,
            metric,
            mode,
            log: Vec::new(),
            cost_to_go: Vec::new(),
            faults: 0,
            priorities: 0,
        }
    }

    fn robot(&self, i: usize) -> &'a Robot {
        &self.scenario.robots[i]
    }

    fn index_of(&self, id: RobotId) -> Option<usize> {
        self.scenario.robots.iter().position(|r| r.id == id)
    }

    fn run(&mut self, events: &[DisruptionEvent], clock: &(dyn Fn() -> Instant + Sync)) -> RunResultT<()> {
        let mut next = 0;
        loop {
            let scripted = events.get(next).map(|e| e.t);
            let check = self
                .runs
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.next_checkpoint().map(|t| (t, i)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let (t, batch) = match (scripted, check) {
                (None, None) => break,
                (Some(ts), Some((tc, _))) if ts <= tc => {
                    let end = next + events[next..].iter().take_while(|e| e.t == ts).count();
                    let batch = &events[next..end];
                    next = end;
                    (ts, batch)
                }
                (Some(ts), None) => {
                    let end = next + events[next..].iter().take_while(|e| e.t == ts).count();
                    let batch = &events[next..end];
                    next = end;
                    (ts, batch)
                }
                (_, Some((tc, i))) => {
                    self.runs[i].last_checked = tc;
                    (tc, &[][..])
                }
            };
            for e in batch.iter().filter(|e| e.kind == DisruptionKind::EnergyDeviation) {
                self.disturb(e)?;
            }
            let monitors: Vec<RobotMonitor> = self
                .runs
                .iter()
                .enumerate()
                .map(|(i, r)| r.monitor(self.robot(i).id, t))
                .collect();
            let decision = evaluate_triggers(&monitors, batch, &self.scenario.trigger, t);
            self.faults += decision.faults.len();
            self.priorities += decision.priority_tasks.len();
            if decision.fires() {
                self.reschedule(t, decision, &monitors, clock)?;
            }
        }
        Ok(())
    }

    /// Applies a friction disturbance from the next phase boundary on.
    fn disturb(&mut self, e: &DisruptionEvent) -> RunResultT<()> {
        let (Some(id), Some(k)) = (e.robot, e.friction_factor) else {
            return Ok(());
        };
        let Some(i) = self.index_of(id) else {
            return Err(CoreError::UnknownRobot(id).into());
        };
        let run = &mut self.runs[i];
        if !run.active {
            return Ok(());
        }
        let from = run.segment_at(e.t).map_or(e.t, |s| run.route.segments[s].end_time());
        run.disturbance = Some((from, run.disturbance.map_or(k, |(_, k0)| k0 * k)));
        let first = run.route.segments.iter().position(|s| s.start_time >= from - 1e-9);
        if let Some(first) = first {
            self.apply_disturbance(i, first)?;
        }
        Ok(())
    }

    /// Re-simulates segments from `first` on under the robot's disturbed floor.
    fn apply_disturbance(&mut self, i: usize, first: usize) -> RunResultT<()> {
        let robot = self.robot(i);
        let run = &mut self.runs[i];
        let Some((t_d, k)) = run.disturbance else {
            return Ok(());
        };
        let field = scaled_field(&self.scenario.friction, k);
        let ctx = PhaseContext {
            params: &robot.params,
            battery: &robot.battery,
            field: &field,
            weights: &self.scenario.weights,
            workspace: Some(&self.scenario.workspace),
            config: &self.scenario.planner,
        };
        let mut soc = first
            .checked_sub(1)
            .and_then(|j| run.route.segments[j].samples.last())
            .map_or(robot.battery.soc_max, |s| s.state.soc);
        for j in first..run.route.segments.len() {
            let seg = &run.route.segments[j];
            if seg.start_time >= t_d - 1e-9 {
                let replayed = ctx
                    .replay_phase(seg, soc, seg.start_time)
                    .map_err(|f| RunError::Route { robot: robot.id, source: f.error })?;
                run.route.segments[j] = replayed;
            }
            soc = run.route.segments[j].samples.last().map_or(soc, |s| s.state.soc);
        }
        run.route.recompute_totals();
        Ok(())
    }

    fn all_task_ids(&self) -> Vec<TaskId> {
        self.tasks.iter().map(|t| t.id).collect()
    }

    fn reschedule(
        &mut self,
        t: f64,
        decision: TriggerDecision,
        monitors: &[RobotMonitor],
        clock: &(dyn Fn() -> Instant + Sync),
    ) -> RunResultT<()> {
        let mut request = RescheduleRequest::default();
        for r in &decision.faults {
            let i = self.index_of(*r).ok_or(CoreError::UnknownRobot(*r))?;
            // The cut segment never counts as served, so its task is reopened.
            let in_progress = self.runs[i].halt(t);
            let started = self.runs[i].served().count() + usize::from(in_progress.is_some());
            self.schedule.cursor.insert(*r, started.min(self.schedule.sequence(*r).len()));
            request.reopened.extend(in_progress);
            request.excluded.insert(*r);
        }
        for task in &decision.priority_tasks {
            request.arrivals.push(task.id);
            self.tasks.push(task.clone());
        }
        let mut calibration: BTreeMap<RobotId, f64> = BTreeMap::new();
        for r in &decision.deviations {
            let i = self.index_of(*r).ok_or(CoreError::UnknownRobot(*r))?;
            let m = &monitors[i];
            let run = &mut self.runs[i];
            run.calibration *= m.e_act / m.e_pred;
            run.last_deviation = Some(t);
            run.window_start = t;
            request.affected.insert(*r);
        }
        for (i, run) in self.runs.iter().enumerate() {
            if run.calibration != 1.0 {
                calibration.insert(self.robot(i).id, run.calibration);
            }
        }

        // Freeze what every healthy robot has started.
        let mut commits: BTreeMap<RobotId, Commit> = BTreeMap::new();
        for (i, run) in self.runs.iter().enumerate() {
            let robot = self.robot(i);
            if !run.active {
                continue;
            }
            let c = run.commit(robot, t);
            let started = run.tasks_in(c.keep);
            debug_assert!(self.schedule.sequence(robot.id).starts_with(&started));
            self.schedule.cursor.insert(robot.id, started.len());
            commits.insert(robot.id, c);
        }
        let cold = self.mode == RescheduleMode::Cold;
        let positions: BTreeMap<RobotId, Point> = commits.iter().map(|(r, c)| (*r, c.pose.position())).collect();
        let bidders: Vec<Bidder> = self
            .scenario
            .robots
            .iter()
            .filter(|r| commits.contains_key(&r.id))
            .map(|robot| {
                let pending = self.schedule.unstarted(robot.id);
                let position = match pending.last() {
                    Some(last) if !(cold || request.affected.contains(&robot.id)) => {
                        self.tasks.iter().find(|x| x.id == *last).map_or(positions[&robot.id], |x| x.dropoff)
                    }
                    _ => positions[&robot.id],
                };
                Bidder { robot, position }
            })
            .collect();

        let rho = self.scenario.weights.rho;
        let k = self.log.len();
        let v_before = track_cost_to_go(
            &self.schedule,
            &positions,
            &self.scenario.robots,
            &self.tasks,
            &self.scenario.friction,
            rho,
            k,
        )?;
        let mut ctx = BidContext::new(&self.scenario.friction, &self.scenario.weights, &self.scenario.planner);
        if !calibration.is_empty() {
            ctx.calibration = Some(&calibration);
        }
        let started = clock();
        let (next, outcome) = if cold {
            cold_reschedule(&self.schedule, &request, &self.tasks, &bidders, self.metric, &ctx)?
        } else {
            warm_start_reschedule(&self.schedule, &request, &self.tasks, &bidders, self.metric, &ctx)?
        };
        let latency = clock().duration_since(started).as_secs_f64();
        if !validate_partition(&next, &self.all_task_ids()) {
            return Err(RunError::Partition { t });
        }
        self.schedule = next;

        let mut replan: BTreeSet<RobotId> = outcome.changed.clone();
        replan.extend(request.affected.iter().copied());
        for r in replan {
            if let Some(c) = commits.get(&r).copied() {
                self.replan(r, c)?;
            }
        }
        let v_after = track_cost_to_go(
            &self.schedule,
            &positions,
            &self.scenario.robots,
            &self.tasks,
            &self.scenario.friction,
            rho,
            k + 1,
        )?;
        self.cost_to_go.push(v_before);
        let (kind, robot) = if let Some(r) = decision.faults.first() {
            (DisruptionKind::Fault, Some(*r))
        } else if !decision.priority_tasks.is_empty() {
            (DisruptionKind::PriorityTask, None)
        } else {
            (DisruptionKind::EnergyDeviation, decision.deviations.first().copied())
        };
        self.log.push(EventLogEntry {
            t,
            kind,
            robot,
            tasks_reassigned: outcome.reassigned.len(),
            latency,
            v_before: v_before.value,
            v_after: v_after.value,
        });
        Ok(())
    }

    /// Replaces everything after the commit point with a new optimized tail.
    fn replan(&mut self, id: RobotId, c: Commit) -> RunResultT<()> {
        let i = self.index_of(id).ok_or(CoreError::UnknownRobot(id))?;
        let robot = self.robot(i);
        let tail = resolve_tasks(&self.tasks, self.schedule.unstarted(id))?;
        let fresh = optimize_route_from(
            robot,
            c.pose,
            c.soc,
            c.time,
            &tail,
            &self.scenario.friction,
            &self.scenario.weights,
            Some(&self.scenario.workspace),
            &self.scenario.planner,
        )
        .map_err(|f| RunError::Route { robot: id, source: f.error })?;
        let run = &mut self.runs[i];
        run.route.segments.truncate(c.keep);
        run.predicted.truncate(c.keep);
        for (j, mut seg) in fresh.segments.into_iter().enumerate() {
            seg.index = c.keep + j;
            run.predicted.push(seg.energy() * run.calibration);
            run.route.segments.push(seg);
        }
        run.route.recompute_totals();
        run.window_start = run.window_start.max(c.time);
        self.apply_disturbance(i, c.keep)
    }

    fn finish(
        self,
        variant: String,
        auction: Option<AuctionTrace>,
        refine: Option<RefineReport>,
    ) -> RunResult {
        let horizon = self
            .runs
            .iter()
            .map(|r| r.route.duration())
            .chain(self.log.last().map(|e| e.t))
            .fold(0.0, f64::max);
        let served: BTreeSet<TaskId> = self.runs.iter().flat_map(|r| r.served()).collect();
        let tracks: Vec<Track> = self
            .runs
            .into_iter()
            .zip(&self.scenario.robots)
            .map(|(r, robot)| Track {
                robot: robot.id,
                route: r.route,
            })
            .collect();
        let fleet_energy = tracks.iter().map(|t| t.route.total_energy).sum();
        RunResult {
            variant,
            seed: self.scenario.seed,
            schedule: self.schedule,
            auction,
            fleet_energy,
            makespan: horizon,
            tracks,
            refine,
            event_log: self.log,
            cost_to_go: self.cost_to_go,
            zeno_budget: zeno_budget(
                horizon.max(f64::MIN_POSITIVE),
                self.scenario.robots.len(),
                &self.scenario.trigger,
                self.faults,
                self.priorities,
            ),
            tasks_total: self.tasks.len(),
            tasks_served: served.len(),
        }
    }
}

/// Runs several variants on the same scenario (paired design).
pub fn run_variants(scenario: &Scenario, variants: &[Variant], options: &RunOptions) -> Vec<RunResultT<RunResult>> {
    variants.iter().map(|v| run_pipeline(scenario, *v, options)).collect()
}
