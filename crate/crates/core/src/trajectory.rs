//! Per-robot trajectory generation.
//!
//! A route is split into phases between consecutive waypoints (depot,
//! pickups, dropoffs). Each phase follows a Dubins path whose duration is
//! fixed by the average-speed timing law `T = DL / v_avg`. Inside that
//! window the robot flies a trapezoidal speed profile; the two ramp shares
//! are the decision variables, and the cruise speed follows from covering
//! `DL` in `T`. The objective is the integrated running cost
//! `w1·P_batt + w2·(soc_max − soc)² + w3·ψ̇²`, evaluated by simulating the
//! full vehicle model under a feed-forward speed controller.
//!
//! The search is a coordinate (pattern) descent followed by one
//! finite-difference gradient step, both accepting only strict improvements,
//! so the objective never rises above the nominal profile's.

use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dubins::{DubinsPath, Pose, Word};
use crate::energy::FrictionField;
use crate::geometry::Point;
use crate::math;
use crate::model::{
    waypoint_list, BatteryParams, ControlInput, CostWeights, PhaseKind, Robot, RobotParams,
    RobotState, Task, TaskId, Workspace,
};
use crate::physics::{
    drive_inertia, rolling_torque, ControlPolicy, CostIntegrals, Plant, Sample, DEFAULT_DT,
    STANDSTILL_SPEED,
};
use crate::{Error, Result};

/// How waypoint headings are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingRule {
    /// Face the next waypoint.
    TowardNext,
    /// Bisect the arrival and departure bearings.
    Bisector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Step used for the realized trajectory, s.
    pub dt: f64,
    /// Step used while searching profile parameters, s.
    pub search_dt: f64,
    /// `v_avg / v_max` in the timing law.
    pub v_avg_ratio: f64,
    /// Profile evaluations allowed per phase search.
    pub max_evaluations: usize,
    pub heading_rule: HeadingRule,
    pub return_to_depot: bool,
    /// Lower bound on each ramp as a share of the phase duration.
    pub min_ramp_share: f64,
    /// Nominal (starting) ramp share.
    pub nominal_ramp_share: f64,
    /// Proportional speed-feedback gain, 1/s.
    pub speed_gain: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            search_dt: 0.05,
            v_avg_ratio: 0.8,
            max_evaluations: 24,
            heading_rule: HeadingRule::TowardNext,
            return_to_depot: true,
            min_ramp_share: 0.02,
            nominal_ramp_share: 0.1,
            speed_gain: 4.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.search_dt > 0.0) {
            return Err(Error::invalid("dt", "integration steps must be > 0"));
        }
        if !(self.v_avg_ratio > 0.0 && self.v_avg_ratio < 1.0) {
            return Err(Error::invalid("v_avg_ratio", "must lie in (0, 1)"));
        }
        if !(self.min_ramp_share > 0.0 && self.nominal_ramp_share >= self.min_ramp_share) {
            return Err(Error::invalid("ramp shares", "need 0 < min ≤ nominal"));
        }
        Ok(())
    }

    pub fn v_avg(&self, params: &RobotParams) -> f64 {
        self.v_avg_ratio * params.v_max
    }
}

/// Cruise speed must stay this far below `v_max` so tracking never exceeds it.
const SPEED_MARGIN: f64 = 1e-3;

/// Piecewise-linear speed reference: ramp `v0 → cruise`, hold, ramp to `vf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub v0: f64,
    pub vf: f64,
    pub cruise: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub duration: f64,
}

impl SpeedProfile {
    /// Profile covering `distance` in `duration` with the given ramp shares,
    /// or `None` if the implied cruise speed is outside `[0, v_max)`.
    pub fn from_shares(
        distance: f64,
        duration: f64,
        v0: f64,
        vf: f64,
        up_share: f64,
        down_share: f64,
        v_max: f64,
    ) -> Option<Self> {
        if !(up_share > 0.0 && down_share > 0.0 && up_share + down_share <= 1.0) {
            return None;
        }
        let t_up = up_share * duration;
        let t_down = down_share * duration;
        let denom = duration - 0.5 * (t_up + t_down);
        let cruise = (distance - 0.5 * (v0 * t_up + vf * t_down)) / denom;
        (cruise.is_finite() && cruise >= 0.0 && cruise <= v_max - SPEED_MARGIN).then_some(Self {
            v0,
            vf,
            cruise,
            ramp_up: t_up,
            ramp_down: t_down,
            duration,
        })
    }

    pub fn speed(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        let down_start = self.duration - self.ramp_down;
        if t < self.ramp_up {
            self.v0 + (self.cruise - self.v0) * t / self.ramp_up
        } else if t < down_start {
            self.cruise
        } else {
            self.cruise + (self.vf - self.cruise) * (t - down_start) / self.ramp_down
        }
    }

    pub fn accel(&self, t: f64) -> f64 {
        let down_start = self.duration - self.ramp_down;
        if t < self.ramp_up {
            (self.cruise - self.v0) / self.ramp_up
        } else if t < down_start {
            0.0
        } else if t <= self.duration {
            (self.vf - self.cruise) / self.ramp_down
        } else {
            0.0
        }
    }

    /// Distance covered by time `t`.
    pub fn distance(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        let up = t.min(self.ramp_up);
        let mut s = self.v0 * up + 0.5 * (self.cruise - self.v0) / self.ramp_up * up * up;
        if t > self.ramp_up {
            let down_start = self.duration - self.ramp_down;
            let hold = t.min(down_start) - self.ramp_up;
            s += self.cruise * hold.max(0.0);
            if t > down_start {
                let dd = t - down_start;
                s += self.cruise * dd + 0.5 * (self.vf - self.cruise) / self.ramp_down * dd * dd;
            }
        }
        s
    }
}

/// Feed-forward drive controller tracking a speed profile along a path.
struct PhaseController<'a> {
    profile: SpeedProfile,
    path: &'a DubinsPath,
    params: &'a RobotParams,
    field: &'a FrictionField,
    payload: f64,
    gain: f64,
    /// When false, deceleration uses only the shorted motor and brake.
    regen: bool,
}

impl ControlPolicy for PhaseController<'_> {
    fn control(&self, t: f64, state: &RobotState) -> ControlInput {
        let p = self.params;
        let accel = self.profile.accel(t) + self.gain * (self.profile.speed(t) - state.speed);
        let gate = (state.speed / STANDSTILL_SPEED).clamp(0.0, 1.0);
        let roll = rolling_torque(p, self.payload, self.field.mu_at(state.position())) * gate;
        let torque = drive_inertia(p, self.payload) * accel + roll;
        let back_emf = p.motor_constant * state.speed / p.wheel_radius;
        let voltage = p.motor_resistance * torque / p.motor_constant + back_emf;
        let steer = math::atan(p.wheelbase * self.path.curvature(self.profile.distance(t)));
        if voltage >= 0.0 && (self.regen || torque >= 0.0) {
            return ControlInput {
                steer,
                voltage: voltage.min(p.voltage_max),
                brake: 0.0,
            };
        }
        // Shorted motor plus friction brake for the remainder.
        let shorted = -p.motor_constant * back_emf / p.motor_resistance;
        let brake = if gate > 0.0 {
            (shorted - torque) / gate
        } else {
            0.0
        };
        ControlInput {
            steer,
            voltage: 0.0,
            brake: brake.clamp(0.0, p.brake_torque_max),
        }
    }
}

/// Everything needed to (re)plan one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub start: Pose,
    pub end: Pose,
    pub payload: f64,
    pub v0: f64,
    pub vf: f64,
}

/// One realized phase of a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub index: usize,
    pub kind: PhaseKind,
    pub task: Option<TaskId>,
    pub spec: PhaseSpec,
    pub path: DubinsPath,
    pub start_time: f64,
    pub duration: f64,
    pub profile: Option<SpeedProfile>,
    pub costs: CostIntegrals,
    pub objective: f64,
    /// Objective of the unoptimized nominal profile.
    pub nominal_objective: f64,
    /// Accepted objective values during the search, in order.
    pub search_history: Vec<f64>,
    /// Distance between the realized end position and the waypoint.
    pub terminal_error: f64,
    pub samples: Vec<Sample>,
}

impl SegmentPlan {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    pub fn energy(&self) -> f64 {
        self.costs.energy
    }

    pub fn path_length(&self) -> f64 {
        self.path.length()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RouteTrajectory {
    pub segments: Vec<SegmentPlan>,
    pub total_energy: f64,
    pub objective_value: f64,
}

impl RouteTrajectory {
    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, SegmentPlan::end_time)
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.segments.iter().flat_map(|s| s.samples.iter())
    }

    pub fn recompute_totals(&mut self) {
        self.total_energy = self.segments.iter().map(SegmentPlan::energy).sum();
        self.objective_value = self.segments.iter().map(|s| s.objective).sum();
    }

    /// Position at time `t`, or `None` before the start or after the end.
    pub fn position_at(&self, t: f64) -> Option<Point> {
        let seg = self
            .segments
            .iter()
            .find(|s| t >= s.start_time && t <= s.end_time() && !s.samples.is_empty())?;
        let samples = &seg.samples;
        let idx = samples.partition_point(|s| s.t <= t);
        if idx == 0 {
            return Some(samples[0].state.position());
        }
        if idx >= samples.len() {
            return Some(samples[samples.len() - 1].state.position());
        }
        let (a, b) = (&samples[idx - 1], &samples[idx]);
        let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
        Some(a.state.position().lerp(b.state.position(), w))
    }
}

/// Route planning failed; `partial` holds the phases completed before it.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteFailure {
    pub error: Error,
    pub partial: Option<Box<RouteTrajectory>>,
}

impl From<Error> for RouteFailure {
    fn from(error: Error) -> Self {
        RouteFailure {
            error,
            partial: None,
        }
    }
}

/// Model and settings shared by every phase of one robot.
#[derive(Debug, Clone, Copy)]
pub struct PhaseContext<'a> {
    pub params: &'a RobotParams,
    pub battery: &'a BatteryParams,
    pub field: &'a FrictionField,
    pub weights: &'a CostWeights,
    pub workspace: Option<&'a Workspace>,
    pub config: &'a PlannerConfig,
}

struct Evaluated {
    costs: CostIntegrals,
    objective: f64,
    samples: Vec<Sample>,
}

impl PhaseContext<'_> {
    fn objective(&self, c: &CostIntegrals) -> f64 {
        c.objective(self.weights.w1, self.weights.w2, self.weights.w3)
    }

    /// Chooses the shortest Dubins word whose path stays admissible.
    fn plan_path(&self, spec: &PhaseSpec) -> Result<DubinsPath> {
        let rho = self.params.turn_radius();
        let shortest = DubinsPath::shortest(spec.start, spec.end, rho);
        let Some(ws) = self.workspace else {
            return Ok(shortest);
        };
        if path_admissible(&shortest, ws) {
            return Ok(shortest);
        }
        let mut cands: Vec<DubinsPath> = Word::ALL
            .iter()
            .filter_map(|w| DubinsPath::with_word(spec.start, spec.end, rho, *w))
            .collect();
        cands.sort_by(|a, b| a.length().total_cmp(&b.length()));
        cands
            .into_iter()
            .find(|p| path_admissible(p, ws))
            .ok_or(Error::InfeasibleWaypoint {
                index: 0,
                x: spec.end.x,
                y: spec.end.y,
                reason: "no admissible path reaches this waypoint",
            })
    }

    fn simulate(
        &self,
        spec: &PhaseSpec,
        path: &DubinsPath,
        profile: &SpeedProfile,
        soc0: f64,
        t0: f64,
        dt: f64,
        regen: bool,
    ) -> core::result::Result<Evaluated, Box<crate::physics::SimulationFault>> {
        let plant = Plant {
            params: self.params,
            battery: self.battery,
            field: self.field,
            payload: spec.payload,
        };
        let ctrl = PhaseController {
            profile: *profile,
            path,
            params: self.params,
            field: self.field,
            payload: spec.payload,
            gain: self.config.speed_gain,
            regen,
        };
        let state0 = RobotState {
            x: spec.start.x,
            y: spec.start.y,
            heading: spec.start.heading,
            speed: spec.v0,
            soc: soc0,
        };
        let traj = plant.integrate(state0, &ctrl, (0.0, profile.duration), dt)?;
        let mut samples = traj.samples;
        if t0 != 0.0 {
            for s in &mut samples {
                s.t += t0;
                s.power.t += t0;
            }
        }
        Ok(Evaluated {
            objective: self.objective(&traj.costs),
            costs: traj.costs,
            samples,
        })
    }

    /// Plans and optimizes a single phase starting at time `t0` with battery
    /// state `soc0`.
    pub fn plan_phase(
        &self,
        spec: &PhaseSpec,
        soc0: f64,
        t0: f64,
    ) -> core::result::Result<SegmentPlan, Box<crate::physics::SimulationFault>> {
        let path = self.plan_path(spec).map_err(|e| {
            Box::new(crate::physics::SimulationFault {
                error: e,
                partial: Default::default(),
            })
        })?;
        let v_avg = self.config.v_avg(self.params);
        self.plan_phase_with_duration(spec, path, path.length() / v_avg, soc0, t0)
    }

    /// As [`Self::plan_phase`] with an explicit duration (used for retiming).
    pub fn plan_phase_with_duration(
        &self,
        spec: &PhaseSpec,
        path: DubinsPath,
        duration: f64,
        soc0: f64,
        t0: f64,
    ) -> core::result::Result<SegmentPlan, Box<crate::physics::SimulationFault>> {
        let length = path.length();
        let mut plan = SegmentPlan {
            index: 0,
            kind: if spec.payload > 0.0 {
                PhaseKind::Loaded
            } else {
                PhaseKind::Unloaded
            },
            task: None,
            spec: *spec,
            path,
            start_time: t0,
            duration: 0.0,
            profile: None,
            costs: CostIntegrals::default(),
            objective: 0.0,
            nominal_objective: 0.0,
            search_history: Vec::new(),
            terminal_error: 0.0,
            samples: Vec::new(),
        };
        if length <= 0.0 {
            plan.samples.push(Sample {
                t: t0,
                state: RobotState {
                    x: spec.start.x,
                    y: spec.start.y,
                    heading: spec.start.heading,
                    speed: spec.v0,
                    soc: soc0,
                },
                control: ControlInput::ZERO,
                power: crate::physics::PowerRecord {
                    t: t0,
                    ocv: self.battery.ocv(soc0),
                    ..Default::default()
                },
            });
            return Ok(plan);
        }
        let v_max = self.params.v_max;
        let cfg = self.config;
        let make = |up: f64, down: f64| {
            SpeedProfile::from_shares(length, duration, spec.v0, spec.vf, up, down, v_max)
        };

        let evaluations = core::cell::Cell::new(0usize);
        let eval = |shares: (f64, f64)| -> Option<f64> {
            let (up, down) = shares;
            if up < cfg.min_ramp_share || down < cfg.min_ramp_share {
                return None;
            }
            let profile = make(up, down)?;
            evaluations.set(evaluations.get() + 1);
            self.simulate(spec, &path, &profile, soc0, 0.0, cfg.search_dt, true)
                .ok()
                .map(|e| e.objective)
        };

        let mut nominal = (cfg.nominal_ramp_share, cfg.nominal_ramp_share);
        // Very short phases may need longer ramps to fit under v_max.
        while make(nominal.0, nominal.1).is_none() && nominal.0 < 0.5 {
            nominal = (nominal.0 + 0.05, nominal.1 + 0.05);
        }
        if make(nominal.0, nominal.1).is_none() {
            return Err(Box::new(crate::physics::SimulationFault {
                error: Error::InfeasibleWaypoint {
                    index: 0,
                    x: spec.end.x,
                    y: spec.end.y,
                    reason: "timing law demands a speed above v_max",
                },
                partial: Default::default(),
            }));
        }
        let mut best = nominal;
        let mut best_val = eval(best).unwrap_or(f64::INFINITY);
        let mut history = alloc::vec![best_val];

        // Pattern search over the two ramp shares.
        let mut step = 0.05;
        while step >= 0.004 && evaluations.get() < cfg.max_evaluations {
            let mut improved = false;
            for axis in 0..2 {
                for dir in [1.0, -1.0] {
                    if evaluations.get() >= cfg.max_evaluations {
                        break;
                    }
                    let cand = if axis == 0 {
                        (best.0 + dir * step, best.1)
                    } else {
                        (best.0, best.1 + dir * step)
                    };
                    if let Some(v) = eval(cand) {
                        if v < best_val {
                            best = cand;
                            best_val = v;
                            history.push(v);
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }

        // Finite-difference gradient step with backtracking.
        if evaluations.get() + 4 <= cfg.max_evaluations {
            let h = 0.002;
            let f = |v: Option<f64>| v.unwrap_or(f64::NAN);
            let gx = (f(eval((best.0 + h, best.1))) - f(eval((best.0 - h, best.1)))) / (2.0 * h);
            let gy = (f(eval((best.0, best.1 + h))) - f(eval((best.0, best.1 - h)))) / (2.0 * h);
            let norm = math::hypot(gx, gy);
            if norm.is_finite() && norm > 0.0 {
                let mut len = step.max(0.004);
                while evaluations.get() < cfg.max_evaluations && len >= 0.001 {
                    let cand = (best.0 - len * gx / norm, best.1 - len * gy / norm);
                    if let Some(v) = eval(cand) {
                        if v < best_val {
                            best = cand;
                            history.push(v);
                            break;
                        }
                    }
                    len *= 0.5;
                }
            }
        }

        // Realize nominal and optimum at full resolution; keep the better.
        let nominal_profile = make(nominal.0, nominal.1).expect("checked above");
        let realized_nominal = self.simulate(spec, &path, &nominal_profile, soc0, t0, cfg.dt, true)?;
        plan.nominal_objective = realized_nominal.objective;
        let (profile, realized) = if best != nominal {
            let profile = make(best.0, best.1).expect("evaluated feasible");
            let r = self.simulate(spec, &path, &profile, soc0, t0, cfg.dt, true)?;
            if r.objective <= realized_nominal.objective {
                (profile, r)
            } else {
                (nominal_profile, realized_nominal)
            }
        } else {
            (nominal_profile, realized_nominal)
        };
        let end = realized.samples.last().map(|s| s.state.position());
        plan.terminal_error = end.map_or(0.0, |p| p.distance(spec.end.position()));
        plan.duration = duration;
        plan.profile = Some(profile);
        plan.costs = realized.costs;
        plan.objective = realized.objective;
        plan.search_history = history;
        plan.samples = realized.samples;
        Ok(plan)
    }

    /// Replans phase `index` of `route` with its duration scaled by `factor`,
    /// then replays every later phase from the shifted start time. Geometry,
    /// order and waypoints are untouched.
    pub fn retime(
        &self,
        route: &RouteTrajectory,
        index: usize,
        factor: f64,
    ) -> core::result::Result<RouteTrajectory, Box<crate::physics::SimulationFault>> {
        self.replay_after(route, index, self.retime_phase(route, index, factor)?)
    }

    /// `route` with segment `index` replaced by `replanned` and every later
    /// phase re-simulated from the new end time and battery state.
    pub fn replay_after(
        &self,
        route: &RouteTrajectory,
        index: usize,
        replanned: SegmentPlan,
    ) -> core::result::Result<RouteTrajectory, Box<crate::physics::SimulationFault>> {
        let soc0 = replanned.samples.first().map_or(self.battery.soc_max, |s| s.state.soc);
        let mut out = RouteTrajectory {
            segments: route.segments[..index].to_vec(),
            ..Default::default()
        };
        let mut t = replanned.end_time();
        let mut soc = replanned.samples.last().map_or(soc0, |s| s.state.soc);
        out.segments.push(replanned);
        for later in &route.segments[index + 1..] {
            let moved = self.replay_phase(later, soc, t)?;
            t = moved.end_time();
            soc = moved.samples.last().map_or(soc, |s| s.state.soc);
            out.segments.push(moved);
        }
        out.recompute_totals();
        Ok(out)
    }

    /// Like [`Self::retime`] but later phases are only shifted in time, with
    /// their costs and battery trace left as planned. Positions match the
    /// full retime exactly; energies are approximate.
    pub fn retime_shifted(
        &self,
        route: &RouteTrajectory,
        index: usize,
        factor: f64,
    ) -> core::result::Result<RouteTrajectory, Box<crate::physics::SimulationFault>> {
        Ok(splice_shifted(route, index, self.retime_phase(route, index, factor)?))
    }

    /// Phase `index` of `route` replanned with its duration scaled by
    /// `factor`, from the same start time and battery state.
    pub fn retime_phase(
        &self,
        route: &RouteTrajectory,
        index: usize,
        factor: f64,
    ) -> core::result::Result<SegmentPlan, Box<crate::physics::SimulationFault>> {
        let seg = &route.segments[index];
        let soc0 = seg.samples.first().map_or(self.battery.soc_max, |s| s.state.soc);
        let mut replanned =
            self.plan_phase_with_duration(&seg.spec, seg.path, seg.duration * factor, soc0, seg.start_time)?;
        replanned.index = seg.index;
        replanned.kind = seg.kind;
        replanned.task = seg.task;
        Ok(replanned)
    }

    /// Re-simulates a phase with its existing profile from a new start time
    /// and battery state.
    pub fn replay_phase(
        &self,
        plan: &SegmentPlan,
        soc0: f64,
        t0: f64,
    ) -> core::result::Result<SegmentPlan, Box<crate::physics::SimulationFault>> {
        let mut out = plan.clone();
        out.start_time = t0;
        match plan.profile {
            None => {
                for s in &mut out.samples {
                    s.t = t0;
                    s.power.t = t0;
                    s.state.soc = soc0;
                }
            }
            Some(profile) => {
                let r = self.simulate(&plan.spec, &plan.path, &profile, soc0, t0, self.config.dt, true)?;
                out.costs = r.costs;
                out.objective = r.objective;
                out.samples = r.samples;
            }
        }
        Ok(out)
    }
}

/// `route` with segment `index` replaced by `replanned` and every later
/// segment shifted in time by the change in its end time.
pub fn splice_shifted(route: &RouteTrajectory, index: usize, replanned: SegmentPlan) -> RouteTrajectory {
    let shift = replanned.end_time() - route.segments[index].end_time();
    let mut out = RouteTrajectory {
        segments: route.segments[..index].to_vec(),
        ..Default::default()
    };
    out.segments.push(replanned);
    for later in &route.segments[index + 1..] {
        let mut moved = later.clone();
        moved.start_time += shift;
        for s in &mut moved.samples {
            s.t += shift;
            s.power.t += shift;
        }
        out.segments.push(moved);
    }
    out.recompute_totals();
    out
}

fn path_admissible(path: &DubinsPath, ws: &Workspace) -> bool {
    let len = path.length();
    let n = (len / 0.05) as usize + 1;
    (0..=n).all(|k| ws.is_admissible(path.sample(len * k as f64 / n as f64).position()))
}

/// Waypoint headings for a route under the given rule. The start (depot)
/// faces heading 0; a route that returns to the depot also ends at heading 0.
pub fn waypoint_headings(points: &[Point], returns_to_depot: bool, rule: HeadingRule) -> Vec<f64> {
    let n = points.len();
    let mut out = alloc::vec![0.0; n];
    if n <= 1 {
        return out;
    }
    // Bearing of each leg, inheriting the previous one across zero-length legs.
    let mut legs = Vec::with_capacity(n - 1);
    let mut last = 0.0;
    for w in points.windows(2) {
        if w[0].distance(w[1]) > 1e-12 {
            last = w[0].bearing_to(w[1]);
        }
        legs.push(last);
    }
    for i in 1..n {
        let arrive = legs[i - 1];
        out[i] = if i + 1 < n {
            let depart = legs[i];
            match rule {
                HeadingRule::TowardNext => depart,
                HeadingRule::Bisector => arrive + 0.5 * math::wrap_pi(depart - arrive),
            }
        } else {
            arrive
        };
    }
    if returns_to_depot {
        out[n - 1] = 0.0;
    }
    // Zero-length legs keep the heading they arrived with.
    for i in 1..n {
        if points[i - 1].distance(points[i]) <= 1e-12 {
            out[i] = out[i - 1];
        }
    }
    out
}

/// Plans and optimizes the full route of `robot` through `sequence`.
pub fn optimize_route(
    robot: &Robot,
    sequence: &[&Task],
    field: &FrictionField,
    weights: &CostWeights,
    workspace: Option<&Workspace>,
    config: &PlannerConfig,
) -> core::result::Result<RouteTrajectory, RouteFailure> {
    let start = Pose::at(robot.depot, 0.0);
    optimize_route_from(robot, start, robot.battery.soc_max, 0.0, sequence, field, weights, workspace, config)
}

/// As [`optimize_route`] from an arbitrary resting pose, battery state and
/// start time. With depot return configured the route ends at the depot,
/// even when `sequence` is empty but the start is elsewhere.
#[allow(clippy::too_many_arguments)]
pub fn optimize_route_from(
    robot: &Robot,
    start: Pose,
    soc0: f64,
    t0: f64,
    sequence: &[&Task],
    field: &FrictionField,
    weights: &CostWeights,
    workspace: Option<&Workspace>,
    config: &PlannerConfig,
) -> core::result::Result<RouteTrajectory, RouteFailure> {
    let ctx = PhaseContext {
        params: &robot.params,
        battery: &robot.battery,
        field,
        weights,
        workspace,
        config,
    };
    build_route(robot, start, soc0, t0, sequence, &ctx, |spec, soc, t| ctx.plan_phase(spec, soc, t))
}

/// Shared route skeleton: waypoints, headings and one call of `phase` per
/// leg, chaining time and battery state.
#[allow(clippy::too_many_arguments)]
fn build_route<F>(
    robot: &Robot,
    start: Pose,
    soc0: f64,
    t0: f64,
    sequence: &[&Task],
    ctx: &PhaseContext,
    mut phase: F,
) -> core::result::Result<RouteTrajectory, RouteFailure>
where
    F: FnMut(&PhaseSpec, f64, f64) -> core::result::Result<SegmentPlan, Box<crate::physics::SimulationFault>>,
{
    let (config, workspace) = (ctx.config, ctx.workspace);
    config.validate()?;
    ctx.weights.validate()?;
    let mut waypoints = waypoint_list(start.position(), sequence, false);
    let away = start.position().distance(robot.depot) > 1e-9;
    let returns = config.return_to_depot && (!sequence.is_empty() || away);
    if returns {
        waypoints.push(crate::model::Waypoint {
            point: robot.depot,
            entering: Some(PhaseKind::Unloaded),
            payload: 0.0,
            task: None,
        });
    }
    if let Some(ws) = workspace {
        for (index, w) in waypoints.iter().enumerate() {
            if !ws.contains(w.point) {
                return Err(Error::InfeasibleWaypoint {
                    index,
                    x: w.point.x,
                    y: w.point.y,
                    reason: "outside the workspace",
                }
                .into());
            }
            if ws.keepout_value(w.point) != 0.0 {
                return Err(Error::InfeasibleWaypoint {
                    index,
                    x: w.point.x,
                    y: w.point.y,
                    reason: "inside a keep-out region",
                }
                .into());
            }
        }
    }
    let points: Vec<Point> = waypoints.iter().map(|w| w.point).collect();
    let mut headings = waypoint_headings(&points, returns, config.heading_rule);
    headings[0] = start.heading;

    let mut route = RouteTrajectory::default();
    let mut soc = soc0;
    let mut t = t0;
    for i in 1..waypoints.len() {
        let spec = PhaseSpec {
            start: Pose::at(points[i - 1], headings[i - 1]),
            end: Pose::at(points[i], headings[i]),
            payload: waypoints[i].payload,
            v0: 0.0,
            vf: 0.0,
        };
        match phase(&spec, soc, t) {
            Ok(mut plan) => {
                plan.index = i - 1;
                plan.kind = waypoints[i].entering.unwrap_or(PhaseKind::Unloaded);
                plan.task = waypoints[i].task;
                if let Some(last) = plan.samples.last() {
                    soc = last.state.soc;
                }
                t = plan.end_time();
                route.segments.push(plan);
            }
            Err(fault) => {
                let error = match fault.error {
                    Error::InfeasibleWaypoint { x, y, reason, .. } => Error::InfeasibleWaypoint {
                        index: i,
                        x,
                        y,
                        reason,
                    },
                    other => other,
                };
                route.recompute_totals();
                return Err(RouteFailure {
                    error,
                    partial: Some(Box::new(route)),
                });
            }
        }
    }
    route.recompute_totals();
    Ok(route)
}

/// Optimized cost of moving from `a` to `b` in a straight line with the given
/// payload and boundary speeds.
#[allow(clippy::too_many_arguments)]
pub fn ordered_pair_cost(
    a: Point,
    b: Point,
    payload: f64,
    v_minus: f64,
    v_plus: f64,
    params: &RobotParams,
    battery: &BatteryParams,
    field: &FrictionField,
    weights: &CostWeights,
    config: &PlannerConfig,
) -> Result<f64> {
    let within = |v: f64| (0.0..=params.v_max).contains(&v);
    if !within(v_minus) || !within(v_plus) {
        return Err(Error::invalid("boundary speed", "must lie in [0, v_max]"));
    }
    if a.distance(b) == 0.0 {
        return if v_minus == v_plus {
            Ok(0.0)
        } else {
            Err(Error::invalid("boundary speed", "cannot change speed over zero distance"))
        };
    }
    let heading = a.bearing_to(b);
    let ctx = PhaseContext {
        params,
        battery,
        field,
        weights,
        workspace: None,
        config,
    };
    let spec = PhaseSpec {
        start: Pose::at(a, heading),
        end: Pose::at(b, heading),
        payload,
        v0: v_minus,
        vf: v_plus,
    };
    ctx.plan_phase(&spec, battery.soc_max, 0.0)
        .map(|p| p.objective)
        .map_err(|f| f.error)
}

/// Bid of one robot for one task under the trajectory oracle: unloaded leg
/// plus loaded leg, each rest to rest.
pub fn oracle_bid(
    robot_end: Point,
    task: &Task,
    robot: &Robot,
    field: &FrictionField,
    weights: &CostWeights,
    config: &PlannerConfig,
) -> Result<f64> {
    let p = &robot.params;
    let b = &robot.battery;
    Ok(
        ordered_pair_cost(robot_end, task.pickup, 0.0, 0.0, 0.0, p, b, field, weights, config)?
            + ordered_pair_cost(
                task.pickup,
                task.dropoff,
                task.payload,
                0.0,
                0.0,
                p,
                b,
                field,
                weights,
                config,
            )?,
    )
}

/// [`crate::energy::LegCost`] backed by the trajectory oracle.
pub struct OracleLegCost<'a> {
    pub robot: &'a Robot,
    pub field: &'a FrictionField,
    pub weights: &'a CostWeights,
    pub config: &'a PlannerConfig,
}

impl crate::energy::LegCost for OracleLegCost<'_> {
    fn leg(&mut self, from: Point, to: Point, payload: f64, v0: f64, vf: f64) -> Result<f64> {
        ordered_pair_cost(
            from,
            to,
            payload,
            v0,
            vf,
            &self.robot.params,
            &self.robot.battery,
            self.field,
            self.weights,
            self.config,
        )
    }
}

/// Straight-leg executor with a fixed acceleration ramp up to `cruise`, a
/// hold, and a friction-brake stop without energy recovery. The robot is
/// assumed to face the leg before it starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantVelocityExecutor {
    pub cruise: f64,
    /// Ramp acceleration magnitude, m/s².
    pub accel: f64,
    pub dt: f64,
    pub speed_gain: f64,
}

impl ConstantVelocityExecutor {
    pub fn new(cruise: f64) -> Self {
        Self {
            cruise,
            accel: 1.0,
            dt: DEFAULT_DT,
            speed_gain: PlannerConfig::default().speed_gain,
        }
    }

    /// Profile covering `length`; legs too short to reach cruise become
    /// triangular.
    pub fn profile(&self, length: f64) -> SpeedProfile {
        let peak = self.cruise.min(math::sqrt(length * self.accel));
        let ramp = peak / self.accel;
        let duration = if peak > 0.0 { length / peak + ramp } else { 0.0 };
        SpeedProfile {
            v0: 0.0,
            vf: 0.0,
            cruise: peak,
            ramp_up: ramp,
            ramp_down: ramp,
            duration,
        }
    }

    /// Simulates one straight leg from rest to rest and returns the
    /// trajectory, starting the clock at `t0`.
    #[allow(clippy::too_many_arguments)]
    pub fn run_leg(
        &self,
        robot: &Robot,
        from: Point,
        to: Point,
        payload: f64,
        soc0: f64,
        field: &FrictionField,
        t0: f64,
    ) -> core::result::Result<crate::physics::Trajectory, Box<crate::physics::SimulationFault>> {
        let length = from.distance(to);
        let heading = if length > 0.0 { from.bearing_to(to) } else { 0.0 };
        let state0 = RobotState {
            x: from.x,
            y: from.y,
            heading,
            speed: 0.0,
            soc: soc0,
        };
        if length == 0.0 {
            return Ok(crate::physics::Trajectory::default());
        }
        let path = DubinsPath::shortest(Pose::at(from, heading), Pose::at(to, heading), robot.params.turn_radius());
        let profile = self.profile(length);
        let ctrl = PhaseController {
            profile,
            path: &path,
            params: &robot.params,
            field,
            payload,
            gain: self.speed_gain,
            regen: false,
        };
        let plant = Plant {
            params: &robot.params,
            battery: &robot.battery,
            field,
            payload,
        };
        let mut traj = plant.integrate(state0, &ctrl, (0.0, profile.duration), self.dt)?;
        for s in &mut traj.samples {
            s.t += t0;
            s.power.t += t0;
        }
        Ok(traj)
    }

    /// Drives `sequence` along the same Dubins waypoint paths the optimizer
    /// would use, but with this executor's ramp-cruise-brake profile on
    /// every phase and no energy recovery.
    #[allow(clippy::too_many_arguments)]
    pub fn run_route(
        &self,
        robot: &Robot,
        sequence: &[&Task],
        field: &FrictionField,
        weights: &CostWeights,
        workspace: Option<&Workspace>,
        config: &PlannerConfig,
    ) -> core::result::Result<RouteTrajectory, RouteFailure> {
        let ctx = PhaseContext {
            params: &robot.params,
            battery: &robot.battery,
            field,
            weights,
            workspace,
            config,
        };
        let start = Pose::at(robot.depot, 0.0);
        build_route(robot, start, robot.battery.soc_max, 0.0, sequence, &ctx, |spec, soc, t| {
            let path = ctx.plan_path(spec).map_err(|error| {
                Box::new(crate::physics::SimulationFault {
                    error,
                    partial: Default::default(),
                })
            })?;
            if path.length() <= 0.0 {
                return ctx.plan_phase(spec, soc, t);
            }
            let profile = self.profile(path.length());
            let r = ctx.simulate(spec, &path, &profile, soc, t, self.dt, false)?;
            let end = r.samples.last().map(|s| s.state.position());
            Ok(SegmentPlan {
                index: 0,
                kind: if spec.payload > 0.0 { PhaseKind::Loaded } else { PhaseKind::Unloaded },
                task: None,
                spec: *spec,
                path,
                start_time: t,
                duration: profile.duration,
                profile: Some(profile),
                costs: r.costs,
                objective: r.objective,
                nominal_objective: r.objective,
                search_history: Vec::new(),
                terminal_error: end.map_or(0.0, |p| p.distance(spec.end.position())),
                samples: r.samples,
            })
        })
    }
}
