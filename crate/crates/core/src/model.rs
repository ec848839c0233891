//! Shared domain types: workspace, robots, tasks, schedules.
//!
//! Parameter records validate on construction through `validate()`; the
//! scenario loader and the generators call it before anything else sees the
//! values.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    #[default]
    Grid,
    Random,
    Clustered,
}

/// Rectangular factory floor with optional keep-out rectangles.
///
/// The keep-out field `h(x, y)` is the indicator of the obstacle union, and a
/// position is admissible when `h_min ≤ h ≤ h_max` with both bounds zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub width: f64,
    pub height: f64,
    pub layout_kind: LayoutKind,
    #[serde(default)]
    pub keepout: Vec<Rect>,
}

impl Workspace {
    pub fn new(width: f64, height: f64, layout_kind: LayoutKind) -> Result<Self> {
        let ws = Self {
            width,
            height,
            layout_kind,
            keepout: Vec::new(),
        };
        ws.validate()?;
        Ok(ws)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::invalid("width", "must be finite and > 0"));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::invalid("height", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.height)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bounds().contains(p)
    }

    pub fn keepout_value(&self, p: Point) -> f64 {
        if self.keepout.iter().any(|r| r.contains(p)) {
            1.0
        } else {
            0.0
        }
    }

    /// Inside the box and outside every keep-out rectangle.
    pub fn is_admissible(&self, p: Point) -> bool {
        self.contains(p) && self.keepout_value(p) == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub pickup: Point,
    pub dropoff: Point,
    /// kg
    pub payload: f64,
    #[serde(default)]
    pub priority: bool,
    #[serde(default)]
    pub arrival_time: f64,
}

impl Task {
    pub fn new(id: u32, pickup: Point, dropoff: Point, payload: f64) -> Self {
        Self {
            id: TaskId(id),
            pickup,
            dropoff,
            payload,
            priority: false,
            arrival_time: 0.0,
        }
    }

    pub fn validate(&self, w_max: f64) -> Result<()> {
        if !self.pickup.is_finite() || !self.dropoff.is_finite() {
            return Err(Error::NonFinite("task coordinates"));
        }
        if !(self.payload >= 0.0 && self.payload <= w_max) {
            return Err(Error::invalid(
                "payload",
                format!("{} outside [0, {w_max}] for {}", self.payload, self.id),
            ));
        }
        Ok(())
    }

    pub fn loaded_length(&self) -> f64 {
        self.pickup.distance(self.dropoff)
    }
}

/// Vehicle, drive-train and limit parameters of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// Chassis mass M, kg.
    pub mass: f64,
    /// Wheelbase L, m.
    pub wheelbase: f64,
    pub wheel_radius: f64,
    /// K_m, V·s/rad (equal to N·m/A).
    pub motor_constant: f64,
    /// R_m, Ω.
    pub motor_resistance: f64,
    /// J_m, kg·m².
    pub motor_inertia: f64,
    pub v_max: f64,
    pub steer_max: f64,
    pub voltage_max: f64,
    pub brake_torque_max: f64,
    /// Drive-train efficiency η.
    pub efficiency: f64,
    /// Fraction η_r of kinetic energy recovered by the closed-form model.
    pub regen_fraction: f64,
    pub payload_max: f64,
}

impl Default for RobotParams {
    /// Nominal AMR: 50 kg, 1.5 m/s, η = 0.85, 20 kg payload. The drive-train
    /// constants describe a 24 V hub-motor platform.
    fn default() -> Self {
        Self {
            mass: 50.0,
            wheelbase: 0.5,
            wheel_radius: 0.1,
            motor_constant: 1.2,
            motor_resistance: 0.2,
            motor_inertia: 0.005,
            v_max: 1.5,
            steer_max: 0.5,
            voltage_max: 24.0,
            brake_torque_max: 30.0,
            efficiency: 0.85,
            regen_fraction: 0.5,
            payload_max: 20.0,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("wheelbase", self.wheelbase),
            ("wheel_radius", self.wheel_radius),
            ("motor_constant", self.motor_constant),
            ("motor_resistance", self.motor_resistance),
            ("motor_inertia", self.motor_inertia),
            ("v_max", self.v_max),
            ("steer_max", self.steer_max),
            ("voltage_max", self.voltage_max),
            ("brake_torque_max", self.brake_torque_max),
            ("efficiency", self.efficiency),
            ("payload_max", self.payload_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be finite and > 0")));
            }
        }
        if self.efficiency > 1.0 {
            return Err(Error::invalid("efficiency", "must be ≤ 1"));
        }
        if !(0.0..=1.0).contains(&self.regen_fraction) {
            return Err(Error::invalid("regen_fraction", "must lie in [0, 1]"));
        }
        if self.steer_max >= core::f64::consts::FRAC_PI_2 {
            return Err(Error::invalid("steer_max", "must be below π/2"));
        }
        Ok(())
    }

    /// Minimum turning radius L / tan(δ_f,max).
    pub fn turn_radius(&self) -> f64 {
        self.wheelbase / math::tan(self.steer_max)
    }
}

/// Open-circuit-voltage curve and capacity of the pack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c: f64,
    /// Capacity Q, A·s.
    pub capacity: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for BatteryParams {
    /// 24 V nominal, 20 Ah pack.
    fn default() -> Self {
        Self {
            a1: 22.0,
            b1: 0.12,
            a2: -2.0,
            b2: -10.0,
            c: 0.5,
            capacity: 72_000.0,
            soc_min: 0.1,
            soc_max: 1.0,
        }
    }
}

impl BatteryParams {
    pub fn ocv(&self, soc: f64) -> f64 {
        self.a1 * math::exp(self.b1 * soc) + self.a2 * math::exp(self.b2 * soc) + self.c * soc * soc
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(Error::invalid("capacity", "must be finite and > 0"));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::invalid(
                "soc bounds",
                "need 0 ≤ soc_min < soc_max ≤ 1",
            ));
        }
        // OCV is a sum of exponentials and a quadratic; a fine sweep suffices.
        for k in 0..=100 {
            let soc = self.soc_min + (self.soc_max - self.soc_min) * f64::from(k) / 100.0;
            let v = self.ocv(soc);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "ocv",
                    format!("OCV({soc:.3}) = {v} is not positive"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub soc: f64,
}

impl RobotState {
    pub fn at_rest(p: Point, heading: f64, soc: f64) -> Self {
        Self {
            x: p.x,
            y: p.y,
            heading,
            speed: 0.0,
            soc,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.heading.is_finite()
            && self.speed.is_finite()
            && self.soc.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Front steering angle δ_f, rad.
    pub steer: f64,
    /// Motor terminal voltage V_m, V.
    pub voltage: f64,
    /// Mechanical brake torque τ_b, N·m.
    pub brake: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        steer: 0.0,
        voltage: 0.0,
        brake: 0.0,
    };

    pub fn within_bounds(&self, params: &RobotParams) -> bool {
        let tol = 1e-9;
        self.steer.abs() <= params.steer_max + tol
            && self.voltage >= -tol
            && self.voltage <= params.voltage_max + tol
            && self.brake >= -tol
            && self.brake <= params.brake_torque_max + tol
    }

    pub fn clamped(self, params: &RobotParams) -> Self {
        Self {
            steer: self.steer.clamp(-params.steer_max, params.steer_max),
            voltage: self.voltage.clamp(0.0, params.voltage_max),
            brake: self.brake.clamp(0.0, params.brake_torque_max),
        }
    }
}

/// Weights of the single-robot objective and of the fleet-level terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Battery power weight.
    pub w1: f64,
    /// SOC-tracking weight on `(soc_max − soc)²`.
    pub w2: f64,
    /// Yaw-rate weight on `ψ̇²`.
    pub w3: f64,
    /// Collision penalty weight λ_c.
    pub lambda_c: f64,
    /// Pending-task bookkeeping weight ρ, J per task.
    pub rho: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 0.0,
            w3: 0.01,
            lambda_c: 100.0,
            rho: 10.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("lambda_c", self.lambda_c),
            ("rho", self.rho),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and ≥ 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub id: RobotId,
    pub depot: Point,
    pub params: RobotParams,
    pub battery: BatteryParams,
}

impl Robot {
    pub fn new(id: u32, depot: Point) -> Self {
        Self {
            id: RobotId(id),
            depot,
            params: RobotParams::default(),
            battery: BatteryParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.depot.is_finite() {
            return Err(Error::NonFinite("depot"));
        }
        self.params.validate()?;
        self.battery.validate()
    }
}

/// Per-robot ordered task sequences σ_i.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub sequences: BTreeMap<RobotId, Vec<TaskId>>,
    pub predicted_energy: BTreeMap<RobotId, f64>,
    /// Index of the first task in each sequence that has not been started.
    pub cursor: BTreeMap<RobotId, usize>,
}

impl Schedule {
    pub fn new<I: IntoIterator<Item = RobotId>>(robots: I) -> Self {
        let mut s = Schedule::default();
        for r in robots {
            s.sequences.insert(r, Vec::new());
            s.predicted_energy.insert(r, 0.0);
            s.cursor.insert(r, 0);
        }
        s
    }

    pub fn sequence(&self, robot: RobotId) -> &[TaskId] {
        self.sequences.get(&robot).map_or(&[], Vec::as_slice)
    }

    pub fn push(&mut self, robot: RobotId, task: TaskId) {
        self.sequences.entry(robot).or_default().push(task);
        self.cursor.entry(robot).or_insert(0);
    }

    pub fn cursor(&self, robot: RobotId) -> usize {
        self.cursor.get(&robot).copied().unwrap_or(0)
    }

    pub fn unstarted(&self, robot: RobotId) -> &[TaskId] {
        let seq = self.sequence(robot);
        &seq[self.cursor(robot).min(seq.len())..]
    }

    pub fn started(&self, robot: RobotId) -> &[TaskId] {
        let seq = self.sequence(robot);
        &seq[..self.cursor(robot).min(seq.len())]
    }

    pub fn owner_of(&self, task: TaskId) -> Option<RobotId> {
        self.sequences
            .iter()
            .find(|(_, seq)| seq.contains(&task))
            .map(|(r, _)| *r)
    }

    pub fn task_count(&self) -> usize {
        self.sequences.values().map(Vec::len).sum()
    }

    pub fn all_tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.sequences.values().flat_map(|s| s.iter().copied())
    }

    pub fn cursors_valid(&self) -> bool {
        self.sequences
            .iter()
            .all(|(r, seq)| self.cursor(*r) <= seq.len())
    }
}

/// True iff every task in `tasks` appears exactly once across all sequences
/// and no sequence references anything else.
pub fn validate_partition(schedule: &Schedule, tasks: &[TaskId]) -> bool {
    let universe: BTreeSet<TaskId> = tasks.iter().copied().collect();
    let mut seen = BTreeSet::new();
    for t in schedule.all_tasks() {
        if !universe.contains(&t) || !seen.insert(t) {
            return false;
        }
    }
    seen.len() == universe.len() && schedule.cursors_valid()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Unloaded,
    Loaded,
}

/// One boundary point of the multiphase route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub point: Point,
    /// Kind of the phase that ends here; `None` for the starting depot.
    pub entering: Option<PhaseKind>,
    /// Payload carried during the entering phase.
    pub payload: f64,
    pub task: Option<TaskId>,
}

/// Depot, then pickup/dropoff for each task in order, then optionally the
/// depot again.
pub fn waypoint_list(depot: Point, sequence: &[&Task], return_to_depot: bool) -> Vec<Waypoint> {
    let mut out = Vec::with_capacity(2 * sequence.len() + 2);
    out.push(Waypoint {
        point: depot,
        entering: None,
        payload: 0.0,
        task: None,
    });
    for task in sequence {
        out.push(Waypoint {
            point: task.pickup,
            entering: Some(PhaseKind::Unloaded),
            payload: 0.0,
            task: Some(task.id),
        });
        out.push(Waypoint {
            point: task.dropoff,
            entering: Some(PhaseKind::Loaded),
            payload: task.payload,
            task: Some(task.id),
        });
    }
    if return_to_depot && !sequence.is_empty() {
        out.push(Waypoint {
            point: depot,
            entering: Some(PhaseKind::Unloaded),
            payload: 0.0,
            task: None,
        });
    }
    out
}

/// Looks up tasks by id, preserving the order of `ids`.
pub fn resolve_tasks<'a>(tasks: &'a [Task], ids: &[TaskId]) -> Result<Vec<&'a Task>> {
    ids.iter()
        .map(|id| {
            tasks
                .iter()
                .find(|t| t.id == *id)
                .ok_or(Error::UnknownTask(*id))
        })
        .collect()
}
