//! Seeded scenario generation: station layouts, task sets, friction fields
//! and disruption streams.
//!
//! Every generator is a pure function of its arguments and a `u64` seed.
//! Independent components of one scenario draw from separate ChaCha streams
//! of the same seed, so changing the task count does not move the stations.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::collision::DEFAULT_D_SAFE;
use crate::energy::{bid_energy_zoned, FrictionField, FrictionZone};
use crate::geometry::{Point, Rect};
use crate::model::{CostWeights, LayoutKind, Robot, RobotId, RobotParams, Task, Workspace};
use crate::reschedule::{DisruptionEvent, TriggerConfig};
use crate::trajectory::PlannerConfig;
use crate::{math, stats, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Minimum distance between a station and the workspace walls, m. Leaves room
/// for the turning loops of the Dubins paths that start or end there.
pub const STATION_MARGIN: f64 = 2.0;

/// Stations closer than this are redrawn (random and clustered layouts).
pub const MIN_STATION_SPACING: f64 = 0.5;

/// Standard deviation of a manufacturing cell, m.
pub const CELL_SIGMA: f64 = 1.5;

const MAX_REDRAWS: usize = 10_000;

#[derive(Clone, Copy)]
enum Stream {
    Layout = 1,
    Tasks = 2,
    Friction = 3,
    Depots = 4,
    Disruptions = 5,
    Correlation = 6,
}

fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Station positions for a layout.
///
/// * `Grid`: the first `station_count` cell centres, row-major, of the
///   smallest near-square lattice with enough cells, centred in the
///   workspace.
/// * `Random`: uniform inside the wall margin.
/// * `Clustered`: 3 to 5 Gaussian cells; stations are dealt to the cells in
///   turn and redrawn until they fall inside the wall margin.
pub fn generate_layout(kind: LayoutKind, workspace: &Workspace, station_count: usize, seed: u64) -> Result<Vec<Point>> {
    workspace.validate()?;
    if station_count < 2 {
        return Err(Error::invalid("station_count", "need at least 2 stations"));
    }
    let (w, h) = (workspace.width, workspace.height);
    if kind != LayoutKind::Grid && (w <= 2.0 * STATION_MARGIN || h <= 2.0 * STATION_MARGIN) {
        return Err(Error::invalid("workspace", "too small for the station wall margin"));
    }
    let mut r = rng(seed, Stream::Layout);
    let inner = Rect::new(STATION_MARGIN, STATION_MARGIN, w - STATION_MARGIN, h - STATION_MARGIN);
    let spaced = |pts: &[Point], p: Point| pts.iter().all(|q| q.distance(p) >= MIN_STATION_SPACING);
    let mut pts = Vec::with_capacity(station_count);
    match kind {
        LayoutKind::Grid => {
            let cols = math::ceil(math::sqrt(station_count as f64)) as usize;
            let rows = station_count.div_ceil(cols);
            for j in 0..rows {
                for i in 0..cols {
                    if pts.len() < station_count {
                        pts.push(Point::new(
                            (i as f64 + 0.5) * w / cols as f64,
                            (j as f64 + 0.5) * h / rows as f64,
                        ));
                    }
                }
            }
        }
        LayoutKind::Random => {
            let mut redraws = 0;
            while pts.len() < station_count {
                let p = Point::new(
                    r.random_range(inner.min.x..=inner.max.x),
                    r.random_range(inner.min.y..=inner.max.y),
                );
                if spaced(&pts, p) || redraws >= MAX_REDRAWS {
                    pts.push(p);
                } else {
                    redraws += 1;
                }
            }
        }
        LayoutKind::Clustered => {
            let cells = r.random_range(3..=5usize);
            let pad = STATION_MARGIN + CELL_SIGMA;
            let centres: Vec<Point> = (0..cells)
                .map(|_| {
                    Point::new(
                        uniform(&mut r, pad.min(w / 2.0), (w - pad).max(w / 2.0)),
                        uniform(&mut r, pad.min(h / 2.0), (h - pad).max(h / 2.0)),
                    )
                })
                .collect();
            let normal = Normal::new(0.0, CELL_SIGMA).map_err(|_| Error::invalid("sigma", "bad cell spread"))?;
            let mut redraws = 0;
            while pts.len() < station_count {
                let c = centres[pts.len() % cells];
                let p = Point::new(c.x + normal.sample(&mut r), c.y + normal.sample(&mut r));
                let inside = inner.contains(p);
                if inside && (spaced(&pts, p) || redraws >= MAX_REDRAWS) {
                    pts.push(p);
                } else {
                    redraws += 1;
                }
            }
        }
    }
    Ok(pts)
}

/// `m` tasks between distinct stations with payload uniform in
/// `payload_range`. Ids run from `first_id`.
pub fn generate_tasks(stations: &[Point], m: usize, payload_range: (f64, f64), first_id: u32, seed: u64) -> Result<Vec<Task>> {
    let mut r = rng(seed, Stream::Tasks);
    draw_tasks(&mut r, stations, m, payload_range, first_id)
}

fn draw_tasks(r: &mut ChaCha8Rng, stations: &[Point], m: usize, payload: (f64, f64), first_id: u32) -> Result<Vec<Task>> {
    if stations.len() < 2 {
        return Err(Error::invalid("stations", "need at least 2 stations"));
    }
    if !(payload.0 >= 0.0 && payload.1 >= payload.0) {
        return Err(Error::invalid("payload_range", "need 0 ≤ lo ≤ hi"));
    }
    Ok((0..m)
        .map(|k| {
            let a = r.random_range(0..stations.len());
            let mut b = r.random_range(0..stations.len() - 1);
            if b >= a {
                b += 1;
            }
            let w = uniform(r, payload.0, payload.1);
            Task::new(first_id + k as u32, stations[a], stations[b], w)
        })
        .collect())
}

/// `k × k` zones tiling the workspace, each with μ uniform in `mu_range`. A
/// degenerate range gives a uniform field.
pub fn generate_friction_field(workspace: &Workspace, mu_range: (f64, f64), k: usize, seed: u64) -> Result<FrictionField> {
    let (lo, hi) = mu_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::invalid("mu_range", "need 0 < lo ≤ hi"));
    }
    if lo == hi {
        return Ok(FrictionField::uniform(lo));
    }
    if k == 0 {
        return Err(Error::invalid("zone_grid", "must be ≥ 1"));
    }
    let mut r = rng(seed, Stream::Friction);
    let (dx, dy) = (workspace.width / k as f64, workspace.height / k as f64);
    let mut zones = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            let x1 = if i + 1 == k { workspace.width } else { (i + 1) as f64 * dx };
            let y1 = if j + 1 == k { workspace.height } else { (j + 1) as f64 * dy };
            zones.push(FrictionZone {
                rect: Rect::new(i as f64 * dx, j as f64 * dy, x1, y1),
                mu: r.random_range(lo..=hi),
            });
        }
    }
    Ok(FrictionField::zoned(zones, lo))
}

/// Pearson correlation between the field-aware closed-form bid energy and
/// the summed leg distance over sampled (robot position, task) pairs, with
/// robot positions drawn from the stations.
pub fn energy_distance_correlation(
    stations: &[Point],
    tasks: &[Task],
    params: &RobotParams,
    field: &FrictionField,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    if sample_count < 2 || stations.is_empty() || tasks.is_empty() {
        return Err(Error::invalid("samples", "need ≥ 2 samples, a station and a task"));
    }
    let mut r = rng(seed, Stream::Correlation);
    let (mut e, mut d) = (Vec::with_capacity(sample_count), Vec::with_capacity(sample_count));
    for _ in 0..sample_count {
        let p = stations[r.random_range(0..stations.len())];
        let t = &tasks[r.random_range(0..tasks.len())];
        e.push(bid_energy_zoned(p, t, params, field));
        d.push(p.distance(t.pickup) + t.loaded_length());
    }
    stats::pearson(&e, &d)
}

/// Arrival rates of the scripted disruption stream, events per second over
/// the whole fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisruptionRates {
    pub fault_rate: f64,
    pub priority_rate: f64,
    pub deviation_rate: f64,
    /// Friction multiplier range of a deviation event.
    pub deviation_factor: (f64, f64),
}

impl Default for DisruptionRates {
    fn default() -> Self {
        Self {
            fault_rate: 0.01,
            priority_rate: 0.02,
            deviation_rate: 0.02,
            deviation_factor: (1.3, 1.8),
        }
    }
}

/// Poisson arrivals on `[0, horizon)` for each event kind, merged by time.
/// Each robot faults at most once and at least one robot never faults.
/// Priority tasks get ids from `first_task_id` on.
#[allow(clippy::too_many_arguments)]
pub fn generate_disruptions(
    rates: &DisruptionRates,
    robots: &[RobotId],
    stations: &[Point],
    payload_range: (f64, f64),
    horizon: f64,
    first_task_id: u32,
    seed: u64,
) -> Result<Vec<DisruptionEvent>> {
    let mut r = rng(seed, Stream::Disruptions);
    let arrivals = |rate: f64, r: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        if rate <= 0.0 || horizon <= 0.0 {
            return Ok(Vec::new());
        }
        let exp = Exp::new(rate).map_err(|_| Error::invalid("rate", "must be finite and > 0"))?;
        let mut ts = Vec::new();
        let mut t = exp.sample(r);
        while t < horizon {
            ts.push(t);
            t += exp.sample(r);
        }
        Ok(ts)
    };
    let mut events = Vec::new();
    let mut candidates: Vec<RobotId> = robots.to_vec();
    candidates.shuffle(&mut r);
    let fault_times = arrivals(rates.fault_rate, &mut r)?;
    for (t, robot) in fault_times.iter().zip(candidates.iter().skip(1)) {
        events.push(DisruptionEvent::fault(*t, *robot));
    }
    let priority_times = arrivals(rates.priority_rate, &mut r)?;
    let tasks = draw_tasks(&mut r, stations, priority_times.len(), payload_range, first_task_id)?;
    for (t, task) in priority_times.iter().zip(tasks) {
        events.push(DisruptionEvent::priority(*t, task));
    }
    if !robots.is_empty() {
        for t in arrivals(rates.deviation_rate, &mut r)? {
            let robot = robots[r.random_range(0..robots.len())];
            let (lo, hi) = rates.deviation_factor;
            events.push(DisruptionEvent::deviation(t, robot, uniform(&mut r, lo, hi)));
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.kind.cmp(&b.kind)));
    Ok(events)
}

/// Everything needed to generate a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub robots: usize,
    pub tasks: usize,
    pub width: f64,
    pub height: f64,
    pub layout: LayoutKind,
    /// Defaults to `max(16, robots + 4)`.
    pub station_count: Option<usize>,
    pub payload_range: (f64, f64),
    pub mu_range: (f64, f64),
    pub zone_grid: usize,
    pub return_to_depot: bool,
    pub disruptions: Option<DisruptionRates>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            robots: 4,
            tasks: 20,
            width: 20.0,
            height: 20.0,
            layout: LayoutKind::Grid,
            station_count: None,
            payload_range: (0.0, 20.0),
            mu_range: (0.02, 0.02),
            zone_grid: 4,
            return_to_depot: true,
            disruptions: None,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn station_count(&self) -> usize {
        self.station_count.unwrap_or((self.robots + 4).max(16))
    }
}

/// The complete input of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub seed: u64,
    pub workspace: Workspace,
    /// How the stations were laid out, when generated.
    #[serde(default)]
    pub layout: Option<LayoutKind>,
    #[serde(default)]
    pub stations: Vec<Point>,
    pub robots: Vec<Robot>,
    pub tasks: Vec<Task>,
    pub friction: FrictionField,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub trigger: TriggerConfig,
    #[serde(default = "default_d_safe")]
    pub d_safe: f64,
    #[serde(default)]
    pub disruptions: Vec<DisruptionEvent>,
}

fn default_d_safe() -> f64 {
    DEFAULT_D_SAFE
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid("schema_version", "unsupported version"));
        }
        self.workspace.validate()?;
        self.friction.validate(Some(self.workspace.bounds()))?;
        self.weights.validate()?;
        self.planner.validate()?;
        self.trigger.validate()?;
        if !(self.d_safe > 0.0) {
            return Err(Error::invalid("d_safe", "must be > 0"));
        }
        let mut robot_ids: Vec<RobotId> = self.robots.iter().map(|r| r.id).collect();
        robot_ids.sort();
        robot_ids.dedup();
        if robot_ids.len() != self.robots.len() {
            return Err(Error::invalid("robots", "duplicate robot id"));
        }
        for r in &self.robots {
            r.validate()?;
            if !self.workspace.is_admissible(r.depot) {
                return Err(Error::invalid("depot", "outside the admissible workspace"));
            }
        }
        let w_max = self.robots.iter().map(|r| r.params.payload_max).fold(f64::INFINITY, f64::min);
        let mut ids: Vec<_> = self.tasks.iter().map(|t| t.id).collect();
        for e in &self.disruptions {
            e.validate()?;
            if let Some(t) = &e.task {
                ids.push(t.id);
            }
            if let Some(r) = e.robot {
                if robot_ids.binary_search(&r).is_err() {
                    return Err(Error::UnknownRobot(r));
                }
            }
        }
        let n = ids.len();
        ids.sort();
        ids.dedup();
        if ids.len() != n {
            return Err(Error::invalid("tasks", "duplicate task id"));
        }
        for t in self.tasks.iter().chain(self.disruptions.iter().filter_map(|e| e.task.as_ref())) {
            t.validate(w_max)?;
            if !(self.workspace.is_admissible(t.pickup) && self.workspace.is_admissible(t.dropoff)) {
                return Err(Error::invalid("task", "station outside the admissible workspace"));
            }
        }
        Ok(())
    }

    /// Rough time for the fleet to finish: twice the summed loaded length,
    /// shared over the robots at the planning speed.
    pub fn estimated_makespan(&self) -> f64 {
        let v = self.robots.first().map_or(1.0, |r| self.planner.v_avg(&r.params));
        let work: f64 = self.tasks.iter().map(|t| 2.0 * t.loaded_length()).sum();
        work / (self.robots.len().max(1) as f64 * v)
    }

    /// Next free task id.
    pub fn next_task_id(&self) -> u32 {
        self.tasks
            .iter()
            .chain(self.disruptions.iter().filter_map(|e| e.task.as_ref()))
            .map(|t| t.id.0 + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Builds a scenario. Disruptions, if requested, arrive during the first 80%
/// of the estimated makespan.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let workspace = Workspace::new(spec.width, spec.height, spec.layout)?;
    let count = spec.station_count();
    if count < spec.robots {
        return Err(Error::invalid("station_count", "fewer stations than robot depots"));
    }
    let stations = generate_layout(spec.layout, &workspace, count, spec.seed)?;
    let tasks = generate_tasks(&stations, spec.tasks, spec.payload_range, 0, spec.seed)?;
    let friction = generate_friction_field(&workspace, spec.mu_range, spec.zone_grid, spec.seed)?;
    let mut depots: Vec<usize> = (0..stations.len()).collect();
    depots.shuffle(&mut rng(spec.seed, Stream::Depots));
    let robots: Vec<Robot> = (0..spec.robots).map(|i| Robot::new(i as u32, stations[depots[i]])).collect();
    let planner = PlannerConfig {
        return_to_depot: spec.return_to_depot,
        ..PlannerConfig::default()
    };
    let mut scenario = Scenario {
        schema_version: SCHEMA_VERSION,
        seed: spec.seed,
        workspace,
        layout: Some(spec.layout),
        stations,
        robots,
        tasks,
        friction,
        weights: CostWeights::default(),
        planner,
        trigger: TriggerConfig::default(),
        d_safe: DEFAULT_D_SAFE,
        disruptions: Vec::new(),
    };
    if let Some(rates) = &spec.disruptions {
        let ids: Vec<RobotId> = scenario.robots.iter().map(|r| r.id).collect();
        scenario.disruptions = generate_disruptions(
            rates,
            &ids,
            &scenario.stations,
            spec.payload_range,
            0.8 * scenario.estimated_makespan(),
            spec.tasks as u32,
            spec.seed,
        )?;
    }
    scenario.validate()?;
    Ok(scenario)
}
