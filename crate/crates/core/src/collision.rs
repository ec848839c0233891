//! Pairwise conflict detection and retiming-based refinement.
//!
//! Routes are compared on a common clock sampled every `dt`. A robot only
//! takes part while its route is running: before the first phase starts and
//! after it parks at the end, it contributes no penalty.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::energy::FrictionField;
use crate::geometry::Point;
use crate::model::{CostWeights, Robot, RobotId};
use crate::trajectory::{splice_shifted, PhaseContext, PlannerConfig, RouteTrajectory, SegmentPlan};
use crate::{Error, Result};

pub const DEFAULT_D_SAFE: f64 = 0.5;

/// `max(0, 1 − ‖p_i − p_j‖ / d_safe)²`.
pub fn proximity_penalty(a: Point, b: Point, d_safe: f64) -> f64 {
    let x = 1.0 - a.distance(b) / d_safe;
    if x > 0.0 {
        x * x
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictWindow {
    pub robots: (RobotId, RobotId),
    pub t_start: f64,
    pub t_end: f64,
    pub min_separation: f64,
    /// Time at which `min_separation` occurs.
    pub t_min: f64,
}

/// A robot's route on the shared clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub robot: RobotId,
    pub route: RouteTrajectory,
}

/// Positions of a route on the grid `k·dt`, `None` where the robot is not
/// running.
pub fn resample(route: &RouteTrajectory, dt: f64, steps: usize) -> Vec<Option<Point>> {
    let mut out = alloc::vec![None; steps + 1];
    let samples: Vec<_> = route.samples().collect();
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return out;
    };
    let (t_first, t_last) = (first.t, last.t);
    let mut j = 0;
    for (k, slot) in out.iter_mut().enumerate() {
        let t = k as f64 * dt;
        if t < t_first - 1e-12 || t > t_last + 1e-12 {
            continue;
        }
        while j + 1 < samples.len() && samples[j + 1].t <= t {
            j += 1;
        }
        let a = samples[j];
        *slot = Some(match samples.get(j + 1) {
            Some(b) if b.t > a.t && t > a.t => {
                a.state.position().lerp(b.state.position(), (t - a.t) / (b.t - a.t))
            }
            _ => a.state.position(),
        });
    }
    out
}

fn horizon_steps(tracks: &[Track], dt: f64) -> usize {
    let end = tracks
        .iter()
        .map(|t| t.route.duration())
        .fold(0.0, f64::max);
    crate::math::ceil(end / dt) as usize
}

fn pair_windows(
    ids: (RobotId, RobotId),
    a: &[Option<Point>],
    b: &[Option<Point>],
    d_safe: f64,
    dt: f64,
    out: &mut Vec<ConflictWindow>,
) {
    let mut open: Option<ConflictWindow> = None;
    let mut last_hit = 0usize;
    for (k, (pa, pb)) in a.iter().zip(b).enumerate() {
        let (Some(pa), Some(pb)) = (pa, pb) else { continue };
        let sep = pa.distance(*pb);
        if sep >= d_safe {
            continue;
        }
        let t = k as f64 * dt;
        match open.as_mut() {
            // Windows closer than two steps apart are merged.
            Some(w) if k - last_hit <= 2 => {
                w.t_end = t;
                if sep < w.min_separation {
                    w.min_separation = sep;
                    w.t_min = t;
                }
            }
            _ => {
                if let Some(w) = open.take() {
                    out.push(w);
                }
                open = Some(ConflictWindow {
                    robots: ids,
                    t_start: t,
                    t_end: t,
                    min_separation: sep,
                    t_min: t,
                });
            }
        }
        last_hit = k;
    }
    out.extend(open);
}

/// All maximal windows in which some pair is closer than `d_safe`, ordered by
/// start time, then robot pair.
pub fn detect_conflicts(tracks: &[Track], d_safe: f64, dt: f64) -> Result<Vec<ConflictWindow>> {
    if !(d_safe > 0.0 && dt > 0.0) {
        return Err(Error::invalid("d_safe/dt", "must be > 0"));
    }
    let steps = horizon_steps(tracks, dt);
    let grids: Vec<_> = tracks.iter().map(|t| resample(&t.route, dt, steps)).collect();
    let mut out = Vec::new();
    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            pair_windows(
                (tracks[i].robot, tracks[j].robot),
                &grids[i],
                &grids[j],
                d_safe,
                dt,
                &mut out,
            );
        }
    }
    out.sort_by(|a, b| {
        a.t_start
            .total_cmp(&b.t_start)
            .then(a.robots.cmp(&b.robots))
    });
    Ok(out)
}

fn pair_penalty(a: &[Option<Point>], b: &[Option<Point>], d_safe: f64, dt: f64) -> f64 {
    a.iter()
        .zip(b)
        .filter_map(|(pa, pb)| Some(proximity_penalty((*pa)?, (*pb)?, d_safe)))
        .sum::<f64>()
        * dt
}

/// `Σ_{i<j} ∫ φ_ij dt` by rectangle rule on the `dt` grid.
pub fn penalty_integral(tracks: &[Track], d_safe: f64, dt: f64) -> f64 {
    let steps = horizon_steps(tracks, dt);
    let grids: Vec<_> = tracks.iter().map(|t| resample(&t.route, dt, steps)).collect();
    let mut total = 0.0;
    for i in 0..grids.len() {
        for j in i + 1..grids.len() {
            total += pair_penalty(&grids[i], &grids[j], d_safe, dt);
        }
    }
    total
}

/// Smallest sampled separation over all running pairs (infinite if none).
pub fn min_separation(tracks: &[Track], dt: f64) -> f64 {
    let steps = horizon_steps(tracks, dt);
    let grids: Vec<_> = tracks.iter().map(|t| resample(&t.route, dt, steps)).collect();
    let mut best = f64::INFINITY;
    for i in 0..grids.len() {
        for j in i + 1..grids.len() {
            for (pa, pb) in grids[i].iter().zip(&grids[j]) {
                if let (Some(pa), Some(pb)) = (pa, pb) {
                    best = best.min(pa.distance(*pb));
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub d_safe: f64,
    pub lambda_c: f64,
    /// Conflict sampling step, s.
    pub dt: f64,
    /// Accepted retimings before giving up.
    pub max_iterations: usize,
    /// Duration multipliers tried on a conflicting phase.
    pub factors: Vec<f64>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            d_safe: DEFAULT_D_SAFE,
            lambda_c: CostWeights::default().lambda_c,
            dt: crate::physics::DEFAULT_DT,
            max_iterations: 20,
            factors: alloc::vec![1.25, 1.5, 2.0, 0.85],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RefineReport {
    pub conflicts_before: usize,
    pub penalty_before: f64,
    pub penalty_after: f64,
    pub min_separation_before: f64,
    pub min_separation_after: f64,
    pub retimings: usize,
    /// Conflicts still present when refinement stopped.
    pub residual: Vec<ConflictWindow>,
}

impl RefineReport {
    pub fn resolved(&self) -> bool {
        self.residual.is_empty()
    }
}

/// Retimes conflicting phases to reduce `Σ objective + λ_c·∫φ dt`.
///
/// Each step tries scaling the duration of the phase each robot of a window
/// is flying (and the one before it) and applies the best candidate that
/// strictly lowers both the penalty integral and the combined cost. Waypoints,
/// order and assignment never change.
pub fn refine(
    tracks: &mut [Track],
    robots: &[Robot],
    field: &FrictionField,
    weights: &CostWeights,
    planner: &PlannerConfig,
    config: &RefineConfig,
) -> Result<RefineReport> {
    if !(config.lambda_c > 0.0) {
        return Err(Error::invalid("lambda_c", "must be > 0"));
    }
    let dt = config.dt;
    let d_safe = config.d_safe;
    let conflicts = detect_conflicts(tracks, d_safe, dt)?;
    let mut report = RefineReport {
        conflicts_before: conflicts.len(),
        penalty_before: penalty_integral(tracks, d_safe, dt),
        min_separation_before: min_separation(tracks, dt),
        ..Default::default()
    };
    let mut penalty = report.penalty_before;
    let mut objective: f64 = tracks.iter().map(|t| t.route.objective_value).sum();
    let mut windows = conflicts;
    if windows.is_empty() {
        report.penalty_after = penalty;
        report.min_separation_after = report.min_separation_before;
        return Ok(report);
    }
    let steps = horizon_steps(tracks, dt);
    let mut grids: Vec<_> = tracks.iter().map(|t| resample(&t.route, dt, steps)).collect();
    // Penalty of every pair involving track `ti`, with `grid` standing in for it.
    let involving = |grids: &[Vec<Option<Point>>], ti: usize, grid: &[Option<Point>]| -> f64 {
        (0..grids.len())
            .filter(|&j| j != ti)
            .map(|j| pair_penalty(grid, &grids[j], d_safe, dt))
            .sum()
    };

    // Replanned phases by (track, phase, factor), dropped when the track changes.
    let mut cache: BTreeMap<(usize, usize, u64), Option<SegmentPlan>> = BTreeMap::new();
    'outer: while !windows.is_empty() && report.retimings < config.max_iterations {
        for w in &windows {
            let mut best: Option<(f64, f64, usize, usize, RouteTrajectory, Vec<Option<Point>>)> = None;
            for id in [w.robots.1, w.robots.0] {
                let Some(ti) = tracks.iter().position(|t| t.robot == id) else {
                    continue;
                };
                let Some(robot) = robots.iter().find(|r| r.id == id) else {
                    return Err(Error::UnknownRobot(id));
                };
                let ctx = PhaseContext {
                    params: &robot.params,
                    battery: &robot.battery,
                    field,
                    weights,
                    workspace: None,
                    config: planner,
                };
                let route = &tracks[ti].route;
                let Some(active) = route
                    .segments
                    .iter()
                    .position(|s| w.t_start >= s.start_time && w.t_start <= s.end_time())
                else {
                    continue;
                };
                let own = involving(&grids, ti, &grids[ti]);
                for phase in [Some(active), active.checked_sub(1)].into_iter().flatten() {
                    if route.segments[phase].profile.is_none() {
                        continue;
                    }
                    for &f in &config.factors {
                        let key = (ti, phase, f.to_bits());
                        let planned = cache
                            .entry(key)
                            .or_insert_with(|| ctx.retime_phase(route, phase, f).ok());
                        let Some(seg) = planned.clone() else {
                            continue;
                        };
                        let candidate = splice_shifted(route, phase, seg);
                        let len = crate::math::ceil(candidate.duration() / dt) as usize;
                        let grid = resample(&candidate, dt, len.max(steps));
                        let p = penalty - own + involving(&grids, ti, &grid);
                        let obj = objective - route.objective_value + candidate.objective_value;
                        let total = obj + config.lambda_c * p;
                        let current = objective + config.lambda_c * penalty;
                        if p < penalty
                            && total < current
                            && best.as_ref().is_none_or(|b| total < b.0 + config.lambda_c * b.1)
                        {
                            best = Some((obj, p, ti, phase, candidate, grid));
                        }
                    }
                }
            }
            if let Some((_, p, ti, phase, preview, grid)) = best {
                let seg = preview.segments[phase].clone();
                // Candidates are scored on time-shifted previews; the accepted
                // one is re-simulated so later phases see the new battery state.
                let robot = robots.iter().find(|r| r.id == tracks[ti].robot);
                let full = robot.and_then(|robot| {
                    PhaseContext {
                        params: &robot.params,
                        battery: &robot.battery,
                        field,
                        weights,
                        workspace: None,
                        config: planner,
                    }
                    .replay_after(&tracks[ti].route, phase, seg)
                    .ok()
                });
                let route = full.unwrap_or(preview);
                cache.retain(|k, _| k.0 != ti);
                objective += route.objective_value - tracks[ti].route.objective_value;
                tracks[ti].route = route;
                grids[ti] = grid;
                penalty = p;
                report.retimings += 1;
                windows = detect_conflicts(tracks, d_safe, dt)?;
                continue 'outer;
            }
        }
        break;
    }
    report.penalty_after = penalty_integral(tracks, d_safe, dt);
    report.min_separation_after = min_separation(tracks, dt);
    report.residual = windows;
    Ok(report)
}
