//! Closed-form segment energy, bid approximations, route energy and the
//! asymmetric transition-cost matrix.
//!
//! These are the cheap cost models the allocator uses. The physically
//! simulated counterpart lives in [`crate::trajectory`].

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};
use crate::model::{RobotParams, Task};
use crate::{Error, Result, GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionKind {
    Uniform,
    Zoned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionZone {
    pub rect: Rect,
    pub mu: f64,
}

/// Rolling-friction coefficient over the floor. Overlapping zones resolve to
/// the first match; points outside every zone get `default_mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionField {
    pub kind: FrictionKind,
    pub uniform_mu: f64,
    #[serde(default)]
    pub zones: Vec<FrictionZone>,
    pub default_mu: f64,
}

impl FrictionField {
    pub fn uniform(mu: f64) -> Self {
        Self {
            kind: FrictionKind::Uniform,
            uniform_mu: mu,
            zones: Vec::new(),
            default_mu: mu,
        }
    }

    pub fn zoned(zones: Vec<FrictionZone>, default_mu: f64) -> Self {
        Self {
            kind: FrictionKind::Zoned,
            uniform_mu: default_mu,
            zones,
            default_mu,
        }
    }

    /// Smallest and largest coefficient the field assigns to any zone.
    pub fn mu_range(&self) -> (f64, f64) {
        match self.kind {
            FrictionKind::Uniform => (self.uniform_mu, self.uniform_mu),
            FrictionKind::Zoned if self.zones.is_empty() => (self.default_mu, self.default_mu),
            FrictionKind::Zoned => self
                .zones
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z.mu), hi.max(z.mu))),
        }
    }

    pub fn validate(&self, bounds: Option<Rect>) -> Result<()> {
        let ok = |mu: f64| mu > 0.0 && mu.is_finite();
        if !ok(self.uniform_mu) || !ok(self.default_mu) {
            return Err(Error::invalid("mu", "friction coefficients must be > 0"));
        }
        for z in &self.zones {
            if !ok(z.mu) {
                return Err(Error::invalid("mu", "zone friction must be > 0"));
            }
            if let Some(b) = bounds {
                if !(b.contains(z.rect.min) && b.contains(z.rect.max)) {
                    return Err(Error::invalid("zones", "zone extends outside the workspace"));
                }
            }
        }
        Ok(())
    }

    pub fn mu_at(&self, p: Point) -> f64 {
        match self.kind {
            FrictionKind::Uniform => self.uniform_mu,
            FrictionKind::Zoned => self
                .zones
                .iter()
                .find(|z| z.rect.contains(p))
                .map_or(self.default_mu, |z| z.mu),
        }
    }

    /// `∫ μ ds` along the straight segment `a → b`, exact for the piecewise
    /// constant field.
    pub fn path_integral(&self, a: Point, b: Point) -> f64 {
        let s = a.distance(b);
        if s == 0.0 {
            return 0.0;
        }
        if self.kind == FrictionKind::Uniform {
            return self.uniform_mu * s;
        }
        let mut cuts = vec![0.0, 1.0];
        for z in &self.zones {
            z.rect.crossings(a, b, &mut cuts);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|w| {
                let mid = a.lerp(b, 0.5 * (w[0] + w[1]));
                self.mu_at(mid) * (w[1] - w[0])
            })
            .sum::<f64>()
            * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub from: Point,
    pub to: Point,
    pub payload: f64,
    pub v0: f64,
    pub vf: f64,
}

impl SegmentSpec {
    pub fn at_rest(from: Point, to: Point, payload: f64) -> Self {
        Self {
            from,
            to,
            payload,
            v0: 0.0,
            vf: 0.0,
        }
    }
}

fn check_finite(spec: &SegmentSpec) -> Result<()> {
    if spec.from.is_finite() && spec.to.is_finite() && spec.v0.is_finite() && spec.vf.is_finite()
    {
        Ok(())
    } else {
        Err(Error::NonFinite("segment endpoints"))
    }
}

/// Segment energy given the friction integral `∫ μ ds` (m).
fn segment_energy_from_integral(
    mu_ds: f64,
    spec: &SegmentSpec,
    params: &RobotParams,
    regen_enabled: bool,
) -> f64 {
    let m = params.mass + spec.payload;
    let friction = mu_ds * m * GRAVITY;
    let kinetic = 0.5 * m * (spec.vf * spec.vf - spec.v0 * spec.v0);
    let eta = params.efficiency;
    if kinetic >= 0.0 {
        (friction + kinetic) / eta
    } else if regen_enabled {
        friction / eta + params.regen_fraction * kinetic
    } else {
        ((friction + kinetic) / eta).max(0.0)
    }
}

/// Energy (J) drawn to traverse a straight segment under uniform friction.
///
/// Friction work is always divided by the drive efficiency. A kinetic energy
/// gain is divided by it too; a kinetic loss is multiplied by the recovery
/// fraction when regeneration is enabled, otherwise the total is clamped at
/// zero.
pub fn segment_energy(
    spec: &SegmentSpec,
    params: &RobotParams,
    mu: f64,
    regen_enabled: bool,
) -> Result<f64> {
    check_finite(spec)?;
    let s = spec.from.distance(spec.to);
    Ok(segment_energy_from_integral(
        mu * s,
        spec,
        params,
        regen_enabled,
    ))
}

/// As [`segment_energy`] with the friction work integrated over `field`.
pub fn segment_energy_in_field(
    spec: &SegmentSpec,
    params: &RobotParams,
    field: &FrictionField,
    regen_enabled: bool,
) -> Result<f64> {
    check_finite(spec)?;
    Ok(segment_energy_from_integral(
        field.path_integral(spec.from, spec.to),
        spec,
        params,
        regen_enabled,
    ))
}

/// `E_approx`: friction work plus the kinetic change clamped at zero.
/// `mu_ds` is the friction integral `∫ μ ds` along the leg.
pub fn approx_energy(payload: f64, mu_ds: f64, v0: f64, vf: f64, params: &RobotParams) -> f64 {
    let m = params.mass + payload;
    let kinetic = (0.5 * m * (vf * vf - v0 * v0)).max(0.0);
    (mu_ds * m * GRAVITY + kinetic) / params.efficiency
}

/// Closed-form bid: unloaded transit to the pickup plus the loaded leg, both
/// at rest-to-rest boundary speeds, under a single friction coefficient.
pub fn bid_energy_approx(robot_end: Point, task: &Task, params: &RobotParams, mu: f64) -> f64 {
    let transit = robot_end.distance(task.pickup);
    let loaded = task.loaded_length();
    approx_energy(0.0, mu * transit, 0.0, 0.0, params)
        + approx_energy(task.payload, mu * loaded, 0.0, 0.0, params)
}

/// Zone-aware bid: like [`bid_energy_approx`] with the friction work
/// integrated along each straight leg through the zones it crosses.
pub fn bid_energy_zoned(
    robot_end: Point,
    task: &Task,
    params: &RobotParams,
    field: &FrictionField,
) -> f64 {
    let transit = field.path_integral(robot_end, task.pickup);
    let loaded = field.path_integral(task.pickup, task.dropoff);
    approx_energy(0.0, transit, 0.0, 0.0, params)
        + approx_energy(task.payload, loaded, 0.0, 0.0, params)
}

/// Closed-form energy of executing `sequence` from `depot`: unloaded transit
/// from the previous dropoff to each pickup, then the loaded leg. With
/// `return_to_depot` the final unloaded leg home is added.
pub fn route_energy_closed_form(
    depot: Point,
    sequence: &[&Task],
    params: &RobotParams,
    field: &FrictionField,
    regen_enabled: bool,
    return_to_depot: bool,
) -> Result<f64> {
    let mut total = 0.0;
    let mut at = depot;
    for task in sequence {
        total += segment_energy_in_field(
            &SegmentSpec::at_rest(at, task.pickup, 0.0),
            params,
            field,
            regen_enabled,
        )?;
        total += segment_energy_in_field(
            &SegmentSpec::at_rest(task.pickup, task.dropoff, task.payload),
            params,
            field,
            regen_enabled,
        )?;
        at = task.dropoff;
    }
    if return_to_depot && !sequence.is_empty() {
        total += segment_energy_in_field(
            &SegmentSpec::at_rest(at, depot, 0.0),
            params,
            field,
            regen_enabled,
        )?;
    }
    Ok(total)
}

/// Cost of one straight leg between two points with a payload and boundary
/// speeds.
pub trait LegCost {
    fn leg(&mut self, from: Point, to: Point, payload: f64, v0: f64, vf: f64) -> Result<f64>;
}

/// The closed-form segment energy as a [`LegCost`].
#[derive(Debug, Clone)]
pub struct ClosedFormLegCost<'a> {
    pub params: &'a RobotParams,
    pub field: &'a FrictionField,
    pub regen_enabled: bool,
}

impl LegCost for ClosedFormLegCost<'_> {
    fn leg(&mut self, from: Point, to: Point, payload: f64, v0: f64, vf: f64) -> Result<f64> {
        segment_energy_in_field(
            &SegmentSpec {
                from,
                to,
                payload,
                v0,
                vf,
            },
            self.params,
            self.field,
            self.regen_enabled,
        )
    }
}

/// Asymmetric task-to-task cost: entry `(a, b)` is the unloaded leg from
/// `a`'s dropoff to `b`'s pickup plus `b`'s loaded leg. The diagonal holds
/// the loaded leg alone. All boundary speeds are zero.
pub fn transition_matrix<C: LegCost + ?Sized>(tasks: &[Task], oracle: &mut C) -> Result<Vec<Vec<f64>>> {
    let m = tasks.len();
    let mut loaded = Vec::with_capacity(m);
    for t in tasks {
        loaded.push(oracle.leg(t.pickup, t.dropoff, t.payload, 0.0, 0.0)?);
    }
    let mut out = vec![vec![0.0; m]; m];
    for (a, ta) in tasks.iter().enumerate() {
        for (b, tb) in tasks.iter().enumerate() {
            out[a][b] = if a == b {
                loaded[b]
            } else {
                oracle.leg(ta.dropoff, tb.pickup, 0.0, 0.0, 0.0)? + loaded[b]
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn nominal() -> RobotParams {
        RobotParams::default()
    }

    // Hand evaluation: μ(M+w) g s / η with g = 9.80665.
    fn hand(mu: f64, mass: f64, s: f64) -> f64 {
        mu * mass * 9.80665 * s / 0.85
    }

    #[test]
    fn segment_energy_unloaded_10m() {
        let e = segment_energy(&SegmentSpec::at_rest(p(0.0, 0.0), p(10.0, 0.0), 0.0), &nominal(), 0.02, false)
            .unwrap();
        assert_relative_eq!(e, hand(0.02, 50.0, 10.0), max_relative = 1e-12);
        assert_relative_eq!(e, 115.41, max_relative = 1e-3);
    }

    #[test]
    fn segment_energy_loaded_10m() {
        let e = segment_energy(&SegmentSpec::at_rest(p(0.0, 0.0), p(10.0, 0.0), 20.0), &nominal(), 0.02, false)
            .unwrap();
        assert_relative_eq!(e, hand(0.02, 70.0, 10.0), max_relative = 1e-12);
        assert_relative_eq!(e, 161.58, max_relative = 1e-3);
    }

    #[test]
    fn segment_energy_zero_length() {
        let spec = SegmentSpec {
            from: p(3.0, 3.0),
            to: p(3.0, 3.0),
            payload: 5.0,
            v0: 1.0,
            vf: 1.0,
        };
        assert_eq!(segment_energy(&spec, &nominal(), 0.02, true).unwrap(), 0.0);
    }

    #[test]
    fn segment_energy_rejects_nan() {
        let spec = SegmentSpec::at_rest(p(f64::NAN, 0.0), p(1.0, 0.0), 0.0);
        assert!(segment_energy(&spec, &nominal(), 0.02, true).is_err());
    }

    #[test]
    fn regeneration_algebra() {
        let params = nominal();
        let spec = SegmentSpec {
            from: p(0.0, 0.0),
            to: p(1.0, 0.0),
            payload: 0.0,
            v0: 1.5,
            vf: 0.0,
        };
        let friction = 0.02 * 50.0 * 9.80665;
        let kinetic = -0.5 * 50.0 * 2.25;
        let regen = segment_energy(&spec, &params, 0.02, true).unwrap();
        assert_relative_eq!(regen, friction / 0.85 + 0.5 * kinetic, max_relative = 1e-12);
        assert!(regen < 0.0);
        let clamped = segment_energy(&spec, &params, 0.02, false).unwrap();
        assert_eq!(clamped, 0.0);
    }

    #[test]
    fn bid_hand_example() {
        let t = Task::new(1, p(2.0, 0.0), p(5.0, 0.0), 5.0);
        let b = bid_energy_approx(p(0.0, 0.0), &t, &nominal(), 0.02);
        let expect = (0.02 * 50.0 * 9.80665 * 2.0 + 0.02 * 55.0 * 9.80665 * 3.0) / 0.85;
        assert_relative_eq!(b, expect, max_relative = 1e-12);
        assert_relative_eq!(b, 61.09, max_relative = 1e-3);
    }

    #[test]
    fn bid_degenerate_points() {
        let t = Task::new(1, p(4.0, 4.0), p(4.0, 4.0), 5.0);
        assert_eq!(bid_energy_approx(p(4.0, 4.0), &t, &nominal(), 0.02), 0.0);
    }

    #[test]
    fn approx_clamps_deceleration() {
        let params = nominal();
        let e = approx_energy(0.0, 0.02, 1.5, 0.0, &params);
        assert_relative_eq!(e, 0.02 * 50.0 * 9.80665 / 0.85, max_relative = 1e-12);
    }

    #[test]
    fn zoned_bid_piecewise() {
        let field = FrictionField::zoned(
            vec![
                FrictionZone {
                    rect: Rect::new(0.0, -1.0, 5.0, 1.0),
                    mu: 0.01,
                },
                FrictionZone {
                    rect: Rect::new(5.0, -1.0, 10.0, 1.0),
                    mu: 0.04,
                },
            ],
            0.02,
        );
        let t = Task::new(1, p(10.0, 0.0), p(10.0, 0.0), 0.0);
        let b = bid_energy_zoned(p(0.0, 0.0), &t, &nominal(), &field);
        let expect = 50.0 * 9.80665 * (0.01 * 5.0 + 0.04 * 5.0) / 0.85;
        assert_relative_eq!(b, expect, max_relative = 1e-12);
        assert_relative_eq!(b, 144.26, max_relative = 1e-3);

        let single = Task::new(2, p(1.0, 0.0), p(4.0, 0.0), 10.0);
        assert_relative_eq!(
            bid_energy_zoned(p(0.5, 0.5), &single, &nominal(), &field),
            bid_energy_approx(p(0.5, 0.5), &single, &nominal(), 0.01),
            max_relative = 1e-12
        );
        let zero = Task::new(3, p(2.0, 0.0), p(2.0, 0.0), 0.0);
        assert_eq!(bid_energy_zoned(p(2.0, 0.0), &zero, &nominal(), &field), 0.0);
    }

    #[test]
    fn route_energy_cases() {
        let params = nominal();
        let field = FrictionField::uniform(0.02);
        let depot = p(0.0, 0.0);
        assert_eq!(
            route_energy_closed_form(depot, &[], &params, &field, false, true).unwrap(),
            0.0
        );
        let t1 = Task::new(1, p(2.0, 0.0), p(5.0, 0.0), 5.0);
        assert_relative_eq!(
            route_energy_closed_form(depot, &[&t1], &params, &field, false, false).unwrap(),
            bid_energy_approx(depot, &t1, &params, 0.02),
            max_relative = 1e-12
        );
        // depot → 2 → 5 (w=5) → 7 → 11 (w=10)
        let t2 = Task::new(2, p(7.0, 0.0), p(11.0, 0.0), 10.0);
        let k = 0.02 * 9.80665 / 0.85;
        let hand = k * (50.0 * 2.0 + 55.0 * 3.0 + 50.0 * 2.0 + 60.0 * 4.0);
        assert_relative_eq!(
            route_energy_closed_form(depot, &[&t1, &t2], &params, &field, false, false).unwrap(),
            hand,
            max_relative = 1e-12
        );
        let with_return =
            route_energy_closed_form(depot, &[&t1, &t2], &params, &field, false, true).unwrap();
        assert_relative_eq!(with_return, hand + k * 50.0 * 11.0, max_relative = 1e-12);
    }

    #[test]
    fn transition_matrix_symmetric_instance() {
        let params = nominal();
        let field = FrictionField::uniform(0.02);
        let tasks = [
            Task::new(1, p(0.0, 0.0), p(4.0, 0.0), 5.0),
            Task::new(2, p(4.0, 2.0), p(0.0, 2.0), 5.0),
        ];
        let mut oracle = ClosedFormLegCost {
            params: &params,
            field: &field,
            regen_enabled: false,
        };
        let a = transition_matrix(&tasks, &mut oracle).unwrap();
        assert_relative_eq!(a[0][1], a[1][0], max_relative = 1e-12);
        assert_relative_eq!(a[0][0], hand(0.02, 55.0, 4.0), max_relative = 1e-12);
    }

    #[test]
    fn transition_matrix_asymmetric_instance() {
        let params = nominal();
        let field = FrictionField::uniform(0.02);
        let tasks = [
            Task::new(1, p(0.0, 0.0), p(2.0, 0.0), 0.0),
            Task::new(2, p(5.0, 0.0), p(12.0, 0.0), 20.0),
        ];
        let mut oracle = ClosedFormLegCost {
            params: &params,
            field: &field,
            regen_enabled: false,
        };
        let a = transition_matrix(&tasks, &mut oracle).unwrap();
        // (1,2): 2→5 unloaded + 5→12 at 70 kg; (2,1): 12→0 unloaded + 0→2 at 50 kg
        let k = 0.02 * 9.80665 / 0.85;
        assert_relative_eq!(a[0][1], k * (50.0 * 3.0 + 70.0 * 7.0), max_relative = 1e-12);
        assert_relative_eq!(a[1][0], k * (50.0 * 12.0 + 50.0 * 2.0), max_relative = 1e-12);
        assert!((a[0][1] - a[1][0]).abs() > 1.0);
        assert_relative_eq!(a[1][1], k * 70.0 * 7.0, max_relative = 1e-12);
    }
}
