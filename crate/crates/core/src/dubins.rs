//! Shortest bounded-curvature paths between planar poses.
//!
//! The six candidate words are evaluated in closed form on the normalized
//! problem (start at the origin, unit turning radius) and the shortest
//! feasible one wins.

use core::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::math::{self, mod2pi};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn at(p: Point, heading: f64) -> Self {
        Self::new(p.x, p.y, heading)
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// A pose paired with the turning radius ρ that applies at it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsConfig {
    pub pose: Pose,
    pub turn_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    Left,
    Straight,
    Right,
}

impl SegmentKind {
    /// Signed curvature on a unit-radius path.
    fn unit_curvature(self) -> f64 {
        match self {
            SegmentKind::Left => 1.0,
            SegmentKind::Straight => 0.0,
            SegmentKind::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Word {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

impl Word {
    pub const ALL: [Word; 6] = [Word::Lsl, Word::Rsr, Word::Lsr, Word::Rsl, Word::Rlr, Word::Lrl];

    pub fn segments(self) -> [SegmentKind; 3] {
        use SegmentKind::{Left as L, Right as R, Straight as S};
        match self {
            Word::Lsl => [L, S, L],
            Word::Rsr => [R, S, R],
            Word::Lsr => [L, S, R],
            Word::Rsl => [R, S, L],
            Word::Rlr => [R, L, R],
            Word::Lrl => [L, R, L],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Word::Lsl => "LSL",
            Word::Rsr => "RSR",
            Word::Lsr => "LSR",
            Word::Rsl => "RSL",
            Word::Rlr => "RLR",
            Word::Lrl => "LRL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsPath {
    pub start: Pose,
    pub turn_radius: f64,
    pub word: Word,
    /// Segment lengths on the unit-radius path.
    pub params: [f64; 3],
}

struct Normalized {
    alpha: f64,
    beta: f64,
    d: f64,
    sa: f64,
    sb: f64,
    ca: f64,
    cb: f64,
    c_ab: f64,
}

impl Normalized {
    fn new(a: Pose, b: Pose, rho: f64) -> Self {
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let d = math::hypot(dx, dy) / rho;
        let theta = mod2pi(math::atan2(dy, dx));
        let alpha = mod2pi(a.heading - theta);
        let beta = mod2pi(b.heading - theta);
        Self {
            alpha,
            beta,
            d,
            sa: math::sin(alpha),
            sb: math::sin(beta),
            ca: math::cos(alpha),
            cb: math::cos(beta),
            c_ab: math::cos(alpha - beta),
        }
    }

    fn solve(&self, word: Word) -> Option<[f64; 3]> {
        let Normalized {
            alpha,
            beta,
            d,
            sa,
            sb,
            ca,
            cb,
            c_ab,
        } = *self;
        let d2 = d * d;
        match word {
            Word::Lsl => {
                let p2 = 2.0 + d2 - 2.0 * c_ab + 2.0 * d * (sa - sb);
                (p2 >= 0.0).then(|| {
                    let tmp = math::atan2(cb - ca, d + sa - sb);
                    [mod2pi(tmp - alpha), math::sqrt(p2), mod2pi(beta - tmp)]
                })
            }
            Word::Rsr => {
                let p2 = 2.0 + d2 - 2.0 * c_ab + 2.0 * d * (sb - sa);
                (p2 >= 0.0).then(|| {
                    let tmp = math::atan2(ca - cb, d - sa + sb);
                    [mod2pi(alpha - tmp), math::sqrt(p2), mod2pi(tmp - beta)]
                })
            }
            Word::Lsr => {
                let p2 = -2.0 + d2 + 2.0 * c_ab + 2.0 * d * (sa + sb);
                (p2 >= 0.0).then(|| {
                    let p = math::sqrt(p2);
                    let tmp = math::atan2(-ca - cb, d + sa + sb) - math::atan2(-2.0, p);
                    [mod2pi(tmp - alpha), p, mod2pi(tmp - beta)]
                })
            }
            Word::Rsl => {
                let p2 = -2.0 + d2 + 2.0 * c_ab - 2.0 * d * (sa + sb);
                (p2 >= 0.0).then(|| {
                    let p = math::sqrt(p2);
                    let tmp = math::atan2(ca + cb, d - sa - sb) - math::atan2(2.0, p);
                    [mod2pi(alpha - tmp), p, mod2pi(beta - tmp)]
                })
            }
            Word::Rlr => {
                let tmp = (6.0 - d2 + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0;
                (tmp.abs() <= 1.0).then(|| {
                    let p = mod2pi(TAU - math::acos(tmp));
                    let phi = math::atan2(ca - cb, d - sa + sb);
                    let t = mod2pi(alpha - phi + 0.5 * p);
                    [t, p, mod2pi(alpha - beta - t + p)]
                })
            }
            Word::Lrl => {
                let tmp = (6.0 - d2 + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0;
                (tmp.abs() <= 1.0).then(|| {
                    let p = mod2pi(TAU - math::acos(tmp));
                    let phi = math::atan2(ca - cb, d + sa - sb);
                    let t = mod2pi(-alpha - phi + 0.5 * p);
                    [t, p, mod2pi(beta - alpha - t + p)]
                })
            }
        }
    }
}

/// Positions closer than this are treated as coincident.
const COINCIDENT: f64 = 1e-12;

impl DubinsPath {
    /// Path of the given word, if that word admits a solution.
    pub fn with_word(a: Pose, b: Pose, turn_radius: f64, word: Word) -> Option<Self> {
        let n = Normalized::new(a, b, turn_radius);
        n.solve(word).map(|params| Self {
            start: a,
            turn_radius,
            word,
            params,
        })
    }

    /// Shortest path from `a` to `b`. Ties go to the earlier word in
    /// [`Word::ALL`].
    pub fn shortest(a: Pose, b: Pose, turn_radius: f64) -> Self {
        let same_place = a.position().distance(b.position()) <= COINCIDENT * turn_radius;
        if same_place && math::wrap_pi(b.heading - a.heading).abs() <= 1e-12 {
            return Self {
                start: a,
                turn_radius,
                word: Word::Lsl,
                params: [0.0; 3],
            };
        }
        let n = Normalized::new(a, b, turn_radius);
        let mut best: Option<Self> = None;
        for word in Word::ALL {
            if let Some(params) = n.solve(word) {
                let cand = Self {
                    start: a,
                    turn_radius,
                    word,
                    params,
                };
                if best.map_or(true, |b| cand.length() < b.length()) {
                    best = Some(cand);
                }
            }
        }
        // LSL and RSR are always feasible (p² ≥ 0 by the triangle
        // inequality), so a candidate exists.
        best.expect("LSL/RSR always admit a solution")
    }

    pub fn length(&self) -> f64 {
        (self.params[0] + self.params[1] + self.params[2]) * self.turn_radius
    }

    pub fn segment_lengths(&self) -> [f64; 3] {
        self.params.map(|p| p * self.turn_radius)
    }

    fn advance(pose: Pose, kind: SegmentKind, len: f64, rho: f64) -> Pose {
        let h = pose.heading;
        match kind {
            SegmentKind::Straight => {
                Pose::new(pose.x + len * math::cos(h), pose.y + len * math::sin(h), h)
            }
            SegmentKind::Left => {
                let h1 = h + len / rho;
                Pose::new(
                    pose.x + rho * (math::sin(h1) - math::sin(h)),
                    pose.y - rho * (math::cos(h1) - math::cos(h)),
                    h1,
                )
            }
            SegmentKind::Right => {
                let h1 = h - len / rho;
                Pose::new(
                    pose.x - rho * (math::sin(h1) - math::sin(h)),
                    pose.y + rho * (math::cos(h1) - math::cos(h)),
                    h1,
                )
            }
        }
    }

    /// Pose at arc length `s`, clamped to the path.
    pub fn sample(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length());
        let mut pose = self.start;
        let mut remaining = s;
        for (kind, len) in self.word.segments().into_iter().zip(self.segment_lengths()) {
            let step = remaining.min(len);
            pose = Self::advance(pose, kind, step, self.turn_radius);
            remaining -= step;
            if remaining <= 0.0 {
                break;
            }
        }
        pose
    }

    /// Signed curvature (1/m) at arc length `s`.
    pub fn curvature(&self, s: f64) -> f64 {
        let mut edge = 0.0;
        let kinds = self.word.segments();
        let lens = self.segment_lengths();
        for i in 0..3 {
            edge += lens[i];
            if s < edge || i == 2 {
                return kinds[i].unit_curvature() / self.turn_radius;
            }
        }
        0.0
    }

    pub fn end(&self) -> Pose {
        self.sample(self.length())
    }
}

/// Length of the shortest path between two configurations sharing a turning
/// radius (the radius of `a` is used).
pub fn dubins_length(a: &DubinsConfig, b: &DubinsConfig) -> f64 {
    DubinsPath::shortest(a.pose, b.pose, a.turn_radius).length()
}
