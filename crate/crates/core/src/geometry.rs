use serde::{Deserialize, Serialize};

use crate::math;

/// Planar point in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        math::hypot(other.x - self.x, other.y - self.y)
    }

    /// Heading of the vector `self → other`, radians in `(-π, π]`.
    pub fn bearing_to(self, other: Point) -> f64 {
        math::atan2(other.y - self.y, other.x - self.x)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            min: Point::new(x0.min(x1), y0.min(y1)),
            max: Point::new(x0.max(x1), y0.max(y1)),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Parameters `t ∈ (0, 1)` at which the segment `a → b` crosses one of
    /// the rectangle's four boundary lines.
    pub(crate) fn crossings(&self, a: Point, b: Point, out: &mut alloc::vec::Vec<f64>) {
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        for (edge, delta, origin) in [
            (self.min.x, dx, a.x),
            (self.max.x, dx, a.x),
            (self.min.y, dy, a.y),
            (self.max.y, dy, a.y),
        ] {
            if delta != 0.0 {
                let t = (edge - origin) / delta;
                if t > 0.0 && t < 1.0 {
                    out.push(t);
                }
            }
        }
    }
}
