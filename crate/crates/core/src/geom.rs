//! Small 2D/3D geometry helpers used by the propagation oracle.

use serde::{Deserialize, Serialize};

/// A point (or vector) in the receiver plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// 2D cross product (z component of the 3D cross).
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, other: Point2) -> f64 {
        self.sub(other).norm()
    }
}

/// A point in 3D; z is height above the receiver plane's origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn dist(self, other: Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Axis-aligned rectangle in the receiver plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn is_degenerate(&self) -> bool {
        self.width() <= 0.0 || self.height() <= 0.0
    }
}

/// Intersection of 2D segments `p0->p1` and `q0->q1`.
///
/// Returns the parameters `(t, u)` along each segment when the segments
/// properly cross (both parameters strictly inside `(eps, 1 - eps)`), which is
/// the notion of crossing the occlusion tests rely on: grazing an endpoint
/// does not block a path.
pub fn segment_crossing(
    p0: Point2,
    p1: Point2,
    q0: Point2,
    q1: Point2,
    eps: f64,
) -> Option<(f64, f64)> {
    let r = p1.sub(p0);
    let s = q1.sub(q0);
    let denom = r.cross(s);
    if denom.abs() < 1e-15 {
        return None; // parallel or degenerate
    }
    let qp = q0.sub(p0);
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if t > eps && t < 1.0 - eps && u > eps && u < 1.0 - eps {
        Some((t, u))
    } else {
        None
    }
}

/// Mirror point `p` across the infinite line through `a` and `b`.
pub fn mirror_across_line(p: Point2, a: Point2, b: Point2) -> Point2 {
    let d = b.sub(a);
    let len2 = d.dot(d);
    debug_assert!(len2 > 0.0, "degenerate mirror line");
    let t = p.sub(a).dot(d) / len2;
    let foot = Point2::new(a.x + t * d.x, a.y + t * d.y);
    Point2::new(2.0 * foot.x - p.x, 2.0 * foot.y - p.y)
}

/// Which side of the directed line `a->b` the point lies on (sign of cross).
pub fn line_side(p: Point2, a: Point2, b: Point2) -> f64 {
    b.sub(a).cross(p.sub(a))
}

/// Distance from point `p` to segment `a-b`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b.sub(a);
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(Point2::new(a.x + t * d.x, a.y + t * d.y))
}
