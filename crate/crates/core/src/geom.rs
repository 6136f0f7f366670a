//! Planar vector type and the polygon primitives used by the zone map.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or vector in map coordinates (millimetres).
///
/// Serialized as a two-element array `[x, y]` to match the map file schema.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x_mm: f64,
    pub y_mm: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x_mm: 0.0, y_mm: 0.0 };

    pub const fn new(x_mm: f64, y_mm: f64) -> Self {
        Self { x_mm, y_mm }
    }

    pub fn is_finite(self) -> bool {
        self.x_mm.is_finite() && self.y_mm.is_finite()
    }

    pub fn norm(self) -> f64 {
        self.x_mm.hypot(self.y_mm)
    }

    pub fn norm_sq(self) -> f64 {
        self.x_mm * self.x_mm + self.y_mm * self.y_mm
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x_mm * other.x_mm + self.y_mm * other.y_mm
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x_mm * other.y_mm - self.y_mm * other.x_mm
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (other - self).norm()
    }

    /// Scales the vector down so its norm is at most `max`, keeping direction.
    pub fn clamp_norm(self, max: f64) -> Vec2 {
        let n = self.norm();
        if n > max && n > 0.0 {
            self * (max / n)
        } else {
            self
        }
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2::new(x, y)
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x_mm, v.y_mm]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x_mm + rhs.x_mm, self.y_mm + rhs.y_mm)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x_mm += rhs.x_mm;
        self.y_mm += rhs.y_mm;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x_mm - rhs.x_mm, self.y_mm - rhs.y_mm)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x_mm * rhs, self.y_mm * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x_mm, -self.y_mm)
    }
}

/// Twice the signed area; positive for counter-clockwise vertex order in the
/// map's (x, y) coordinates.
pub(crate) fn signed_area2(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum()
}

/// Area centroid by the shoelace formula. Caller guarantees non-zero area.
pub(crate) fn polygon_centroid(poly: &[Vec2]) -> Vec2 {
    let n = poly.len();
    let a2 = signed_area2(poly);
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let c = p.cross(q);
        cx += (p.x_mm + q.x_mm) * c;
        cy += (p.y_mm + q.y_mm) * c;
    }
    Vec2::new(cx / (3.0 * a2), cy / (3.0 * a2))
}

/// Orientation of `c` relative to the directed line `a -> b`.
fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

/// `p` lies on the closed segment `a-b` (exact arithmetic on the inputs).
pub(crate) fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    orient(a, b, p) == 0.0
        && p.x_mm >= a.x_mm.min(b.x_mm)
        && p.x_mm <= a.x_mm.max(b.x_mm)
        && p.y_mm >= a.y_mm.min(b.y_mm)
        && p.y_mm <= a.y_mm.max(b.y_mm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Containment {
    Outside,
    Boundary,
    Inside,
}

/// Point-in-polygon by winding number, with an explicit boundary check.
pub(crate) fn contains(poly: &[Vec2], p: Vec2) -> Containment {
    let n = poly.len();
    let mut winding = 0i32;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if on_segment(p, a, b) {
            return Containment::Boundary;
        }
        if a.y_mm <= p.y_mm {
            if b.y_mm > p.y_mm && orient(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y_mm <= p.y_mm && orient(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    if winding != 0 {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

/// Segments `a-b` and `c-d` cross at a single point interior to both.
pub(crate) fn segments_cross_properly(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Segments `a-b` and `c-d` share at least one point.
pub(crate) fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    segments_cross_properly(a, b, c, d)
        || on_segment(a, c, d)
        || on_segment(b, c, d)
        || on_segment(c, a, b)
        || on_segment(d, a, b)
}

/// Euclidean distance from `p` to the closed segment `a-b`.
pub(crate) fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}
