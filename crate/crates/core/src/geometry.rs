//! Planar geometry used by the world model: poses, oriented boxes, polygons
//! and polylines. All lengths are meters and angles radians.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counterclockwise rotation by `theta`.
    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Left-hand normal.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// A planar pose. `yaw` is kept in (−π, π] by every constructor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.yaw)
    }

    /// Expresses a world point in this pose's local frame (x forward, y left).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotate(-self.yaw)
    }

    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.yaw) + self.position()
    }

    /// Expresses `other` relative to this pose.
    pub fn relative(&self, other: &Pose) -> Pose {
        let p = self.to_local(other.position());
        Pose::new(p.x, p.y, other.yaw - self.yaw)
    }

    /// Inverse of [`Pose::relative`].
    pub fn compose(&self, local: &Pose) -> Pose {
        let p = self.to_world(local.position());
        Pose::new(p.x, p.y, self.yaw + local.yaw)
    }
}

/// A rectangle of `length` (along the heading) by `width` centered on `pose`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub pose: Pose,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(pose: Pose, length: f64, width: f64) -> Self {
        OrientedBox {
            pose,
            length,
            width,
        }
    }

    pub fn axes(&self) -> [Vec2; 2] {
        let h = self.pose.heading();
        [h, h.perp()]
    }

    /// Corners in counterclockwise order starting front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let [u, v] = self.axes();
        let c = self.pose.position();
        let a = u * (self.length / 2.0);
        let b = v * (self.width / 2.0);
        [c + a + b, c - a + b, c - a - b, c + a - b]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.pose.to_local(p);
        l.x.abs() <= self.length / 2.0 && l.y.abs() <= self.width / 2.0
    }

    /// Separating-axis test. Touching boxes count as intersecting.
    pub fn intersects(&self, other: &OrientedBox) -> bool {
        let ca = self.corners();
        let cb = other.corners();
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = project(&ca, axis);
            let (bmin, bmax) = project(&cb, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }

    pub fn polygon(&self) -> Vec<Vec2> {
        self.corners().to_vec()
    }
}

fn project(points: &[Vec2], axis: Vec2) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Proper crossing of two segments. Orientations within rounding noise of
/// zero count as collinear, so nearly straight polylines are not reported as
/// crossing themselves.
fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let side = |p: Vec2, q: Vec2, r: Vec2| {
        let v = (q - p).cross(r - p);
        let tol = 1e-9 * (q - p).norm() * (r - p).norm();
        if v > tol {
            1
        } else if v < -tol {
            -1
        } else {
            0
        }
    };
    side(a, b, c) * side(a, b, d) < 0 && side(c, d, a) * side(c, d, b) < 0
}

/// True when no two non-adjacent edges of the closed polygon cross.
pub fn is_simple_polygon(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| poly[i].cross(poly[(i + 1) % n]))
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Closest point on a polyline: (arc length at the projection, distance).
pub fn project_onto_polyline(p: Vec2, line: &[Vec2]) -> Option<(f64, f64)> {
    if line.is_empty() {
        return None;
    }
    if line.len() == 1 {
        return Some((0.0, p.dist(line[0])));
    }
    let mut best = (0.0, f64::INFINITY);
    let mut s0 = 0.0;
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ab = b - a;
        let len2 = ab.dot(ab);
        let t = if len2 > 0.0 {
            ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = a + ab * t;
        let d = p.dist(q);
        if d < best.1 {
            best = (s0 + t * len2.sqrt(), d);
        }
        s0 += len2.sqrt();
    }
    Some(best)
}

pub fn polyline_length(line: &[Vec2]) -> f64 {
    line.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Polygon covering a polyline swept by a band of total `width`.
/// Consecutive segments are joined with averaged normals, which keeps the
/// result simple for the gently curving lanes the generators produce.
pub fn polyline_band(line: &[Vec2], width: f64) -> Vec<Vec2> {
    let n = line.len();
    if n < 2 {
        return Vec::new();
    }
    let half = width / 2.0;
    let normal_at = |i: usize| -> Vec2 {
        let dir = if i == 0 {
            line[1] - line[0]
        } else if i == n - 1 {
            line[n - 1] - line[n - 2]
        } else {
            let a = line[i] - line[i - 1];
            let b = line[i + 1] - line[i];
            a * (1.0 / a.norm().max(1e-12)) + b * (1.0 / b.norm().max(1e-12))
        };
        let len = dir.norm().max(1e-12);
        (dir * (1.0 / len)).perp()
    };
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for i in 0..n {
        let nrm = normal_at(i);
        left.push(line[i] + nrm * half);
        right.push(line[i] - nrm * half);
    }
    right.reverse();
    left.extend(right);
    left
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_wraps_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn relative_and_compose_are_inverse() {
        let a = Pose::new(3.0, -2.0, 0.7);
        let b = Pose::new(-1.0, 5.0, -2.9);
        let r = a.relative(&b);
        let back = a.compose(&r);
        assert!((back.x - b.x).abs() < 1e-12);
        assert!((back.y - b.y).abs() < 1e-12);
        assert!(normalize_angle(back.yaw - b.yaw).abs() < 1e-12);
    }

    #[test]
    fn sat_far_and_identical() {
        let a = OrientedBox::new(Pose::new(0.0, 0.0, 0.3), 4.5, 2.0);
        let b = OrientedBox::new(Pose::new(10.0, 0.0, 0.3), 4.5, 2.0);
        assert!(!a.intersects(&b));
        assert!(a.intersects(&a));
    }

    #[test]
    fn polygon_helpers() {
        let sq = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        assert!(point_in_polygon(Vec2::new(1.0, 1.0), &sq));
        assert!(!point_in_polygon(Vec2::new(3.0, 1.0), &sq));
        assert!(is_simple_polygon(&sq));
        assert_eq!(polygon_area(&sq), 4.0);
        let bowtie = vec![sq[0], sq[2], sq[1], sq[3]];
        assert!(!is_simple_polygon(&bowtie));
    }

    #[test]
    fn rotated_collinear_band_is_simple() {
        let frame = Pose::new(-321.7, 455.3, 2.1345);
        for rot in 0..50 {
            let f = Pose::new(frame.x, frame.y, frame.yaw + rot as f64 * 0.37);
            let mut band: Vec<Vec2> = (0..=180).map(|i| f.to_world(Vec2::new(2.0 * i as f64, 5.25))).collect();
            band.extend((0..=180).rev().map(|i| f.to_world(Vec2::new(2.0 * i as f64, -6.0))));
            assert!(is_simple_polygon(&band), "rotation {rot}");
        }
    }

    #[test]
    fn polyline_projection() {
        let line = vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)];
        let (s, d) = project_onto_polyline(Vec2::new(4.0, 1.0), &line).unwrap();
        assert!((s - 4.0).abs() < 1e-12 && (d - 1.0).abs() < 1e-12);
        let (s, _) = project_onto_polyline(Vec2::new(11.0, 5.0), &line).unwrap();
        assert!((s - 15.0).abs() < 1e-12);
    }
}
