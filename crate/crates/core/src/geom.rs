//! Small geometric kernels shared by several stages.

use crate::mesh::{Point, Vec3};

/// Closest point on segment `ab` to `p`, with its parameter in `[0, 1]`.
pub fn closest_on_segment(p: &Point, a: &Point, b: &Point) -> (Point, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    (closest_on_segment(p, a, b).0 - p).norm()
}

/// Closest point on triangle `t` to `p` and its barycentric coordinates
/// (region walk after Ericson, "Real-Time Collision Detection" 5.1.5).
pub fn closest_on_triangle(p: &Point, t: &[Point; 3]) -> (Point, [f64; 3]) {
    let (a, b, c) = (t[0], t[1], t[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

/// Minimum distance between segments `p1q1` and `p2q2`.
pub fn segment_segment_distance(p1: &Point, q1: &Point, p2: &Point, q2: &Point) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return r.norm();
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn of(points: &[Point]) -> Self {
        let mut min = points[0];
        let mut max = points[0];
        for p in &points[1..] {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    pub fn overlaps(&self, other: &Aabb, pad: f64) -> bool {
        (0..3).all(|i| self.min[i] - pad <= other.max[i] && other.min[i] - pad <= self.max[i])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

/// Whether two triangles share at least one point (touching counts).
///
/// Non-coplanar pairs intersect the line where the two planes meet; each
/// triangle covers an interval of that line and the pair intersects iff the
/// intervals overlap. Coplanar pairs fall back to a 2D overlap test.
pub fn triangles_intersect(t1: &[Point; 3], t2: &[Point; 3]) -> bool {
    let n1 = (t1[1] - t1[0]).cross(&(t1[2] - t1[0]));
    let n2 = (t2[1] - t2[0]).cross(&(t2[2] - t2[0]));
    let scale = longest_edge(t1).max(longest_edge(t2));
    let eps1 = 1e-12 * n1.norm() * scale;
    let eps2 = 1e-12 * n2.norm() * scale;

    let d1 = t1.map(|p| snap(n2.dot(&(p - t2[0])), eps2));
    if same_strict_side(&d1) {
        return false;
    }
    let d2 = t2.map(|p| snap(n1.dot(&(p - t1[0])), eps1));
    if same_strict_side(&d2) {
        return false;
    }
    if d1.iter().all(|&d| d == 0.0) || d2.iter().all(|&d| d == 0.0) {
        return coplanar_overlap(t1, t2, &n1);
    }
    let dir = n1.cross(&n2);
    let (lo1, hi1) = plane_interval(t1, &d1, &dir);
    let (lo2, hi2) = plane_interval(t2, &d2, &dir);
    lo1.max(lo2) <= hi1.min(hi2)
}

fn longest_edge(t: &[Point; 3]) -> f64 {
    (t[1] - t[0]).norm().max((t[2] - t[1]).norm()).max((t[0] - t[2]).norm())
}

fn snap(d: f64, eps: f64) -> f64 {
    if d.abs() <= eps {
        0.0
    } else {
        d
    }
}

fn same_strict_side(d: &[f64; 3]) -> bool {
    (d[0] > 0.0 && d[1] > 0.0 && d[2] > 0.0) || (d[0] < 0.0 && d[1] < 0.0 && d[2] < 0.0)
}

/// Interval covered by `t ∩ other plane` projected on `dir`, given signed
/// distances `d` of the vertices to that plane.
fn plane_interval(t: &[Point; 3], d: &[f64; 3], dir: &Vec3) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut push = |p: Point| {
        let s = dir.dot(&p.coords);
        lo = lo.min(s);
        hi = hi.max(s);
    };
    for i in 0..3 {
        let j = (i + 1) % 3;
        if d[i] == 0.0 {
            push(t[i]);
        }
        if d[i] * d[j] < 0.0 {
            let s = d[i] / (d[i] - d[j]);
            push(t[i] + (t[j] - t[i]) * s);
        }
    }
    (lo, hi)
}

fn coplanar_overlap(t1: &[Point; 3], t2: &[Point; 3], normal: &Vec3) -> bool {
    // Drop the dominant normal axis and work in 2D.
    let axis = normal.iamax();
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let a = t1.map(|p| [p[u], p[v]]);
    let b = t2.map(|p| [p[u], p[v]]);
    for i in 0..3 {
        for j in 0..3 {
            if segments_intersect_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]) {
                return true;
            }
        }
    }
    point_in_triangle_2d(a[0], &b) || point_in_triangle_2d(b[0], &a)
}

fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment_2d(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect_2d(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient2d(q1, q2, p1);
    let d2 = orient2d(q1, q2, p2);
    let d3 = orient2d(p1, p2, q1);
    let d4 = orient2d(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment_2d(q1, q2, p1))
        || (d2 == 0.0 && on_segment_2d(q1, q2, p2))
        || (d3 == 0.0 && on_segment_2d(p1, p2, q1))
        || (d4 == 0.0 && on_segment_2d(p1, p2, q2))
}

fn point_in_triangle_2d(p: [f64; 2], t: &[[f64; 2]; 3]) -> bool {
    let a = orient2d(t[0], t[1], p);
    let b = orient2d(t[1], t[2], p);
    let c = orient2d(t[2], t[0], p);
    (a >= 0.0 && b >= 0.0 && c >= 0.0) || (a <= 0.0 && b <= 0.0 && c <= 0.0)
}

/// Length of an open polyline.
pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}
