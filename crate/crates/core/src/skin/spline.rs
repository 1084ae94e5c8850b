use serde::Serialize;

use crate::geom::closest_on_segment;
use crate::mesh::{Point, Vec3};

use super::{boundary_loops, SkinError, SubMesh};

/// Fewest points a resampled loop may have.
pub const MIN_RESAMPLED: usize = 8;

/// Dense samples per segment used to build the arc-length table.
const ARC_SAMPLES: usize = 64;

/// Closed centripetal Catmull-Rom spline and its arc-length resampling.
#[derive(Clone, Debug, Serialize)]
pub struct BoundarySpline {
    control_points: Vec<Point>,
    /// Knot of every control point plus the closing knot (`n + 1` values).
    knots: Vec<f64>,
    resampled: Vec<Point>,
}

impl BoundarySpline {
    /// Spline through `points` (closed, at least 3 distinct consecutive points).
    pub fn new(points: &[Point]) -> Self {
        let n = points.len();
        let mut knots = Vec::with_capacity(n + 1);
        knots.push(0.0);
        for i in 0..n {
            let d = (points[(i + 1) % n] - points[i]).norm();
            knots.push(knots[i] + d.sqrt());
        }
        Self { control_points: points.to_vec(), knots, resampled: Vec::new() }
    }

    pub fn control_points(&self) -> &[Point] {
        &self.control_points
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn resampled(&self) -> &[Point] {
        &self.resampled
    }

    pub fn segment_count(&self) -> usize {
        self.control_points.len()
    }

    /// Parameter span of the whole loop.
    pub fn period(&self) -> f64 {
        self.knots[self.control_points.len()]
    }

    /// Point at global parameter `t` (wrapped into one period).
    pub fn evaluate(&self, t: f64) -> Point {
        let (seg, u) = self.locate(t);
        self.segment_eval(seg, u).0
    }

    /// Derivative with respect to the global parameter.
    pub fn derivative(&self, t: f64) -> Vec3 {
        let (seg, u) = self.locate(t);
        self.segment_eval(seg, u).1
    }

    /// Point and derivative on segment `seg` at local fraction `f` in [0, 1];
    /// `f = 1` gives the left-hand limit at the next knot.
    pub fn segment_sample(&self, seg: usize, f: f64) -> (Point, Vec3) {
        let seg = seg % self.segment_count();
        let span = self.knots[seg + 1] - self.knots[seg];
        self.segment_eval(seg, f * span)
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.rem_euclid(self.period());
        let n = self.segment_count();
        let seg = (self.knots.partition_point(|&k| k <= t).max(1) - 1).min(n - 1);
        (seg, t - self.knots[seg])
    }

    /// Barry–Goldman pyramid on segment `seg` at local offset `u`, with its
    /// derivative carried through each level.
    fn segment_eval(&self, seg: usize, u: f64) -> (Point, Vec3) {
        let n = self.segment_count();
        let p = |k: isize| self.control_points[(seg as isize + k).rem_euclid(n as isize) as usize].coords;
        let dt = |k: isize| {
            let i = (seg as isize + k).rem_euclid(n as isize) as usize;
            self.knots[i + 1] - self.knots[i]
        };
        let (t0, t1, t2) = (-dt(-1), 0.0, dt(0));
        let t3 = t2 + dt(1);
        let (p0, p1, p2, p3) = (p(-1), p(0), p(1), p(2));

        let lerp = |a: Vec3, da: Vec3, b: Vec3, db: Vec3, ta: f64, tb: f64| {
            let h = tb - ta;
            let v = a * ((tb - u) / h) + b * ((u - ta) / h);
            let dv = (b - a) / h + da * ((tb - u) / h) + db * ((u - ta) / h);
            (v, dv)
        };
        let z = Vec3::zeros();
        let (a1, da1) = lerp(p0, z, p1, z, t0, t1);
        let (a2, da2) = lerp(p1, z, p2, z, t1, t2);
        let (a3, da3) = lerp(p2, z, p3, z, t2, t3);
        let (b1, db1) = lerp(a1, da1, a2, da2, t0, t2);
        let (b2, db2) = lerp(a2, da2, a3, da3, t1, t3);
        let (c, dc) = lerp(b1, db1, b2, db2, t1, t2);
        (Point::from(c), dc)
    }

    /// Resample to `count` points spaced uniformly by arc length, starting
    /// at the first control point.
    fn resample(&mut self, count: usize) {
        let n = self.segment_count();
        let mut params = Vec::with_capacity(n * ARC_SAMPLES + 1);
        let mut arc = Vec::with_capacity(n * ARC_SAMPLES + 1);
        let mut prev = self.control_points[0];
        params.push(0.0);
        arc.push(0.0);
        for seg in 0..n {
            for k in 1..=ARC_SAMPLES {
                let f = k as f64 / ARC_SAMPLES as f64;
                let q = self.segment_sample(seg, f).0;
                let t = self.knots[seg] + f * (self.knots[seg + 1] - self.knots[seg]);
                arc.push(arc.last().unwrap() + (q - prev).norm());
                params.push(t);
                prev = q;
            }
        }
        let total = *arc.last().unwrap();
        self.resampled = (0..count)
            .map(|j| {
                let s = total * j as f64 / count as f64;
                let i = arc.partition_point(|&a| a <= s).clamp(1, arc.len() - 1);
                let (s0, s1) = (arc[i - 1], arc[i]);
                let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
                self.evaluate(params[i - 1] + w * (params[i] - params[i - 1]))
            })
            .collect();
    }

    /// Closest point on the closed resampled polyline.
    pub fn closest_on_resampled(&self, q: &Point) -> Point {
        let r = &self.resampled;
        let mut best = r[0];
        let mut best_d = f64::INFINITY;
        for i in 0..r.len() {
            let (c, _) = closest_on_segment(q, &r[i], &r[(i + 1) % r.len()]);
            let d = (c - q).norm_squared();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }
}

/// Fit a closed spline through `points`, resample it to
/// `max(ceil(ratio · n), 8)` points and snap each input point onto the
/// resampled polyline. Returns the spline and the snapped points.
pub fn smooth_boundary(points: &[Point], resample_ratio: f64) -> Result<(BoundarySpline, Vec<Point>), SkinError> {
    if !(resample_ratio > 0.0 && resample_ratio <= 1.0) {
        return Err(SkinError::InvalidResampleRatio(resample_ratio));
    }
    if points.len() < 4 {
        return Err(SkinError::LoopTooShort(points.len()));
    }
    let n = points.len();
    if let Some(i) = (0..n).find(|&i| points[i] == points[(i + 1) % n]) {
        return Err(SkinError::TangledBoundary(i as u32));
    }
    let mut spline = BoundarySpline::new(points);
    let count = ((resample_ratio * n as f64).ceil() as usize).max(MIN_RESAMPLED);
    spline.resample(count);
    let snapped = points.iter().map(|p| spline.closest_on_resampled(p)).collect();
    Ok((spline, snapped))
}

/// Smooth every boundary loop of `sub`, moving its boundary vertices onto
/// the resampled splines. Loops with fewer than 4 vertices are left as-is.
pub fn smooth_cutout(sub: &SubMesh, resample_ratio: f64) -> Result<(SubMesh, Vec<BoundarySpline>), SkinError> {
    let mut positions = sub.mesh().vertices().to_vec();
    let mut splines = Vec::new();
    for lp in boundary_loops(sub)? {
        if lp.len() < 4 {
            tracing::warn!(vertices = lp.len(), "boundary loop too short to smooth; left unchanged");
            continue;
        }
        let pts: Vec<Point> = lp.iter().map(|&v| positions[v as usize]).collect();
        let (spline, snapped) = smooth_boundary(&pts, resample_ratio)?;
        for (&v, p) in lp.iter().zip(snapped) {
            positions[v as usize] = p;
        }
        splines.push(spline);
    }
    Ok((sub.with_positions(positions)?, splines))
}
