use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geom::{closest_on_triangle, point_segment_distance, polyline_length, segment_segment_distance, Aabb};
use crate::mesh::{edge_key, Point, TriMesh, Vec3};
use crate::sampler::NoduleLayout;
use crate::skin::SkinShell;

use super::{ChainDesign, ChainError, FilamentSpec};

/// Relative length tolerance the serpentine search aims for.
const LENGTH_TOLERANCE: f64 = 1e-3;
const BISECTION_STEPS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteOptions {
    /// Printed trace diameter (m).
    pub trace_diameter: f64,
    /// Minimum distance from a trace centreline to the shell walls (m).
    pub wall_clearance: f64,
    /// Serpentine period along the segment (m).
    pub serpentine_pitch: f64,
    /// Polygon sides of exported tubes.
    pub tube_sides: usize,
}

impl Default for RouteOptions {
    fn default() -> Self {
        Self { trace_diameter: 0.0015, wall_clearance: 0.0005, serpentine_pitch: 0.006, tube_sides: 8 }
    }
}

/// Outer surface of a shell with a uniform grid for closest-point queries.
struct Surface<'a> {
    shell: &'a SkinShell,
    faces: Vec<usize>,
    tris: Vec<[Point; 3]>,
    grid: HashMap<(i64, i64, i64), Vec<usize>>,
    cell: f64,
    lo: [i64; 3],
    hi: [i64; 3],
    boundary: Vec<(Point, Point)>,
}

struct Projection {
    mid: Point,
    normal: Vec3,
    wall_distance: f64,
}

impl<'a> Surface<'a> {
    fn new(shell: &'a SkinShell) -> Self {
        let mesh = shell.mesh();
        let faces: Vec<usize> = shell.outer_faces().collect();
        let tris: Vec<[Point; 3]> = faces.iter().map(|&f| mesh.triangle(f)).collect();
        let mean = tris.iter().map(|t| Aabb::of(t).extent().max()).sum::<f64>() / tris.len().max(1) as f64;
        let cell = mean.max(f64::MIN_POSITIVE);
        let key = |p: &Point| p.coords.map(|x| (x / cell).floor() as i64);
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        let (mut lo, mut hi) = ([i64::MAX; 3], [i64::MIN; 3]);
        for (i, t) in tris.iter().enumerate() {
            let b = Aabb::of(t);
            let (a, z) = (key(&b.min), key(&b.max));
            for k in 0..3 {
                lo[k] = lo[k].min(a[k]);
                hi[k] = hi[k].max(z[k]);
            }
            for x in a.x..=z.x {
                for y in a.y..=z.y {
                    for w in a.z..=z.z {
                        grid.entry((x, y, w)).or_default().push(i);
                    }
                }
            }
        }
        let mut count: HashMap<(u32, u32), usize> = HashMap::new();
        for &f in &faces {
            let t = mesh.faces()[f];
            for k in 0..3 {
                *count.entry(edge_key(t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        let v = mesh.vertices();
        let mut boundary: Vec<(Point, Point)> = count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|((a, b), _)| (v[a as usize], v[b as usize]))
            .collect();
        boundary.sort_by(|a, b| a.0.coords.as_slice().partial_cmp(b.0.coords.as_slice()).unwrap());
        Self { shell, faces, tris, grid, cell, lo, hi, boundary }
    }

    /// Closest outer-surface point: (local face, point, barycentric).
    fn closest(&self, p: &Point) -> (usize, Point, [f64; 3]) {
        let c = p.coords.map(|x| (x / self.cell).floor() as i64);
        let reach = (0..3).map(|k| (c[k] - self.lo[k]).abs().max((self.hi[k] - c[k]).abs())).max().unwrap();
        let mut best: Option<(f64, usize, Point, [f64; 3])> = None;
        let mut seen = std::collections::HashSet::new();
        for ring in 0..=reach {
            for x in c.x - ring..=c.x + ring {
                for y in c.y - ring..=c.y + ring {
                    for z in c.z - ring..=c.z + ring {
                        let on_shell = [x - c.x, y - c.y, z - c.z].iter().any(|d| d.abs() == ring);
                        if !on_shell {
                            continue;
                        }
                        let Some(list) = self.grid.get(&(x, y, z)) else { continue };
                        for &i in list {
                            if !seen.insert(i) {
                                continue;
                            }
                            let (q, bary) = closest_on_triangle(p, &self.tris[i]);
                            let d = (q - p).norm();
                            if best.as_ref().is_none_or(|b| d < b.0 || (d == b.0 && i < b.1)) {
                                best = Some((d, i, q, bary));
                            }
                        }
                    }
                }
            }
            if let Some(b) = &best {
                if b.0 <= ring as f64 * self.cell {
                    break;
                }
            }
        }
        let (_, i, q, bary) = best.expect("surface has faces");
        (i, q, bary)
    }

    fn project(&self, p: &Point) -> Projection {
        let (i, q, bary) = self.closest(p);
        let normal = self.shell.outer_normal(self.faces[i], bary);
        let wall_distance = self.boundary.iter().map(|(a, b)| point_segment_distance(&q, a, b)).fold(f64::INFINITY, f64::min);
        Projection { mid: q - normal * (0.5 * self.shell.thickness()), normal, wall_distance }
    }
}

struct Segment<'a> {
    index: usize,
    from: usize,
    to: usize,
    start: Point,
    end: Point,
    start_radius: f64,
    end_radius: f64,
    /// Centres and radii of the other nodules, at mid-thickness.
    obstacles: &'a [(usize, Point, f64)],
}

enum Build {
    Ok(Vec<Point>),
    LeavesShell,
    /// Obstacle id and the leg that ran into it.
    HitsNodule(usize, usize),
}

/// Mid-thickness polyline through `anchors`, each leg zigzagged with
/// `amplitude`. Anchors themselves carry no offset.
fn build(surface: &Surface, seg: &Segment, anchors: &[Point], amplitude: f64, opts: &RouteOptions) -> Build {
    let mut points: Vec<Point> = vec![anchors[0]];
    let mut legs = Vec::new();
    for (leg, w) in anchors.windows(2).enumerate() {
        let chord = w[1] - w[0];
        let knots = ((2.0 * chord.norm() / opts.serpentine_pitch).round() as usize).max(2);
        for j in 1..=knots {
            let base = surface.project(&(w[0] + chord * (j as f64 / knots as f64)));
            let offset = if j == knots { 0.0 } else if j % 2 == 1 { amplitude } else { -amplitude };
            let proj = if offset == 0.0 {
                base
            } else {
                let side = base.normal.cross(&chord);
                if side.norm() < 1e-12 {
                    return Build::LeavesShell;
                }
                surface.project(&(base.mid + side.normalize() * offset))
            };
            let near_ends = (proj.mid - seg.start).norm() <= seg.start_radius || (proj.mid - seg.end).norm() <= seg.end_radius;
            if !near_ends && proj.wall_distance < opts.wall_clearance {
                return Build::LeavesShell;
            }
            points.push(if j == knots { w[1] } else { proj.mid });
            legs.push(leg);
        }
    }
    for (w, &leg) in points.windows(2).zip(&legs) {
        for &(id, c, r) in seg.obstacles {
            if id != seg.from && id != seg.to && point_segment_distance(&c, &w[0], &w[1]) < r + opts.trace_diameter {
                return Build::HitsNodule(id, leg);
            }
        }
    }
    Build::Ok(points)
}

/// Drop interior points that do not turn the path.
fn simplify(points: Vec<Point>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        if out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let (u, v) = (b - a, p - b);
            if u.cross(&v).norm() <= 1e-12 * u.norm() * v.norm() && u.dot(&v) > 0.0 {
                out.pop();
            }
        }
        out.push(p);
    }
    out
}

/// Route every segment at mid-thickness, inflated by a planar zigzag until
/// its length matches the segment resistance. A straight path that runs
/// through another nodule's disc is bent around it. Segments whose surface
/// path already exceeds the assigned resistance have it raised to match.
pub fn route_traces(
    shell: &SkinShell,
    layout: &NoduleLayout,
    design: &ChainDesign,
    spec: &FilamentSpec,
    opts: &RouteOptions,
) -> Result<ChainDesign, ChainError> {
    spec.validate()?;
    if shell.thickness() <= opts.trace_diameter || 0.5 * shell.thickness() < opts.wall_clearance {
        return Err(ChainError::ThicknessTooSmall { thickness: shell.thickness(), diameter: opts.trace_diameter });
    }
    if design.segment_resistances.len() + 1 != design.order.len() {
        return Err(ChainError::LayoutMismatch);
    }
    let surface = Surface::new(shell);
    let mut nodes = Vec::with_capacity(design.order.len());
    for &id in &design.order {
        let n = &layout.nodules[layout.index_of(id).ok_or(ChainError::LayoutMismatch)?];
        nodes.push((id, surface.project(&n.position).mid, n.radius));
    }
    let obstacles: Vec<(usize, Point, f64)> = layout
        .nodules
        .iter()
        .map(|n| (n.id, surface.project(&n.position).mid, n.radius))
        .collect();

    let mut segments = design.segment_resistances.clone();
    let mut polylines = Vec::with_capacity(segments.len());
    for (k, resistance) in segments.iter_mut().enumerate() {
        let seg = Segment {
            index: k,
            from: nodes[k].0,
            to: nodes[k + 1].0,
            start: nodes[k].1,
            end: nodes[k + 1].1,
            start_radius: nodes[k].2,
            end_radius: nodes[k + 1].2,
            obstacles: &obstacles,
        };
        let polyline = route_segment(&surface, &seg, spec.length_for(*resistance), opts)?;
        *resistance = resistance.max(spec.resistance(polyline_length(&polyline)));
        polylines.push(polyline);
    }
    check_clearance(&polylines, &nodes, opts)?;
    Ok(ChainDesign::from_segments(design.order.clone(), segments, polylines))
}

/// Most detours tried per segment.
const MAX_DETOURS: usize = 12;

/// Two anchors beside obstacle `c` that take leg `a → b` around it.
fn detour(surface: &Surface, a: &Point, b: &Point, c: &Point, clearance: f64) -> [Point; 2] {
    let u = (b - a).normalize();
    let normal = surface.project(c).normal;
    let (foot, _) = crate::geom::closest_on_segment(c, a, b);
    let mut side = foot - c;
    side -= normal * side.dot(&normal);
    side -= u * side.dot(&u);
    if side.norm() < 1e-9 * clearance {
        side = normal.cross(&u);
    }
    let side = side.normalize() * clearance;
    let along = u * clearance;
    [surface.project(&(c - along + side)).mid, surface.project(&(c + along + side)).mid]
}

fn route_segment(surface: &Surface, seg: &Segment, target: f64, opts: &RouteOptions) -> Result<Vec<Point>, ChainError> {
    let fail_leave = || ChainError::LeavesShell { segment: seg.index, from: seg.from, to: seg.to };
    let mut anchors = vec![seg.start, seg.end];
    let mut grow: HashMap<usize, f64> = HashMap::new();
    let mut tries = 0;
    let base = loop {
        match build(surface, seg, &anchors, 0.0, opts) {
            Build::Ok(p) => break p,
            Build::LeavesShell => return Err(fail_leave()),
            Build::HitsNodule(nodule, leg) => {
                tries += 1;
                if tries > MAX_DETOURS {
                    return Err(ChainError::CrossesNodule { segment: seg.index, nodule });
                }
                let &(_, c, r) = seg.obstacles.iter().find(|o| o.0 == nodule).expect("obstacle exists");
                let g = grow.entry(nodule).or_insert(1.0);
                *g *= 1.5;
                let clearance = *g * (r + opts.trace_diameter);
                let d = detour(surface, &anchors[leg], &anchors[leg + 1], &c, clearance);
                anchors.splice(leg + 1..leg + 1, d);
            }
        }
    };
    let base_length = polyline_length(&base);
    if base_length >= target * (1.0 - LENGTH_TOLERANCE) {
        return Ok(simplify(base));
    }
    // A zigzag wider than the shell cannot stay inside it.
    let extent = Aabb::of(surface.shell.mesh().vertices()).extent().norm();
    let (mut lo, mut hi) = (0.0, target.min(extent));
    let mut best = (base, base_length);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        match build(surface, seg, &anchors, mid, opts) {
            Build::Ok(p) => {
                let len = polyline_length(&p);
                if len <= target {
                    lo = mid;
                    best = (p, len);
                } else {
                    hi = mid;
                    if len <= target * (1.0 + LENGTH_TOLERANCE) {
                        best = (p, len);
                        break;
                    }
                }
            }
            Build::LeavesShell | Build::HitsNodule(..) => hi = mid,
        }
        if (best.1 - target).abs() <= LENGTH_TOLERANCE * target {
            break;
        }
    }
    if (best.1 - target).abs() > LENGTH_TOLERANCE * target {
        return Err(ChainError::CorridorTooNarrow { segment: seg.index, from: seg.from, to: seg.to, required: target, achievable: best.1 });
    }
    Ok(best.0)
}

/// Traces of different segments keep one trace diameter apart, except
/// inside the disc of the nodule two consecutive segments share.
fn check_clearance(polylines: &[Vec<Point>], nodes: &[(usize, Point, f64)], opts: &RouteOptions) -> Result<(), ChainError> {
    for i in 0..polylines.len() {
        for j in i + 1..polylines.len() {
            let shared = (j == i + 1).then(|| nodes[j]);
            let excluded = |a: &Point, b: &Point| {
                shared.is_some_and(|(_, c, r)| point_segment_distance(&c, a, b) <= r + opts.trace_diameter)
            };
            for u in polylines[i].windows(2) {
                if excluded(&u[0], &u[1]) {
                    continue;
                }
                for v in polylines[j].windows(2) {
                    if excluded(&v[0], &v[1]) {
                        continue;
                    }
                    let d = segment_segment_distance(&u[0], &u[1], &v[0], &v[1]);
                    if d < opts.trace_diameter {
                        return Err(ChainError::TracesTooClose { a: i, b: j, distance: d });
                    }
                }
            }
        }
    }
    Ok(())
}

fn perpendicular(t: &Vec3) -> Vec3 {
    let axis = if t.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    t.cross(&axis).normalize()
}

/// Closed tube of `diameter` swept along `polyline`, capped at both ends.
pub fn tube_mesh(polyline: &[Point], diameter: f64, sides: usize) -> Result<TriMesh, ChainError> {
    let sides = sides.max(3);
    let path: Vec<Point> = polyline.iter().fold(Vec::new(), |mut acc: Vec<Point>, p| {
        if acc.last().is_none_or(|q| (p - q).norm() > 1e-12) {
            acc.push(*p);
        }
        acc
    });
    if path.len() < 2 {
        return Err(ChainError::Mesh(crate::mesh::MeshError::Empty));
    }
    let r = 0.5 * diameter;
    let seg_dirs: Vec<Vec3> = path.windows(2).map(|w| (w[1] - w[0]).normalize()).collect();
    let mut vertices = Vec::with_capacity(path.len() * sides + 2);
    let mut u = perpendicular(&seg_dirs[0]);
    for (j, p) in path.iter().enumerate() {
        let t = if j == 0 {
            seg_dirs[0]
        } else if j == path.len() - 1 {
            seg_dirs[j - 1]
        } else {
            let s = seg_dirs[j - 1] + seg_dirs[j];
            if s.norm() < 1e-9 { seg_dirs[j] } else { s.normalize() }
        };
        let projected = u - t * u.dot(&t);
        u = if projected.norm() < 1e-9 { perpendicular(&t) } else { projected.normalize() };
        let v = t.cross(&u);
        for k in 0..sides {
            let a = std::f64::consts::TAU * k as f64 / sides as f64;
            vertices.push(p + (u * a.cos() + v * a.sin()) * r);
        }
    }
    let s = sides as u32;
    let mut faces = Vec::new();
    for j in 0..path.len() as u32 - 1 {
        for k in 0..s {
            let a = j * s + k;
            let b = j * s + (k + 1) % s;
            faces.push([a, b, b + s]);
            faces.push([a, b + s, a + s]);
        }
    }
    let start = vertices.len() as u32;
    vertices.push(path[0]);
    let end = vertices.len() as u32;
    vertices.push(*path.last().unwrap());
    let last = (path.len() as u32 - 1) * s;
    for k in 0..s {
        faces.push([start, (k + 1) % s, k]);
        faces.push([end, last + k, last + (k + 1) % s]);
    }
    Ok(TriMesh::new(vertices, faces)?)
}

/// Solid cylinder through the shell under a nodule, top flush with the
/// outer surface.
pub fn disc_mesh(center: &Point, normal: &Vec3, radius: f64, depth: f64, sides: usize) -> Result<TriMesh, ChainError> {
    tube_mesh(&[center - normal * depth, *center], 2.0 * radius, sides)
}

fn merge(parts: Vec<TriMesh>) -> Result<TriMesh, ChainError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for m in parts {
        let off = vertices.len() as u32;
        vertices.extend_from_slice(m.vertices());
        faces.extend(m.faces().iter().map(|f| f.map(|v| v + off)));
    }
    Ok(TriMesh::new(vertices, faces)?)
}

/// Nodule discs plus trace tubes as one multi-shell mesh. Overlaps with the
/// body are left to the slicer.
pub fn conductive_body(shell: &SkinShell, layout: &NoduleLayout, design: &ChainDesign, opts: &RouteOptions) -> Result<TriMesh, ChainError> {
    let mut parts = Vec::new();
    for n in &layout.nodules {
        parts.push(disc_mesh(&n.position, &n.normal, n.radius, shell.thickness(), 4 * opts.tube_sides)?);
    }
    for poly in &design.trace_polylines {
        parts.push(tube_mesh(poly, opts.trace_diameter, opts.tube_sides)?);
    }
    merge(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{assign_resistances, design_chain, order_chain, ChainOptions};
    use crate::heatmap::{HeatMap, MapRole};
    use crate::mesh::{validate_mesh, vertex_normals};
    use crate::sampler::{Nodule, SamplingParams};
    use crate::shapes;
    use crate::skin::{extract_cutout, extrude};

    fn plate_shell(size: f64, cells: usize, thickness: f64) -> SkinShell {
        let plate = shapes::grid_plate(size, size, cells, cells);
        let sub = extract_cutout(&plate, &HeatMap::uniform(&plate, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        extrude(&sub, &vertex_normals(&plate).unwrap(), thickness).unwrap()
    }

    fn on_plate(points: &[(f64, f64)], thickness: f64) -> NoduleLayout {
        NoduleLayout {
            nodules: points
                .iter()
                .enumerate()
                .map(|(id, &(x, y))| Nodule {
                    id,
                    position: Point::new(x, y, thickness),
                    normal: Vec3::z(),
                    radius: 0.005,
                    local_weight: 1.0,
                    face: 0,
                    barycentric: [1.0, 0.0, 0.0],
                })
                .collect(),
            params: SamplingParams::default(),
            chain: None,
        }
    }

    #[test]
    fn straight_segment_is_two_points() {
        let t = 0.004;
        let shell = plate_shell(0.3, 10, t);
        // 0.1 m at 256 Ω/mm is 25.6 kΩ, above the 20 kΩ margin.
        let l = on_plate(&[(0.1, 0.15), (0.2, 0.15)], t);
        let spec = FilamentSpec::default();
        let d = assign_resistances(&[0, 1], &l, &spec).unwrap();
        let routed = route_traces(&shell, &l, &d, &spec, &RouteOptions::default()).unwrap();
        let poly = &routed.trace_polylines[0];
        assert_eq!(poly.len(), 2);
        assert!((poly[0] - Point::new(0.1, 0.15, 0.002)).norm() < 1e-12);
        assert!((routed.segment_resistances[0] - 25.6).abs() < 1e-9);
    }

    #[test]
    fn doubled_length_serpentine() {
        let t = 0.004;
        let shell = plate_shell(0.3, 10, t);
        let l = on_plate(&[(0.1, 0.15), (0.2, 0.15)], t);
        let spec = FilamentSpec { margin: 51.2, ..FilamentSpec::default() };
        let d = assign_resistances(&[0, 1], &l, &spec).unwrap();
        let routed = route_traces(&shell, &l, &d, &spec, &RouteOptions::default()).unwrap();
        let poly = &routed.trace_polylines[0];
        let len = polyline_length(poly);
        assert!((len - 0.2).abs() <= 0.005 * 0.2, "length {len}");
        assert!((spec.resistance(len) - routed.segment_resistances[0]).abs() <= 0.005 * routed.segment_resistances[0]);
        for p in poly {
            assert!((p.z - 0.002).abs() < 1e-12);
        }
    }

    #[test]
    fn thin_shell_is_rejected() {
        let shell = plate_shell(0.3, 4, 0.001);
        let l = on_plate(&[(0.1, 0.15), (0.2, 0.15)], 0.001);
        let spec = FilamentSpec::default();
        let d = assign_resistances(&[0, 1], &l, &spec).unwrap();
        assert!(matches!(route_traces(&shell, &l, &d, &spec, &RouteOptions::default()), Err(ChainError::ThicknessTooSmall { .. })));
    }

    #[test]
    fn narrow_corridor_names_the_segment() {
        let t = 0.004;
        let shell = plate_shell(0.3, 10, t);
        // A 1 m trace cannot fit around a 0.1 m chord that hugs the edge.
        let l = on_plate(&[(0.1, 0.01), (0.2, 0.01)], t);
        let spec = FilamentSpec { margin: 256.0, ..FilamentSpec::default() };
        let d = assign_resistances(&[0, 1], &l, &spec).unwrap();
        match route_traces(&shell, &l, &d, &spec, &RouteOptions::default()) {
            Err(ChainError::CorridorTooNarrow { segment: 0, from: 0, to: 1, .. }) => {}
            other => panic!("expected corridor error, got {other:?}"),
        }
    }

    #[test]
    fn segment_across_a_hole_leaves_the_shell() {
        let ring = shapes::annulus(0.05, 0.15, 48, 6);
        let sub = extract_cutout(&ring, &HeatMap::uniform(&ring, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        let t = 0.004;
        let shell = extrude(&sub, &vertex_normals(&ring).unwrap(), t).unwrap();
        let l = on_plate(&[(-0.1, 0.0), (0.1, 0.0)], t);
        let spec = FilamentSpec::default();
        let d = assign_resistances(&[0, 1], &l, &spec).unwrap();
        assert!(matches!(route_traces(&shell, &l, &d, &spec, &RouteOptions::default()), Err(ChainError::LeavesShell { segment: 0, .. })));
    }

    #[test]
    fn curved_surface_raises_resistance_to_path_length() {
        let t = 0.004;
        let patch = shapes::cylinder_patch(0.05, 2.5, 0.3, 60, 30);
        let sub = extract_cutout(&patch, &HeatMap::uniform(&patch, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        let normals = vertex_normals(&patch).unwrap();
        let shell = extrude(&sub, &normals, t).unwrap();
        let outer = |angle: f64, z: f64| Point::new((0.05 + t) * angle.cos(), (0.05 + t) * angle.sin(), z);
        let mut l = on_plate(&[(0.0, 0.0), (0.0, 0.0)], t);
        l.nodules[0].position = outer(-1.0, 0.15);
        l.nodules[1].position = outer(1.0, 0.15);
        let spec = FilamentSpec { margin: 5.0, ..FilamentSpec::default() };
        let d = assign_resistances(&[0, 1], &l, &spec).unwrap();
        let routed = route_traces(&shell, &l, &d, &spec, &RouteOptions::default()).unwrap();
        let len = polyline_length(&routed.trace_polylines[0]);
        assert!(routed.segment_resistances[0] > d.segment_resistances[0]);
        assert!((spec.resistance(len) - routed.segment_resistances[0]).abs() < 1e-9);
        // Arc at mid-thickness: 2 rad at radius 0.052.
        assert!((len - 2.0 * 0.052).abs() < 0.002);
    }

    #[test]
    fn plate_chain_end_to_end() {
        let t = 0.004;
        let shell = plate_shell(0.4, 16, t);
        let l = on_plate(&[(0.05, 0.05), (0.15, 0.06), (0.25, 0.05), (0.35, 0.07), (0.3, 0.2), (0.2, 0.3)], t);
        let spec = FilamentSpec::default();
        let opts = ChainOptions { start: Some(0), ..ChainOptions::default() };
        let d = design_chain(&shell, &l, &spec, &opts).unwrap();
        assert_eq!(d.order, order_chain(&l, 0).unwrap());
        for (poly, r) in d.trace_polylines.iter().zip(&d.segment_resistances) {
            assert!((spec.resistance(polyline_length(poly)) - r).abs() <= 0.005 * r);
        }
        assert!(d.total_resistance > 100.0 && d.total_resistance < 600.0);
        let body = conductive_body(&shell, &l, &d, &opts.routing).unwrap();
        let report = validate_mesh(&body);
        assert!(report.is_watertight(), "{report:?}");
    }

    #[test]
    fn bends_around_a_blocking_disc() {
        let t = 0.004;
        let shell = plate_shell(0.3, 12, t);
        let l = on_plate(&[(0.05, 0.15), (0.15, 0.15), (0.25, 0.15)], t);
        let spec = FilamentSpec::default();
        let design = crate::chain::assign_resistances(&[0, 2], &l, &spec).unwrap();
        let opts = RouteOptions::default();
        let d = route_traces(&shell, &l, &design, &spec, &opts).unwrap();
        let c = Point::new(0.15, 0.15, 0.5 * t);
        let poly = &d.trace_polylines[0];
        let clearance = poly.windows(2).map(|w| point_segment_distance(&c, &w[0], &w[1])).fold(f64::INFINITY, f64::min);
        assert!(clearance >= 0.005 + opts.trace_diameter, "{clearance}");
        let r = spec.resistance(polyline_length(poly));
        assert!((r - d.segment_resistances[0]).abs() <= 0.005 * r);
    }

    #[test]
    fn tube_is_closed_and_outward() {
        let poly = [Point::new(0.0, 0.0, 0.0), Point::new(0.01, 0.0, 0.0), Point::new(0.02, 0.005, 0.0), Point::new(0.03, 0.0, 0.001)];
        let tube = tube_mesh(&poly, 0.002, 12).unwrap();
        assert!(validate_mesh(&tube).is_watertight());
        assert!(tube.signed_volume() > 0.0);
        let straight = tube_mesh(&[Point::origin(), Point::new(0.0, 0.0, 0.1)], 0.02, 64).unwrap();
        let exact = std::f64::consts::PI * 0.01 * 0.01 * 0.1;
        assert!((straight.signed_volume() - exact).abs() < 0.005 * exact);
    }
}
