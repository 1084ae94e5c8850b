//! Density-weighted dart throwing over the outer shell surface.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::heatmap::{HeatMap, HeatMapError};
use crate::mesh::{Point, Vec3};
use crate::skin::SkinShell;

/// Lower clamp on density weights in the distance rule.
pub const W_FLOOR: f64 = 0.05;
/// Clearance kept between neighbouring nodule discs (m).
pub const RADIUS_GAP: f64 = 0.0005;
/// Consecutive rejections allowed per requested sample.
pub const REJECTION_FACTOR: usize = 30;
/// Smallest piece of the gap-filling pass, as a fraction of `d_min`.
pub const FILL_LATTICE: f64 = 256.0;

#[derive(Debug, thiserror::Error)]
pub enum SampleError {
    #[error("density map empty above fill tolerance")]
    EmptyDensity,
    #[error("invalid sampling parameter: {0}")]
    InvalidParams(String),
    #[error("nodule {id} radius {radius} is not positive (nearest nodule {neighbor:?})")]
    NonPositiveRadius { id: usize, neighbor: Option<usize>, radius: f64 },
    #[error("layout has no nodules")]
    EmptyLayout,
    #[error(transparent)]
    HeatMap(#[from] HeatMapError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    /// Base minimum distance (m) at full density.
    #[serde(rename = "minimum_distribution_distance", alias = "d_min")]
    pub d_min: f64,
    pub fill_tolerance: f64,
    pub radius_factor: f64,
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { d_min: 0.06, fill_tolerance: 0.1, radius_factor: 0.25, max_samples: 200, seed: 0 }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), SampleError> {
        let bad = |m: &str| Err(SampleError::InvalidParams(m.to_string()));
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return bad("d_min must be positive");
        }
        if !(0.0..=1.0).contains(&self.fill_tolerance) {
            return bad("fill_tolerance must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.radius_factor) {
            return bad("radius_factor must lie in [0, 1]");
        }
        if self.max_samples == 0 {
            return bad("max_samples must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nodule {
    pub id: usize,
    pub position: Point,
    pub normal: Vec3,
    /// Disc radius (m); zero until [`assign_radii`] runs.
    pub radius: f64,
    pub local_weight: f64,
    /// Outer shell face holding the nodule and its barycentric coordinates.
    pub face: usize,
    pub barycentric: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoduleLayout {
    pub nodules: Vec<Nodule>,
    pub params: SamplingParams,
    /// Chain order as nodule ids, once designed.
    pub chain: Option<Vec<usize>>,
}

impl NoduleLayout {
    pub fn len(&self) -> usize {
        self.nodules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodules.is_empty()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.nodules.iter().map(|n| n.position).collect()
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.nodules.iter().position(|n| n.id == id)
    }

    /// SHA-256 over nodule ids and positions; contact logs name it.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.nodules {
            h.update(format!("{} {:?} {:?} {:?}\n", n.id, n.position.x, n.position.y, n.position.z).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// `d_min / max(weight, W_FLOOR)`, or infinity below the fill tolerance.
pub fn local_min_distance(weight: f64, params: &SamplingParams) -> f64 {
    if weight < params.fill_tolerance {
        f64::INFINITY
    } else {
        params.d_min / weight.max(W_FLOOR)
    }
}

/// Point on a triangle from two uniforms, area-uniform.
pub fn uniform_barycentric(r1: f64, r2: f64) -> [f64; 3] {
    let s = r1.sqrt();
    [1.0 - s, s * (1.0 - r2), s * r2]
}

struct AcceptedGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    points: Vec<Point>,
}

impl AcceptedGrid {
    fn key(&self, p: &Point) -> (i64, i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64, (p.z / self.cell).floor() as i64)
    }

    fn insert(&mut self, p: Point) {
        let k = self.key(&p);
        self.cells.entry(k).or_default().push(self.points.len());
        self.points.push(p);
    }

    /// Whether an accepted point within `r` of `center` satisfies `hit`.
    fn any_near(&self, center: &Point, r: f64, hit: impl Fn(&Point) -> bool) -> bool {
        let reach = (r / self.cell).ceil() as i64;
        let span = (2 * reach + 1) as u128;
        if span.pow(3) > self.points.len() as u128 {
            return self.points.iter().any(hit);
        }
        let (cx, cy, cz) = self.key(center);
        for x in cx - reach..=cx + reach {
            for y in cy - reach..=cy + reach {
                for z in cz - reach..=cz + reach {
                    if let Some(ids) = self.cells.get(&(x, y, z)) {
                        if ids.iter().any(|&i| hit(&self.points[i])) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Whether any accepted point lies strictly closer than `r` to `p`.
    fn any_within(&self, p: &Point, r: f64) -> bool {
        self.any_near(p, r, |q| (q - p).norm() < r)
    }

    /// Whether one accepted point lies strictly closer than `r` to every
    /// corner, and so to every point of the triangle.
    fn covers(&self, corners: &[Point; 3], r: f64) -> bool {
        self.any_near(&corners[0], r, |q| corners.iter().all(|c| (q - c).norm() < r))
    }
}

struct Darts<'a> {
    shell: &'a SkinShell,
    density: &'a HeatMap,
    params: &'a SamplingParams,
    grid: AcceptedGrid,
    nodules: Vec<Nodule>,
}

impl Darts<'_> {
    fn full(&self) -> bool {
        self.nodules.len() >= self.params.max_samples
    }

    fn point(&self, face: usize, bary: [f64; 3]) -> Point {
        let tri = self.shell.mesh().triangle(face);
        Point::from(tri[0].coords * bary[0] + tri[1].coords * bary[1] + tri[2].coords * bary[2])
    }

    /// Accept the candidate if it clears its own local minimum distance.
    fn offer(&mut self, face: usize, bary: [f64; 3]) -> bool {
        let weight = self.density.interpolate(self.shell.outer_face_parents(face), bary);
        let radius = local_min_distance(weight, self.params);
        let p = self.point(face, bary);
        if radius.is_infinite() || self.grid.any_within(&p, radius) {
            return false;
        }
        self.grid.insert(p);
        self.nodules.push(Nodule {
            id: self.nodules.len(),
            position: p,
            normal: self.shell.outer_normal(face, bary),
            radius: 0.0,
            local_weight: weight,
            face,
            barycentric: bary,
        });
        true
    }

    /// Subdivide `face`, skipping pieces that are provably covered or below
    /// the fill tolerance; offer corners and centroid of pieces at `spacing`.
    fn fill_face(&mut self, face: usize, spacing: f64) {
        let parents = self.shell.outer_face_parents(face);
        let mut stack = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
        while let Some(piece) = stack.pop() {
            if self.full() {
                return;
            }
            let heaviest = piece.iter().map(|&b| self.density.interpolate(parents, b)).fold(0.0, f64::max);
            if heaviest < self.params.fill_tolerance {
                continue;
            }
            let corners = piece.map(|b| self.point(face, b));
            if self.grid.covers(&corners, self.params.d_min / heaviest.max(W_FLOOR)) {
                continue;
            }
            let longest = (0..3).map(|i| (corners[(i + 1) % 3] - corners[i]).norm()).fold(0.0, f64::max);
            if longest <= spacing {
                let centroid = [0, 1, 2].map(|k| (piece[0][k] + piece[1][k] + piece[2][k]) / 3.0);
                for bary in [piece[0], piece[1], piece[2], centroid] {
                    if !self.full() {
                        self.offer(face, bary);
                    }
                }
                continue;
            }
            let mid = |a: [f64; 3], b: [f64; 3]| [0, 1, 2].map(|k| 0.5 * (a[k] + b[k]));
            let (m01, m12, m20) = (mid(piece[0], piece[1]), mid(piece[1], piece[2]), mid(piece[2], piece[0]));
            stack.extend([[m01, m12, m20], [m20, m12, piece[2]], [m01, piece[1], m12], [piece[0], m01, m20]]);
        }
    }
}

/// Dart throwing on the outer surface of `shell`, weighted by `density`
/// (defined on the shell's parent mesh), then a lattice pass that fills the
/// gaps random throws missed. Radii are left at zero.
pub fn sample_nodules(shell: &SkinShell, density: &HeatMap, params: &SamplingParams) -> Result<NoduleLayout, SampleError> {
    params.validate()?;
    let mesh = shell.mesh();
    if let Some(&max) = shell.parent_vertices().iter().max() {
        if max as usize >= density.weights().len() {
            return Err(HeatMapError::CountMismatch { expected: max as usize + 1, found: density.weights().len() }.into());
        }
    }
    let faces: Vec<usize> = shell.outer_faces().collect();
    let mut cdf = Vec::with_capacity(faces.len());
    let mut total = 0.0;
    for &f in &faces {
        total += mesh.face_area(f);
        cdf.push(total);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let grid = AcceptedGrid { cell: params.d_min, cells: HashMap::new(), points: Vec::new() };
    let mut darts = Darts { shell, density, params, grid, nodules: Vec::new() };
    let budget = REJECTION_FACTOR * params.max_samples;
    let mut rejections = 0;
    while !darts.full() && rejections < budget {
        let pick = rng.random::<f64>() * total;
        let k = cdf.partition_point(|&c| c <= pick).min(faces.len() - 1);
        let bary = uniform_barycentric(rng.random(), rng.random());
        if darts.offer(faces[k], bary) {
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    let thrown = darts.nodules.len();

    // Random throws leave small gaps once the budget runs out.
    let mut order = faces;
    order.shuffle(&mut rng);
    for face in order {
        darts.fill_face(face, params.d_min / FILL_LATTICE);
    }
    let nodules = darts.nodules;
    if nodules.is_empty() {
        return Err(SampleError::EmptyDensity);
    }
    tracing::debug!(accepted = nodules.len(), thrown, "sampling finished");
    Ok(NoduleLayout { nodules, params: params.clone(), chain: None })
}

/// `radius_i = min(radius_factor · local_min_distance_i, nn_i / 2 − RADIUS_GAP)`.
pub fn assign_radii(layout: &NoduleLayout, params: &SamplingParams) -> Result<NoduleLayout, SampleError> {
    if layout.is_empty() {
        return Err(SampleError::EmptyLayout);
    }
    let mut out = layout.clone();
    for (i, n) in layout.nodules.iter().enumerate() {
        let nearest = layout
            .nodules
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, m)| (j, (m.position - n.position).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let mut radius = params.radius_factor * local_min_distance(n.local_weight, params);
        if let Some((_, d)) = nearest {
            radius = radius.min(0.5 * d - RADIUS_GAP);
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(SampleError::NonPositiveRadius {
                id: n.id,
                neighbor: nearest.map(|(j, _)| layout.nodules[j].id),
                radius,
            });
        }
        out.nodules[i].radius = radius;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::MapRole;
    use crate::mesh::{vertex_normals, TriMesh};
    use crate::shapes;
    use crate::skin::{extract_cutout, extrude};
    use proptest::prelude::*;

    fn plate_shell(size: f64, n: usize) -> (TriMesh, SkinShell) {
        let plate = shapes::grid_plate(size, size, n, n);
        let sub = extract_cutout(&plate, &HeatMap::uniform(&plate, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        let shell = extrude(&sub, &vertex_normals(&plate).unwrap(), 0.004).unwrap();
        (plate, shell)
    }

    fn params(d_min: f64, max_samples: usize, seed: u64) -> SamplingParams {
        SamplingParams { d_min, fill_tolerance: 0.1, radius_factor: 0.5, max_samples, seed }
    }

    #[test]
    fn local_distance_rule() {
        let p = params(0.02, 10, 0);
        assert_eq!(local_min_distance(1.0, &p), 0.02);
        assert_eq!(local_min_distance(0.5, &p), 0.04);
        assert!(local_min_distance(0.0, &p).is_infinite());
        let open = SamplingParams { fill_tolerance: 0.0, ..p };
        assert_eq!(local_min_distance(0.0, &open), 0.02 / W_FLOOR);
    }

    #[test]
    fn accepted_points_respect_their_own_distance() {
        let (plate, shell) = plate_shell(0.4, 8);
        let w = plate.vertices().iter().map(|v| 0.2 + 2.0 * v.x).collect();
        let density = HeatMap::from_weights(&plate, MapRole::Density, w).unwrap();
        let p = params(0.03, 500, 7);
        let layout = sample_nodules(&shell, &density, &p).unwrap();
        for (i, a) in layout.nodules.iter().enumerate() {
            assert!(a.local_weight >= p.fill_tolerance);
            assert!((a.position.z - 0.004).abs() < 1e-12);
            assert!((a.normal - Vec3::z()).norm() < 1e-12);
            for b in &layout.nodules[..i] {
                assert!((a.position - b.position).norm() >= local_min_distance(a.local_weight, &p));
            }
        }
        // Dense side gets more nodules than the sparse side.
        let left = layout.nodules.iter().filter(|n| n.position.x < 0.2).count();
        assert!(layout.len() - left > left);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (plate, shell) = plate_shell(0.3, 6);
        let density = HeatMap::uniform(&plate, MapRole::Density, 0.8).unwrap();
        let a = sample_nodules(&shell, &density, &params(0.04, 100, 3)).unwrap();
        let b = sample_nodules(&shell, &density, &params(0.04, 100, 3)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = sample_nodules(&shell, &density, &params(0.04, 100, 4)).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn max_samples_caps_acceptance() {
        let (plate, shell) = plate_shell(0.3, 6);
        let density = HeatMap::uniform(&plate, MapRole::Density, 1.0).unwrap();
        assert_eq!(sample_nodules(&shell, &density, &params(0.01, 5, 0)).unwrap().len(), 5);
    }

    #[test]
    fn empty_density_is_an_error() {
        let (plate, shell) = plate_shell(0.3, 2);
        let density = HeatMap::uniform(&plate, MapRole::Density, 0.9).unwrap();
        let p = SamplingParams { fill_tolerance: 1.0, ..params(0.05, 10, 0) };
        let err = sample_nodules(&shell, &density, &p).unwrap_err();
        assert_eq!(err.to_string(), "density map empty above fill tolerance");
    }

    fn layout_of(points: &[Point], weight: f64, p: &SamplingParams) -> NoduleLayout {
        NoduleLayout {
            nodules: points
                .iter()
                .enumerate()
                .map(|(id, &position)| Nodule {
                    id,
                    position,
                    normal: Vec3::z(),
                    radius: 0.0,
                    local_weight: weight,
                    face: 0,
                    barycentric: [1.0, 0.0, 0.0],
                })
                .collect(),
            params: p.clone(),
            chain: None,
        }
    }

    #[test]
    fn radius_examples() {
        let p = SamplingParams { d_min: 0.02, radius_factor: 0.5, ..SamplingParams::default() };
        let one = assign_radii(&layout_of(&[Point::origin()], 1.0, &p), &p).unwrap();
        assert!((one.nodules[0].radius - 0.01).abs() < 1e-15);

        let p = SamplingParams { radius_factor: 1.0, ..p };
        let pair = [Point::origin(), Point::new(0.02, 0.0, 0.0)];
        let two = assign_radii(&layout_of(&pair, 1.0, &p), &p).unwrap();
        for n in &two.nodules {
            assert!((n.radius - 0.0095).abs() < 1e-15);
        }

        let p = SamplingParams { radius_factor: 0.0, ..p };
        assert!(matches!(
            assign_radii(&layout_of(&pair, 1.0, &p), &p),
            Err(SampleError::NonPositiveRadius { id: 0, neighbor: Some(1), .. })
        ));
    }

    #[test]
    fn crowded_nodules_name_the_pair() {
        let p = SamplingParams { d_min: 0.02, radius_factor: 1.0, ..SamplingParams::default() };
        let pts = [Point::origin(), Point::new(0.1, 0.0, 0.0), Point::new(0.1009, 0.0, 0.0)];
        match assign_radii(&layout_of(&pts, 1.0, &p), &p) {
            Err(SampleError::NonPositiveRadius { id: 1, neighbor: Some(2), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn radii_never_overlap(seed in 0u64..1000, rf in 0.05f64..=1.0) {
            let (plate, shell) = plate_shell(0.3, 6);
            let w = plate.vertices().iter().map(|v| (0.3 + 2.0 * v.y).min(1.0)).collect();
            let density = HeatMap::from_weights(&plate, MapRole::Density, w).unwrap();
            let p = SamplingParams { radius_factor: rf, ..params(0.03, 200, seed) };
            let layout = assign_radii(&sample_nodules(&shell, &density, &p).unwrap(), &p).unwrap();
            for (i, a) in layout.nodules.iter().enumerate() {
                prop_assert!(a.radius > 0.0);
                prop_assert!(a.radius <= rf * local_min_distance(a.local_weight, &p) + 1e-15);
                for b in &layout.nodules[i + 1..] {
                    prop_assert!((a.position - b.position).norm() >= a.radius + b.radius + RADIUS_GAP - 1e-12);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        #[test]
        fn doubling_distance_never_adds_nodules(seed in 0u64..1000) {
            let (plate, shell) = plate_shell(0.5, 4);
            let density = HeatMap::uniform(&plate, MapRole::Density, 1.0).unwrap();
            let fine = sample_nodules(&shell, &density, &params(0.05, 2000, seed)).unwrap();
            let coarse = sample_nodules(&shell, &density, &params(0.10, 2000, seed)).unwrap();
            prop_assert!(coarse.len() <= fine.len());
        }
    }
}
