//! Indexed triangle meshes of robot links.
//!
//! A [`TriMesh`] is immutable once built: vertex positions in meters and
//! counter-clockwise triangles. Everything downstream (heat maps, cutouts,
//! sampling) references vertices by index, so the loader welds duplicated
//! vertices before anything else sees the mesh.

mod io;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Point3, Vector3};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::{
    load_mesh, parse_mesh, save_obj, save_stl, write_obj, write_stl, LoadOptions, LoadReport,
    LoadedMesh, MeshFormat,
};

pub type Point = Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Faces with an area below this (m²) are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Default vertex weld tolerance in meters.
pub const DEFAULT_WELD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported mesh format `{0}`")]
    UnsupportedFormat(String),
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("face {face} is degenerate (area {area:e} m²)")]
    DegenerateFace { face: usize, area: f64 },
    #[error("vertex {0} has no incident face")]
    IsolatedVertex(usize),
}

/// Indexed triangle mesh with CCW winding.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    faces: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Builds a mesh, rejecting out-of-range indices and degenerate faces.
    pub fn new(vertices: Vec<Point>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let count = vertices.len();
        for (fi, face) in faces.iter().enumerate() {
            if let Some(&index) = face.iter().find(|&&i| i as usize >= count) {
                return Err(MeshError::IndexOutOfRange { face: fi, index, count });
            }
            let area = triangle_area(&[
                vertices[face[0] as usize],
                vertices[face[1] as usize],
                vertices[face[2] as usize],
            ]);
            if area < DEGENERATE_AREA || face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::DegenerateFace { face: fi, area });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Point; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Unit normal of a face following the right-hand rule.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, face: usize) -> f64 {
        triangle_area(&self.triangle(face))
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume by the divergence theorem. Only meaningful for
    /// closed meshes; positive when faces wind outward.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0] as usize].coords;
                let b = self.vertices[f[1] as usize].coords;
                let c = self.vertices[f[2] as usize].coords;
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Undirected edges mapped to the faces that contain them.
    pub fn edge_faces(&self) -> BTreeMap<(u32, u32), Vec<usize>> {
        edge_incidence(&self.faces)
    }

    /// For each face, the faces sharing at least one edge with it (sorted).
    pub fn face_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adjacency = vec![Vec::new(); self.faces.len()];
        for faces in self.edge_faces().values() {
            for &a in faces {
                for &b in faces {
                    if a != b {
                        adjacency[a].push(b);
                    }
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        adjacency
    }

    /// SHA-256 over the little-endian vertex coordinates followed by the face
    /// indices. Any change in geometry or connectivity changes the digest.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.coords.iter() {
                hasher.update(c.to_le_bytes());
            }
        }
        hasher.update((self.faces.len() as u64).to_le_bytes());
        for f in &self.faces {
            for i in f {
                hasher.update(i.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

pub fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn edge_incidence(faces: &[[u32; 3]]) -> BTreeMap<(u32, u32), Vec<usize>> {
    let mut map: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            map.entry(edge_key(f[k], f[(k + 1) % 3])).or_default().push(fi);
        }
    }
    map
}

/// Area-weighted vertex normals.
///
/// Each face contributes its unnormalized cross product (twice its area times
/// its unit normal) to its three corners; the sums are then normalized.
pub fn vertex_normals(mesh: &TriMesh) -> Result<Vec<Vec3>, MeshError> {
    let mut sums = vec![Vec3::zeros(); mesh.vertex_count()];
    let mut touched = vec![false; mesh.vertex_count()];
    for f in mesh.faces() {
        let [a, b, c] = [
            mesh.vertices[f[0] as usize],
            mesh.vertices[f[1] as usize],
            mesh.vertices[f[2] as usize],
        ];
        let n = (b - a).cross(&(c - a));
        for &i in f {
            sums[i as usize] += n;
            touched[i as usize] = true;
        }
    }
    sums.into_iter()
        .zip(touched)
        .enumerate()
        .map(|(i, (n, used))| {
            let len = n.norm();
            if !used || len == 0.0 {
                Err(MeshError::IsolatedVertex(i))
            } else {
                Ok(n / len)
            }
        })
        .collect()
}

/// Mesh health summary. Reporting only; never modifies the mesh.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct MeshReport {
    pub is_manifold: bool,
    pub boundary_edge_count: usize,
    pub non_manifold_edge_count: usize,
    pub duplicate_vertex_count: usize,
    pub degenerate_face_count: usize,
}

impl MeshReport {
    pub fn is_watertight(&self) -> bool {
        self.is_manifold && self.boundary_edge_count == 0
    }
}

pub fn validate_mesh(mesh: &TriMesh) -> MeshReport {
    validate_raw(mesh.vertices(), mesh.faces())
}

/// Same as [`validate_mesh`] for raw arrays that may not satisfy the
/// [`TriMesh`] invariants. Faces with out-of-range indices count as degenerate.
pub fn validate_raw(vertices: &[Point], faces: &[[u32; 3]]) -> MeshReport {
    let n = vertices.len();
    let mut degenerate = 0;
    let mut valid = Vec::with_capacity(faces.len());
    for f in faces {
        if f.iter().any(|&i| i as usize >= n) {
            degenerate += 1;
            continue;
        }
        let t = [vertices[f[0] as usize], vertices[f[1] as usize], vertices[f[2] as usize]];
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] || triangle_area(&t) < DEGENERATE_AREA {
            degenerate += 1;
        }
        valid.push(*f);
    }
    let edges = edge_incidence(&valid);
    let boundary = edges.values().filter(|f| f.len() == 1).count();
    let non_manifold = edges.values().filter(|f| f.len() > 2).count();
    let (unique, _) = weld(vertices, DEFAULT_WELD_TOLERANCE);
    MeshReport {
        is_manifold: non_manifold == 0,
        boundary_edge_count: boundary,
        non_manifold_edge_count: non_manifold,
        duplicate_vertex_count: n - unique.len(),
        degenerate_face_count: degenerate,
    }
}

/// Merges vertices closer than `tolerance`. Returns the unique positions and a
/// map from input index to output index. The first occurrence of a cluster is
/// kept, so the result does not depend on hashing order.
pub fn weld(vertices: &[Point], tolerance: f64) -> (Vec<Point>, Vec<u32>) {
    let mut unique: Vec<Point> = Vec::new();
    let mut remap = Vec::with_capacity(vertices.len());
    if tolerance <= 0.0 {
        let mut seen: HashMap<[u64; 3], u32> = HashMap::new();
        for v in vertices {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            let idx = *seen.entry(key).or_insert_with(|| {
                unique.push(*v);
                (unique.len() - 1) as u32
            });
            remap.push(idx);
        }
        return (unique, remap);
    }
    let cell = |v: &Point| -> [i64; 3] {
        [
            (v.x / tolerance).floor() as i64,
            (v.y / tolerance).floor() as i64,
            (v.z / tolerance).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    let tol2 = tolerance * tolerance;
    for v in vertices {
        let c = cell(v);
        let mut found: Option<u32> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &i in bucket {
                        if (unique[i as usize] - v).norm_squared() <= tol2 {
                            found = Some(found.map_or(i, |j| j.min(i)));
                        }
                    }
                }
            }
        }
        let idx = match found {
            Some(i) => i,
            None => {
                unique.push(*v);
                let i = (unique.len() - 1) as u32;
                grid.entry(c).or_default().push(i);
                i
            }
        };
        remap.push(idx);
    }
    (unique, remap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point::new(x, y, z)
    }

    #[test]
    fn rejects_degenerate_and_out_of_range_faces() {
        let v = vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(2.0, 0.0, 0.0)];
        assert!(matches!(
            TriMesh::new(v.clone(), vec![[0, 1, 2]]),
            Err(MeshError::DegenerateFace { face: 0, .. })
        ));
        assert!(matches!(
            TriMesh::new(v.clone(), vec![[0, 1, 7]]),
            Err(MeshError::IndexOutOfRange { index: 7, .. })
        ));
        assert!(matches!(TriMesh::new(v, vec![]), Err(MeshError::Empty)));
    }

    #[test]
    fn closed_cube_is_watertight() {
        let report = validate_mesh(&shapes::cube(1.0));
        assert!(report.is_manifold);
        assert_eq!(report.boundary_edge_count, 0);
        assert_eq!(report.degenerate_face_count, 0);
        assert_eq!(report.duplicate_vertex_count, 0);
    }

    #[test]
    fn single_triangle_has_three_boundary_edges() {
        let mesh = TriMesh::new(
            vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(validate_mesh(&mesh).boundary_edge_count, 3);
    }

    #[test]
    fn two_triangles_sharing_an_edge() {
        let v = vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(1.0, 1.0, 0.0), p(0.0, 1.0, 0.0)];
        let faces = vec![[0, 1, 2], [0, 2, 3]];
        let report = validate_mesh(&TriMesh::new(v, faces.clone()).unwrap());

        // Brute-force edge incidence: count how many faces contain each
        // unordered vertex pair.
        let mut boundary = 0;
        for a in 0..4u32 {
            for b in (a + 1)..4u32 {
                let n = faces.iter().filter(|f| f.contains(&a) && f.contains(&b)).count();
                if n == 1 {
                    boundary += 1;
                }
            }
        }
        assert_eq!(boundary, 4);
        assert!(report.is_manifold);
        assert_eq!(report.boundary_edge_count, boundary);
    }

    #[test]
    fn non_manifold_fan_is_reported() {
        let v = vec![
            p(0.0, 0.0, 0.0),
            p(1.0, 0.0, 0.0),
            p(0.0, 1.0, 0.0),
            p(0.0, -1.0, 0.0),
            p(0.0, 0.0, 1.0),
        ];
        let mesh = TriMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap();
        let report = validate_mesh(&mesh);
        assert!(!report.is_manifold);
        assert_eq!(report.non_manifold_edge_count, 1);
    }

    #[test]
    fn flat_square_normals_point_up() {
        let normals = vertex_normals(&shapes::grid_plate(1.0, 1.0, 1, 1)).unwrap();
        for n in normals {
            assert!((n - Vec3::z()).norm() < 1e-15);
        }
    }

    #[test]
    fn cube_corner_normal_is_diagonal() {
        let cube = shapes::cube(1.0);
        let normals = vertex_normals(&cube).unwrap();
        // Oracle: vertex 0 sits on the split diagonal of its three faces, so
        // each face contributes its full unit area; the weighted average is the
        // mean of the three axis normals.
        let expected = -Vec3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        assert!((normals[0] - expected).norm() < 1e-12, "{:?}", normals[0]);
        for n in &normals {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let sphere = shapes::icosphere(0.3, 3);
        let normals = vertex_normals(&sphere).unwrap();
        for (v, n) in sphere.vertices().iter().zip(&normals) {
            let radial = v.coords.normalize();
            assert!((n - radial).norm() < 2e-2);
        }
    }

    #[test]
    fn isolated_vertex_is_named() {
        let v = vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(5.0, 5.0, 5.0)];
        let mesh = TriMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(vertex_normals(&mesh), Err(MeshError::IsolatedVertex(3))));
    }

    #[test]
    fn normals_are_invariant_under_reindexing() {
        let sphere = shapes::icosphere(1.0, 2);
        let n = sphere.vertex_count();
        // Reverse the vertex order and remap faces.
        let perm: Vec<u32> = (0..n as u32).rev().collect();
        let mut verts = vec![Point::origin(); n];
        for (old, &new) in perm.iter().enumerate() {
            verts[new as usize] = sphere.vertices()[old];
        }
        let faces = sphere
            .faces()
            .iter()
            .map(|f| [perm[f[0] as usize], perm[f[1] as usize], perm[f[2] as usize]])
            .collect();
        let shuffled = TriMesh::new(verts, faces).unwrap();
        let a = vertex_normals(&sphere).unwrap();
        let b = vertex_normals(&shuffled).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            assert!((a[old] - b[new as usize]).norm() < 1e-12);
        }
    }

    #[test]
    fn weld_merges_within_tolerance() {
        let v = vec![p(0.0, 0.0, 0.0), p(0.0, 0.0, 5e-7), p(1.0, 0.0, 0.0), p(0.0, 0.0, 0.0)];
        let (unique, remap) = weld(&v, 1e-6);
        assert_eq!(unique.len(), 2);
        assert_eq!(remap, vec![0, 0, 1, 0]);
    }

    #[test]
    fn checksum_changes_with_geometry() {
        let a = shapes::grid_plate(1.0, 1.0, 2, 2);
        let mut verts = a.vertices().to_vec();
        verts[0].x += 1e-9;
        let b = TriMesh::new(verts, a.faces().to_vec()).unwrap();
        assert_ne!(a.checksum(), b.checksum());
        assert_eq!(a.checksum(), a.clone().checksum());
    }
}
