//! Parametric meshes for fixtures, demos and benchmarks.

use std::collections::BTreeMap;

use crate::mesh::{Point, TriMesh};

/// Flat `width × height` plate in the z = 0 plane with its corner at the
/// origin, split into `nx × ny` cells of two CCW triangles (normal +z).
pub fn grid_plate(width: f64, height: f64, nx: usize, ny: usize) -> TriMesh {
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point::new(width * i as f64 / nx as f64, height * j as f64 / ny as f64, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces).expect("valid plate")
}

/// Closed axis-aligned cube `[0, size]³`, outward winding. Vertex 0 is the
/// origin and lies on the split diagonal of all three faces touching it.
pub fn cube(size: f64) -> TriMesh {
    let s = size;
    let vertices = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(s, 0.0, 0.0),
        Point::new(s, s, 0.0),
        Point::new(0.0, s, 0.0),
        Point::new(0.0, 0.0, s),
        Point::new(s, 0.0, s),
        Point::new(s, s, s),
        Point::new(0.0, s, s),
    ];
    let faces = vec![
        [0, 3, 2],
        [0, 2, 1],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [3, 7, 6],
        [3, 6, 2],
        [0, 4, 7],
        [0, 7, 3],
        [1, 2, 6],
        [1, 6, 5],
    ];
    TriMesh::new(vertices, faces).expect("valid cube")
}

/// Geodesic sphere from a subdivided icosahedron.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point::from(nalgebra::Vector3::new(x, y, z).normalize()))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Point>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize].coords + vertices[b as usize].coords).normalize();
                vertices.push(Point::from(m));
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|p| p * radius).collect();
    TriMesh::new(vertices, faces).expect("valid icosphere")
}

/// Convex patch of a cylinder around the z axis spanning `angle` radians
/// (centered on +x) and `length` along z. Normals face away from the axis.
pub fn cylinder_patch(radius: f64, angle: f64, length: f64, n_around: usize, n_along: usize) -> TriMesh {
    let idx = |i: usize, j: usize| (j * (n_around + 1) + i) as u32;
    let mut vertices = Vec::new();
    for j in 0..=n_along {
        let z = length * j as f64 / n_along as f64;
        for i in 0..=n_around {
            let theta = -angle / 2.0 + angle * i as f64 / n_around as f64;
            vertices.push(Point::new(radius * theta.cos(), radius * theta.sin(), z));
        }
    }
    let mut faces = Vec::new();
    for j in 0..n_along {
        for i in 0..n_around {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces).expect("valid cylinder patch")
}

/// Open V-shaped trough running along +x. The two flanks meet at the
/// bottom line `y = z = 0` with the given interior `opening` angle (radians);
/// each flank is `flank` meters wide. Normals point into the trough, so the
/// surface is concave on its normal side. Cell diagonals are mirrored across
/// the trough so vertex normals on the bottom line bisect the flanks.
pub fn v_groove(opening: f64, flank: f64, length: f64, n_flank: usize, n_along: usize) -> TriMesh {
    let (sin, cos) = (opening / 2.0).sin_cos();
    let profile: Vec<(f64, f64)> = (0..=2 * n_flank)
        .map(|k| {
            if k <= n_flank {
                let s = flank * (n_flank - k) as f64 / n_flank as f64;
                (-s * sin, s * cos)
            } else {
                let s = flank * (k - n_flank) as f64 / n_flank as f64;
                (s * sin, s * cos)
            }
        })
        .collect();
    let np = profile.len();
    let idx = |k: usize, j: usize| (j * np + k) as u32;
    let mut vertices = Vec::new();
    for j in 0..=n_along {
        let x = length * j as f64 / n_along as f64;
        for &(y, z) in &profile {
            vertices.push(Point::new(x, y, z));
        }
    }
    let mut faces = Vec::new();
    for j in 0..n_along {
        for k in 0..np - 1 {
            if k < n_flank {
                faces.push([idx(k, j), idx(k, j + 1), idx(k + 1, j + 1)]);
                faces.push([idx(k, j), idx(k + 1, j + 1), idx(k + 1, j)]);
            } else {
                faces.push([idx(k, j), idx(k, j + 1), idx(k + 1, j)]);
                faces.push([idx(k + 1, j), idx(k, j + 1), idx(k + 1, j + 1)]);
            }
        }
    }
    TriMesh::new(vertices, faces).expect("valid groove")
}

/// Flat ring in the z = 0 plane (normal +z).
pub fn annulus(inner: f64, outer: f64, n_around: usize, n_radial: usize) -> TriMesh {
    let idx = |k: usize, i: usize| (k * n_around + i % n_around) as u32;
    let mut vertices = Vec::new();
    for k in 0..=n_radial {
        let r = inner + (outer - inner) * k as f64 / n_radial as f64;
        for i in 0..n_around {
            let theta = std::f64::consts::TAU * i as f64 / n_around as f64;
            vertices.push(Point::new(r * theta.cos(), r * theta.sin(), 0.0));
        }
    }
    let mut faces = Vec::new();
    for k in 0..n_radial {
        for i in 0..n_around {
            faces.push([idx(k, i), idx(k + 1, i), idx(k + 1, i + 1)]);
            faces.push([idx(k, i), idx(k + 1, i + 1), idx(k, i + 1)]);
        }
    }
    TriMesh::new(vertices, faces).expect("valid annulus")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{validate_mesh, vertex_normals};

    #[test]
    fn closed_shapes_enclose_positive_volume() {
        assert!((cube(2.0).signed_volume() - 8.0).abs() < 1e-12);
        let s = icosphere(1.0, 3);
        assert!(validate_mesh(&s).is_watertight());
        let v = s.signed_volume();
        assert!(v > 4.0 && v < 4.0 * std::f64::consts::PI / 3.0 + 1e-9);
    }

    #[test]
    fn open_shapes_orientation() {
        let cyl = cylinder_patch(0.1, 1.0, 0.2, 8, 4);
        for (v, n) in cyl.vertices().iter().zip(vertex_normals(&cyl).unwrap()) {
            let radial = nalgebra::Vector3::new(v.x, v.y, 0.0).normalize();
            assert!(n.dot(&radial) > 0.99);
        }
        let groove = v_groove(std::f64::consts::FRAC_PI_3, 0.1, 0.2, 3, 2);
        for f in 0..groove.face_count() {
            assert!(groove.face_normal(f).z > 0.0);
        }
        let normals = vertex_normals(&groove).unwrap();
        for (v, n) in groove.vertices().iter().zip(&normals) {
            if v.y == 0.0 && v.z == 0.0 {
                assert!((n - nalgebra::Vector3::z()).norm() < 1e-12);
            }
        }
        let ring = annulus(0.1, 0.2, 16, 2);
        assert_eq!(validate_mesh(&ring).boundary_edge_count, 32);
        assert!((0..ring.face_count()).all(|f| ring.face_normal(f).z > 0.99));
    }
}
