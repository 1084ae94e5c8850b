use std::collections::HashMap;

use rayon::prelude::*;

use crate::geom::{triangles_intersect, Aabb};
use crate::mesh::TriMesh;

use super::SkinShell;

/// Indices `(i, j)` with `i < j` of two intersecting faces.
pub type IntersectionPair = (usize, usize);

/// Cells per axis above which a triangle is tested by a linear scan
/// instead of through the hash.
const MAX_CELLS_PER_AXIS: i64 = 64;

/// Intersecting pairs among faces that share no vertex. Empty means the
/// shell is printable.
pub fn detect_self_intersections(shell: &SkinShell) -> Vec<IntersectionPair> {
    mesh_self_intersections(shell.mesh())
}

/// Self-intersections of an arbitrary mesh, sorted.
pub fn mesh_self_intersections(mesh: &TriMesh) -> Vec<IntersectionPair> {
    let n = mesh.face_count();
    if n < 2 {
        return Vec::new();
    }
    let tris: Vec<_> = (0..n).map(|f| mesh.triangle(f)).collect();
    let boxes: Vec<Aabb> = tris.iter().map(|t| Aabb::of(t)).collect();
    let scene = Aabb::of(mesh.vertices());
    let pad = 1e-9 * scene.extent().norm();
    let mean_extent = boxes.iter().map(|b| b.extent().max()).sum::<f64>() / n as f64;
    let cell = mean_extent.max(scene.extent().max() / 1024.0).max(f64::MIN_POSITIVE);

    let range = |b: &Aabb| {
        let lo = (b.min.coords.add_scalar(-pad) / cell).map(|x| x.floor() as i64);
        let hi = (b.max.coords.add_scalar(pad) / cell).map(|x| x.floor() as i64);
        (lo, hi)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut oversized = Vec::new();
    for (f, b) in boxes.iter().enumerate() {
        let (lo, hi) = range(b);
        if (hi - lo).max() >= MAX_CELLS_PER_AXIS {
            oversized.push(f);
            continue;
        }
        for x in lo.x..=hi.x {
            for y in lo.y..=hi.y {
                for z in lo.z..=hi.z {
                    grid.entry((x, y, z)).or_default().push(f);
                }
            }
        }
    }

    let faces = mesh.faces();
    let shares_vertex = |i: usize, j: usize| faces[i].iter().any(|v| faces[j].contains(v));
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut cand: Vec<usize> = if oversized.contains(&i) {
                (i + 1..n).collect()
            } else {
                let (lo, hi) = range(&boxes[i]);
                let mut c = Vec::new();
                for x in lo.x..=hi.x {
                    for y in lo.y..=hi.y {
                        for z in lo.z..=hi.z {
                            if let Some(list) = grid.get(&(x, y, z)) {
                                c.extend(list.iter().copied().filter(|&j| j > i));
                            }
                        }
                    }
                }
                c.extend(oversized.iter().copied().filter(|&j| j > i));
                c
            };
            cand.sort_unstable();
            cand.dedup();
            cand.into_iter()
                .filter(|&j| {
                    boxes[i].overlaps(&boxes[j], pad) && !shares_vertex(i, j) && triangles_intersect(&tris[i], &tris[j])
                })
                .map(|j| (i, j))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::{HeatMap, MapRole};
    use crate::geom::{closest_on_triangle, segment_segment_distance};
    use crate::mesh::{vertex_normals, Point, Vec3};
    use crate::shapes;
    use crate::skin::{extract_cutout, extrude};
    use proptest::prelude::*;

    /// Separating-axis test, used as an independent oracle.
    fn sat_intersect(a: &[Point; 3], b: &[Point; 3]) -> bool {
        let ea = [a[1] - a[0], a[2] - a[1], a[0] - a[2]];
        let eb = [b[1] - b[0], b[2] - b[1], b[0] - b[2]];
        let na = ea[0].cross(&ea[1]);
        let nb = eb[0].cross(&eb[1]);
        let mut axes: Vec<Vec3> = vec![na, nb];
        for x in &ea {
            for y in &eb {
                axes.push(x.cross(y));
            }
        }
        if na.cross(&nb).norm() <= 1e-12 * na.norm() * nb.norm() {
            axes.extend(ea.iter().map(|e| na.cross(e)));
            axes.extend(eb.iter().map(|e| nb.cross(e)));
        }
        for axis in axes {
            if axis.norm() < 1e-14 {
                continue;
            }
            let pa = a.map(|p| axis.dot(&p.coords));
            let pb = b.map(|p| axis.dot(&p.coords));
            let (a0, a1) = (pa.iter().cloned().fold(f64::INFINITY, f64::min), pa.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            let (b0, b1) = (pb.iter().cloned().fold(f64::INFINITY, f64::min), pb.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
        true
    }

    fn brute_force(mesh: &TriMesh) -> Vec<IntersectionPair> {
        let f = mesh.faces();
        let mut out = Vec::new();
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                if f[i].iter().any(|v| f[j].contains(v)) {
                    continue;
                }
                if sat_intersect(&mesh.triangle(i), &mesh.triangle(j)) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Minimum distance between two triangles (edge-edge and vertex-face).
    fn triangle_distance(a: &[Point; 3], b: &[Point; 3]) -> f64 {
        let mut d = f64::INFINITY;
        for i in 0..3 {
            for j in 0..3 {
                d = d.min(segment_segment_distance(&a[i], &a[(i + 1) % 3], &b[j], &b[(j + 1) % 3]));
            }
            d = d.min((closest_on_triangle(&a[i], b).0 - a[i]).norm());
            d = d.min((closest_on_triangle(&b[i], a).0 - b[i]).norm());
        }
        d
    }

    /// The 60° groove puts offset wall edges exactly through vertices of the
    /// opposite flank; on such touching pairs the two tests may round either
    /// way. Every disagreement must be one of them.
    fn assert_agree_up_to_touching(mesh: &TriMesh, a: &[IntersectionPair], b: &[IntersectionPair]) {
        let scale = Aabb::of(mesh.vertices()).extent().norm();
        for &(i, j) in a.iter().filter(|p| !b.contains(p)).chain(b.iter().filter(|p| !a.contains(p))) {
            let d = triangle_distance(&mesh.triangle(i), &mesh.triangle(j));
            assert!(d < 1e-12 * scale, "pair ({i}, {j}) disagrees at distance {d}");
        }
    }

    fn shell_of(mesh: &TriMesh, thickness: f64) -> SkinShell {
        let sub = extract_cutout(mesh, &HeatMap::uniform(mesh, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        extrude(&sub, &vertex_normals(mesh).unwrap(), thickness).unwrap()
    }

    #[test]
    fn convex_patch_is_clean() {
        let patch = shapes::cylinder_patch(0.05, 1.2, 0.1, 24, 6);
        let shell = shell_of(&patch, 0.005);
        assert!(detect_self_intersections(&shell).is_empty());
        assert!(brute_force(shell.mesh()).is_empty());
    }

    #[test]
    fn deep_groove_overlaps_and_thin_groove_does_not() {
        let (flank, opening) = (0.05, std::f64::consts::FRAC_PI_3);
        let half_width = flank * (opening / 2.0).sin();
        let groove = shapes::v_groove(opening, flank, 0.1, 5, 4);
        let thick = shell_of(&groove, 1.3 * half_width);
        let found = detect_self_intersections(&thick);
        assert!(!found.is_empty());
        assert_agree_up_to_touching(thick.mesh(), &found, &brute_force(thick.mesh()));
        let thin = shell_of(&groove, 0.12 * half_width);
        assert!(detect_self_intersections(&thin).is_empty());
        assert!(brute_force(thin.mesh()).is_empty());
    }

    #[test]
    fn crossing_sheets_are_found() {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.2, 0.2, -0.5),
            Point::new(0.3, 0.2, 0.5),
            Point::new(0.2, 0.3, 0.5),
        ];
        let mesh = TriMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        assert_eq!(mesh_self_intersections(&mesh), vec![(0, 1)]);
    }

    fn soup() -> impl Strategy<Value = TriMesh> {
        proptest::collection::vec(
            ((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), proptest::collection::vec((-0.15f64..0.15, -0.15f64..0.15, -0.15f64..0.15), 2)),
            2..60,
        )
        .prop_filter_map("degenerate", |tris| {
            let mut v = Vec::new();
            let mut f = Vec::new();
            for (k, ((x, y, z), d)) in tris.into_iter().enumerate() {
                let c = Point::new(x, y, z);
                v.push(c);
                v.push(c + Vec3::new(d[0].0, d[0].1, d[0].2));
                v.push(c + Vec3::new(d[1].0, d[1].1, d[1].2));
                let b = 3 * k as u32;
                f.push([b, b + 1, b + 2]);
            }
            TriMesh::new(v, f).ok()
        })
    }

    proptest! {
        #[test]
        fn hashed_detection_matches_all_pairs(mesh in soup()) {
            prop_assert_eq!(mesh_self_intersections(&mesh), brute_force(&mesh));
        }
    }
}
