use std::collections::BTreeMap;

use crate::heatmap::HeatMap;
use crate::mesh::{edge_key, triangle_area, MeshError, Point, TriMesh, DEGENERATE_AREA};

use super::SkinError;

/// Selected faces of a parent mesh, re-indexed into a compact local mesh.
#[derive(Clone, Debug)]
pub struct SubMesh {
    parent_faces: Vec<usize>,
    parent_vertices: Vec<u32>,
    mesh: TriMesh,
}

impl SubMesh {
    fn from_faces(parent: &TriMesh, positions: &[Point], parent_faces: Vec<usize>) -> Result<Self, MeshError> {
        let mut used = vec![false; parent.vertex_count()];
        for &f in &parent_faces {
            for &v in &parent.faces()[f] {
                used[v as usize] = true;
            }
        }
        let parent_vertices: Vec<u32> = (0..used.len() as u32).filter(|&v| used[v as usize]).collect();
        let mut local = vec![u32::MAX; used.len()];
        for (i, &p) in parent_vertices.iter().enumerate() {
            local[p as usize] = i as u32;
        }
        let vertices = parent_vertices.iter().map(|&p| positions[p as usize]).collect();
        let faces = parent_faces.iter().map(|&f| parent.faces()[f].map(|v| local[v as usize])).collect();
        Ok(Self { parent_faces, parent_vertices, mesh: TriMesh::new(vertices, faces)? })
    }

    /// Parent face index of every local face.
    pub fn parent_faces(&self) -> &[usize] {
        &self.parent_faces
    }

    /// Parent vertex index of every local vertex (ascending).
    pub fn parent_vertices(&self) -> &[u32] {
        &self.parent_vertices
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn local_vertex(&self, parent_vertex: u32) -> Option<u32> {
        self.parent_vertices.binary_search(&parent_vertex).ok().map(|i| i as u32)
    }

    /// Same faces with moved local vertices. Faces that collapse below the
    /// degenerate-area threshold are dropped along with any vertex left
    /// unreferenced.
    pub fn with_positions(&self, positions: Vec<Point>) -> Result<Self, MeshError> {
        let faces = self.mesh.faces();
        let keep: Vec<usize> = (0..faces.len())
            .filter(|&f| triangle_area(&faces[f].map(|v| positions[v as usize])) >= DEGENERATE_AREA)
            .collect();
        if keep.len() < faces.len() {
            tracing::debug!(dropped = faces.len() - keep.len(), "faces collapsed by boundary snapping");
        }
        let mut used = vec![false; positions.len()];
        for &f in &keep {
            for &v in &faces[f] {
                used[v as usize] = true;
            }
        }
        let mut local = vec![u32::MAX; positions.len()];
        for (next, v) in (0..positions.len()).filter(|&v| used[v]).enumerate() {
            local[v] = next as u32;
        }
        let kept_vertices: Vec<usize> = (0..positions.len()).filter(|&v| local[v] != u32::MAX).collect();
        Ok(Self {
            parent_faces: keep.iter().map(|&f| self.parent_faces[f]).collect(),
            parent_vertices: kept_vertices.iter().map(|&v| self.parent_vertices[v]).collect(),
            mesh: TriMesh::new(
                kept_vertices.iter().map(|&v| positions[v]).collect(),
                keep.iter().map(|&f| faces[f].map(|v| local[v as usize])).collect(),
            )?,
        })
    }
}

/// Faces whose three vertex weights all exceed `cutoff`.
pub fn extract_cutout(mesh: &TriMesh, skin_map: &HeatMap, cutoff: f64) -> Result<SubMesh, SkinError> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(SkinError::InvalidCutoff(cutoff));
    }
    skin_map.ensure_belongs_to(mesh)?;
    let w = skin_map.weights();
    let faces: Vec<usize> = (0..mesh.face_count())
        .filter(|&f| mesh.faces()[f].iter().all(|&v| w[v as usize] > cutoff))
        .collect();
    if faces.is_empty() {
        return Err(SkinError::EmptyCutout(cutoff));
    }
    Ok(SubMesh::from_faces(mesh, mesh.vertices(), faces)?)
}

/// Edge-connected components, ordered by their smallest parent face index.
pub fn components(sub: &SubMesh) -> Vec<SubMesh> {
    let n = sub.mesh.face_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for faces in sub.mesh.edge_faces().values() {
        for w in faces.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in 0..n {
        let root = find(&mut parent, f);
        groups.entry(root).or_default().push(f);
    }
    let positions = parent_positions(sub);
    let parent_mesh_faces = parent_face_table(sub);
    groups
        .into_values()
        .map(|local_faces| {
            let pf: Vec<usize> = local_faces.iter().map(|&f| sub.parent_faces[f]).collect();
            build_component(&positions, &parent_mesh_faces, pf)
        })
        .collect()
}

fn parent_positions(sub: &SubMesh) -> BTreeMap<u32, Point> {
    sub.parent_vertices.iter().zip(sub.mesh.vertices()).map(|(&p, &x)| (p, x)).collect()
}

fn parent_face_table(sub: &SubMesh) -> BTreeMap<usize, [u32; 3]> {
    sub.parent_faces
        .iter()
        .zip(sub.mesh.faces())
        .map(|(&pf, f)| (pf, f.map(|v| sub.parent_vertices[v as usize])))
        .collect()
}

fn build_component(
    positions: &BTreeMap<u32, Point>,
    table: &BTreeMap<usize, [u32; 3]>,
    parent_faces: Vec<usize>,
) -> SubMesh {
    let mut parent_vertices: Vec<u32> = parent_faces.iter().flat_map(|f| table[f]).collect();
    parent_vertices.sort_unstable();
    parent_vertices.dedup();
    let local = |p: u32| parent_vertices.binary_search(&p).expect("component vertex") as u32;
    let faces = parent_faces.iter().map(|f| table[f].map(local)).collect();
    let vertices = parent_vertices.iter().map(|p| positions[p]).collect();
    let mesh = TriMesh::new(vertices, faces).expect("component of a valid submesh is valid");
    SubMesh { parent_faces, parent_vertices, mesh }
}

/// Closed boundary loops of local vertex indices, each following the face
/// winding, sorted by descending perimeter.
pub fn boundary_loops(sub: &SubMesh) -> Result<Vec<Vec<u32>>, SkinError> {
    let edges = sub.mesh.edge_faces();
    if let Some((&(a, b), faces)) = edges.iter().find(|(_, f)| f.len() > 2) {
        return Err(SkinError::NonManifoldEdge(
            sub.parent_vertices[a as usize],
            sub.parent_vertices[b as usize],
            faces.len(),
        ));
    }
    let mut outgoing: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for f in sub.mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if edges[&edge_key(a, b)].len() == 1 {
                outgoing.entry(a).or_default().push(b);
            }
        }
    }
    for targets in outgoing.values_mut() {
        targets.sort_unstable();
    }
    let mut loops = Vec::new();
    while let Some((&start, _)) = outgoing.iter().find(|(_, t)| !t.is_empty()) {
        let mut lp = vec![start];
        let mut current = start;
        loop {
            let targets = outgoing.get_mut(&current).expect("closed boundary");
            let next = targets.remove(0);
            if next == start {
                break;
            }
            lp.push(next);
            current = next;
        }
        loops.push(lp);
    }
    let lengths: Vec<f64> = loops.iter().map(|l| loop_length(&sub.mesh, l)).collect();
    let mut order: Vec<usize> = (0..loops.len()).collect();
    order.sort_by(|&i, &j| lengths[j].total_cmp(&lengths[i]));
    Ok(order.into_iter().map(|i| std::mem::take(&mut loops[i])).collect())
}

/// Perimeter of a closed vertex loop.
pub fn loop_length(mesh: &TriMesh, lp: &[u32]) -> f64 {
    let v = mesh.vertices();
    (0..lp.len()).map(|i| (v[lp[(i + 1) % lp.len()] as usize] - v[lp[i] as usize]).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::MapRole;
    use crate::shapes;
    use proptest::prelude::*;

    fn map(mesh: &TriMesh, w: Vec<f64>) -> HeatMap {
        HeatMap::from_weights(mesh, MapRole::Skin, w).unwrap()
    }

    #[test]
    fn saturated_and_empty_maps() {
        let plate = shapes::grid_plate(1.0, 1.0, 3, 3);
        let full = extract_cutout(&plate, &HeatMap::uniform(&plate, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        assert_eq!(full.parent_faces().len(), plate.face_count());
        let err = extract_cutout(&plate, &HeatMap::uniform(&plate, MapRole::Skin, 0.0).unwrap(), 0.5).unwrap_err();
        assert!(err.to_string().contains("cutout empty at this tolerance"));
    }

    #[test]
    fn two_triangle_strip_selects_one_face() {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
        ];
        let mesh = TriMesh::new(v, vec![[0, 1, 2], [1, 3, 2]]).unwrap();
        let sub = extract_cutout(&mesh, &map(&mesh, vec![0.9, 0.9, 0.9, 0.2]), 0.5).unwrap();
        assert_eq!(sub.parent_faces(), &[0]);
        assert_eq!(sub.parent_vertices(), &[0, 1, 2]);
    }

    #[test]
    fn weight_equal_to_cutoff_is_excluded() {
        let plate = shapes::grid_plate(1.0, 1.0, 1, 1);
        assert!(extract_cutout(&plate, &HeatMap::uniform(&plate, MapRole::Skin, 0.5).unwrap(), 0.5).is_err());
    }

    #[test]
    fn flat_square_has_one_loop_matching_brute_force() {
        let plate = shapes::grid_plate(1.0, 1.0, 4, 4);
        let sub = extract_cutout(&plate, &HeatMap::uniform(&plate, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        let loops = boundary_loops(&sub).unwrap();
        assert_eq!(loops.len(), 1);
        // Brute force: vertices on edges used by exactly one face.
        let mut count: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for f in plate.faces() {
            for k in 0..3 {
                *count.entry(edge_key(f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut expected: Vec<u32> = count.iter().filter(|(_, &c)| c == 1).flat_map(|(&(a, b), _)| [a, b]).collect();
        expected.sort_unstable();
        expected.dedup();
        let mut got = loops[0].clone();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert_eq!(got.len(), 16);
        assert!((loop_length(sub.mesh(), &loops[0]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn loop_follows_face_winding() {
        let plate = shapes::grid_plate(1.0, 1.0, 2, 2);
        let sub = extract_cutout(&plate, &HeatMap::uniform(&plate, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        let lp = &boundary_loops(&sub).unwrap()[0];
        let v = sub.mesh().vertices();
        // Shoelace area is positive for a CCW loop seen from +z.
        let area: f64 = (0..lp.len())
            .map(|i| {
                let (a, b) = (v[lp[i] as usize], v[lp[(i + 1) % lp.len()] as usize]);
                a.x * b.y - b.x * a.y
            })
            .sum();
        assert!(area > 0.0);
    }

    #[test]
    fn annulus_has_two_loops_sphere_has_none() {
        let ring = shapes::annulus(0.1, 0.2, 24, 2);
        let sub = extract_cutout(&ring, &HeatMap::uniform(&ring, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        let loops = boundary_loops(&sub).unwrap();
        assert_eq!(loops.len(), 2);
        assert!(loop_length(sub.mesh(), &loops[0]) > loop_length(sub.mesh(), &loops[1]));
        let sphere = shapes::icosphere(1.0, 1);
        let sub = extract_cutout(&sphere, &HeatMap::uniform(&sphere, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        assert!(boundary_loops(&sub).unwrap().is_empty());
    }

    #[test]
    fn non_manifold_edge_is_named() {
        let v = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, -1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        let mesh = TriMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap();
        let sub = extract_cutout(&mesh, &HeatMap::uniform(&mesh, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
        match boundary_loops(&sub) {
            Err(SkinError::NonManifoldEdge(0, 1, 3)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn components_split_disconnected_patches() {
        let plate = shapes::grid_plate(1.0, 1.0, 4, 1);
        // Keep the two outer cells: vertices x <= 0.25 and x >= 0.75.
        let w = plate.vertices().iter().map(|p| if p.x < 0.3 || p.x > 0.7 { 1.0 } else { 0.0 }).collect();
        let sub = extract_cutout(&plate, &map(&plate, w), 0.5).unwrap();
        let parts = components(&sub);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].parent_faces(), &[0, 1]);
        assert_eq!(parts[1].parent_faces(), &[6, 7]);
        assert!(parts[1].mesh().vertices().iter().all(|p| p.x > 0.7));
    }

    proptest! {
        #[test]
        fn raising_cutoff_never_adds_faces(
            weights in proptest::collection::vec(0.0f64..=1.0, 36),
            lo in 0.0f64..1.0,
            delta in 0.0f64..0.5,
        ) {
            let plate = shapes::grid_plate(1.0, 1.0, 5, 5);
            let m = map(&plate, weights);
            let hi = (lo + delta).min(1.0);
            let low = extract_cutout(&plate, &m, lo).map(|s| s.parent_faces().to_vec()).unwrap_or_default();
            let high = extract_cutout(&plate, &m, hi).map(|s| s.parent_faces().to_vec()).unwrap_or_default();
            prop_assert!(high.iter().all(|f| low.contains(f)));
        }
    }
}
