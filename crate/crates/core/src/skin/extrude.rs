use crate::mesh::{edge_key, Point, TriMesh, Vec3};

use super::{BoundarySpline, SkinError, SubMesh};

/// Closed solid shell: inner surface on the link, outer surface offset along
/// the parent vertex normals, side walls along every boundary edge.
///
/// Vertex layout: `0..n` inner, `n..2n` outer (`n` = cutout vertex count).
/// Face layout: outer faces, then inner faces, then walls.
#[derive(Clone, Debug)]
pub struct SkinShell {
    mesh: TriMesh,
    normals: Vec<Vec3>,
    parent_vertices: Vec<u32>,
    thickness: f64,
    clearance: f64,
    surface_faces: usize,
    splines: Vec<BoundarySpline>,
}

impl SkinShell {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    /// Number of vertices on each surface.
    pub fn surface_vertex_count(&self) -> usize {
        self.normals.len()
    }

    /// Parent mesh vertex of every inner vertex.
    pub fn parent_vertices(&self) -> &[u32] {
        &self.parent_vertices
    }

    /// Parent vertex triple of an outer face.
    pub fn outer_face_parents(&self, face: usize) -> [u32; 3] {
        let n = self.normals.len() as u32;
        self.mesh.faces()[face].map(|v| self.parent_vertices[(v - n) as usize])
    }

    /// Interpolated unit normal at barycentric `bary` of an outer face.
    pub fn outer_normal(&self, face: usize, bary: [f64; 3]) -> Vec3 {
        let n = self.normals.len() as u32;
        let f = self.mesh.faces()[face];
        let v: Vec3 = (0..3).map(|k| self.normals[(f[k] - n) as usize] * bary[k]).sum();
        v.normalize()
    }

    /// Extrusion direction of every inner vertex.
    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn outer_faces(&self) -> std::ops::Range<usize> {
        0..self.surface_faces
    }

    pub fn inner_faces(&self) -> std::ops::Range<usize> {
        self.surface_faces..2 * self.surface_faces
    }

    pub fn wall_faces(&self) -> std::ops::Range<usize> {
        2 * self.surface_faces..self.mesh.face_count()
    }

    pub fn splines(&self) -> &[BoundarySpline] {
        &self.splines
    }

    pub fn set_splines(&mut self, splines: Vec<BoundarySpline>) {
        self.splines = splines;
    }

    /// Enclosed volume (m³).
    pub fn volume(&self) -> f64 {
        self.mesh.signed_volume()
    }
}

/// Extrude `sub` outward by `thickness` along `parent_normals`.
pub fn extrude(sub: &SubMesh, parent_normals: &[Vec3], thickness: f64) -> Result<SkinShell, SkinError> {
    extrude_with_clearance(sub, parent_normals, thickness, 0.0)
}

/// As [`extrude`], with the inner surface lifted `clearance` off the link.
pub fn extrude_with_clearance(
    sub: &SubMesh,
    parent_normals: &[Vec3],
    thickness: f64,
    clearance: f64,
) -> Result<SkinShell, SkinError> {
    if !(thickness > 0.0 && thickness.is_finite()) {
        return Err(SkinError::InvalidThickness(thickness));
    }
    if !(clearance >= 0.0 && clearance.is_finite()) {
        return Err(SkinError::InvalidClearance(clearance));
    }
    let local = sub.mesh();
    let edges = local.edge_faces();
    if let Some((&(a, b), f)) = edges.iter().find(|(_, f)| f.len() > 2) {
        let pv = sub.parent_vertices();
        return Err(SkinError::NonManifoldEdge(pv[a as usize], pv[b as usize], f.len()));
    }
    let n = local.vertex_count();
    let normals: Vec<Vec3> = sub.parent_vertices().iter().map(|&p| parent_normals[p as usize]).collect();
    let mut vertices: Vec<Point> = Vec::with_capacity(2 * n);
    vertices.extend(local.vertices().iter().zip(&normals).map(|(p, nrm)| p + nrm * clearance));
    for i in 0..n {
        vertices.push(vertices[i] + normals[i] * thickness);
    }
    let off = n as u32;
    let mut faces = Vec::with_capacity(2 * local.face_count());
    faces.extend(local.faces().iter().map(|f| f.map(|v| v + off)));
    faces.extend(local.faces().iter().map(|&[a, b, c]| [a, c, b]));
    for f in local.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if edges[&edge_key(a, b)].len() == 1 {
                faces.push([a, b, b + off]);
                faces.push([a, b + off, a + off]);
            }
        }
    }
    Ok(SkinShell {
        mesh: TriMesh::new(vertices, faces)?,
        normals,
        parent_vertices: sub.parent_vertices().to_vec(),
        thickness,
        clearance,
        surface_faces: local.face_count(),
        splines: Vec::new(),
    })
}
