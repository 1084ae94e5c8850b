//! Per-vertex weight maps.
//!
//! Two maps drive generation: the skin map selects where the shell exists,
//! the density map sets how tightly nodules pack. Both are plain `[0, 1]`
//! weights, one per mesh vertex, edited with brushes or explicit writes.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mesh::{Point, TriMesh};

#[derive(Debug, Error, PartialEq)]
pub enum HeatMapError {
    #[error("vertex index {index} out of range for {count} vertices")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("weight {weight} for vertex {index} is outside [0, 1]")]
    WeightOutOfRange { index: usize, weight: f64 },
    #[error("face index {face} out of range for {count} faces")]
    FaceOutOfRange { face: usize, count: usize },
    #[error("invalid barycentric coordinates {0:?}")]
    InvalidBarycentric([f64; 3]),
    #[error("heat map belongs to mesh {found}, expected {expected}")]
    ChecksumMismatch { expected: String, found: String },
    #[error("heat map has {found} weights, mesh has {expected} vertices")]
    CountMismatch { expected: usize, found: usize },
    #[error("sidecar line {line}: {message}")]
    Sidecar { line: usize, message: String },
    #[error("invalid brush: {0}")]
    InvalidBrush(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapRole {
    Skin,
    Density,
}

impl fmt::Display for MapRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapRole::Skin => "skin",
            MapRole::Density => "density",
        })
    }
}

impl FromStr for MapRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skin" => Ok(MapRole::Skin),
            "density" => Ok(MapRole::Density),
            other => Err(format!("unknown map role `{other}`")),
        }
    }
}

/// One weight in `[0, 1]` per vertex of the owning mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatMap {
    mesh_checksum: String,
    role: MapRole,
    weights: Vec<f64>,
}

impl HeatMap {
    pub fn uniform(mesh: &TriMesh, role: MapRole, value: f64) -> Result<Self, HeatMapError> {
        check_weight(0, value)?;
        Ok(Self { mesh_checksum: mesh.checksum(), role, weights: vec![value; mesh.vertex_count()] })
    }

    pub fn from_weights(mesh: &TriMesh, role: MapRole, weights: Vec<f64>) -> Result<Self, HeatMapError> {
        if weights.len() != mesh.vertex_count() {
            return Err(HeatMapError::CountMismatch { expected: mesh.vertex_count(), found: weights.len() });
        }
        for (i, &w) in weights.iter().enumerate() {
            check_weight(i, w)?;
        }
        Ok(Self { mesh_checksum: mesh.checksum(), role, weights })
    }

    pub fn role(&self) -> MapRole {
        self.role
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mesh_checksum(&self) -> &str {
        &self.mesh_checksum
    }

    pub fn with_role(mut self, role: MapRole) -> Self {
        self.role = role;
        self
    }

    /// Errors unless this map was built for `mesh`.
    pub fn ensure_belongs_to(&self, mesh: &TriMesh) -> Result<(), HeatMapError> {
        let expected = mesh.checksum();
        if self.mesh_checksum != expected {
            return Err(HeatMapError::ChecksumMismatch { expected, found: self.mesh_checksum.clone() });
        }
        Ok(())
    }

    /// Adds `strength · falloff(t)` to every vertex inside the brush, where
    /// `t` is the normalized distance from the brush center, then clamps.
    pub fn apply_brush(&self, mesh: &TriMesh, stroke: &BrushStroke) -> Result<HeatMap, HeatMapError> {
        stroke.validate()?;
        let mut out = self.clone();
        for (w, p) in out.weights.iter_mut().zip(mesh.vertices()) {
            if let Some(t) = stroke.normalized_distance(p) {
                *w = (*w + stroke.strength * stroke.falloff.eval(t)).clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }

    /// Overwrites the listed vertices; later entries win on repeats.
    pub fn set_weights(&self, explicit: &[(usize, f64)]) -> Result<HeatMap, HeatMapError> {
        let mut out = self.clone();
        let count = out.weights.len();
        for &(index, weight) in explicit {
            if index >= count {
                return Err(HeatMapError::IndexOutOfRange { index, count });
            }
            check_weight(index, weight)?;
            out.weights[index] = weight;
        }
        Ok(out)
    }

    /// Barycentric interpolation of the face's corner weights.
    pub fn weight_at_point(&self, mesh: &TriMesh, face: usize, barycentric: [f64; 3]) -> Result<f64, HeatMapError> {
        let count = mesh.face_count();
        let f = *mesh.faces().get(face).ok_or(HeatMapError::FaceOutOfRange { face, count })?;
        if barycentric.iter().any(|&b| b.is_nan() || b < 0.0) || (barycentric.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(HeatMapError::InvalidBarycentric(barycentric));
        }
        Ok(self.interpolate(f, barycentric))
    }

    /// Unchecked interpolation for hot loops; the result is clamped to the
    /// corner range so rounding cannot leave `[0, 1]`.
    pub fn interpolate(&self, corners: [u32; 3], barycentric: [f64; 3]) -> f64 {
        let w = corners.map(|c| self.weights[c as usize]);
        let v = w[0] * barycentric[0] + w[1] * barycentric[1] + w[2] * barycentric[2];
        let lo = w[0].min(w[1]).min(w[2]);
        let hi = w[0].max(w[1]).max(w[2]);
        v.clamp(lo, hi)
    }

    /// Sidecar text: a header line followed by one `index weight` pair per
    /// vertex. Weights print in shortest round-trip form.
    pub fn to_sidecar(&self) -> String {
        let mut out = format!("# mesh_sha256:{} role:{} n:{}\n", self.mesh_checksum, self.role, self.weights.len());
        for (i, w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "{i} {w}");
        }
        out
    }

    /// Parses a sidecar and checks it against `mesh`. Vertices not listed
    /// keep weight 0.
    pub fn from_sidecar(text: &str, mesh: &TriMesh) -> Result<HeatMap, HeatMapError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(HeatMapError::Sidecar { line: 1, message: "missing header".into() })?;
        let header_err = |message: &str| HeatMapError::Sidecar { line: 1, message: message.into() };
        let rest = header.strip_prefix('#').ok_or_else(|| header_err("header must start with `#`"))?;
        let (mut checksum, mut role, mut n) = (None, None, None);
        for field in rest.split_whitespace() {
            match field.split_once(':') {
                Some(("mesh_sha256", v)) => checksum = Some(v.to_string()),
                Some(("role", v)) => role = Some(v.parse::<MapRole>().map_err(|e| header_err(&e))?),
                Some(("n", v)) => n = Some(v.parse::<usize>().map_err(|_| header_err("bad count"))?),
                _ => return Err(header_err(&format!("unknown header field `{field}`"))),
            }
        }
        let checksum = checksum.ok_or_else(|| header_err("missing mesh_sha256"))?;
        let role = role.ok_or_else(|| header_err("missing role"))?;
        let n = n.ok_or_else(|| header_err("missing n"))?;
        let expected = mesh.checksum();
        if checksum != expected {
            return Err(HeatMapError::ChecksumMismatch { expected, found: checksum });
        }
        if n != mesh.vertex_count() {
            return Err(HeatMapError::CountMismatch { expected: mesh.vertex_count(), found: n });
        }
        let mut weights = vec![0.0; n];
        for (ln, raw) in lines {
            let line = ln + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let bad = |message: String| HeatMapError::Sidecar { line, message };
            let (i, w) = raw.split_once(char::is_whitespace).ok_or_else(|| bad("expected `index weight`".into()))?;
            let index: usize = i.trim().parse().map_err(|_| bad(format!("bad index `{i}`")))?;
            let weight: f64 = w.trim().parse().map_err(|_| bad(format!("bad weight `{w}`")))?;
            if index >= n {
                return Err(HeatMapError::IndexOutOfRange { index, count: n });
            }
            check_weight(index, weight)?;
            weights[index] = weight;
        }
        Ok(HeatMap { mesh_checksum: checksum, role, weights })
    }

    /// SHA-256 of the sidecar text.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_sidecar().as_bytes()))
    }
}

fn check_weight(index: usize, weight: f64) -> Result<(), HeatMapError> {
    if (0.0..=1.0).contains(&weight) {
        Ok(())
    } else {
        Err(HeatMapError::WeightOutOfRange { index, weight })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum BrushShape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Falloff {
    Constant,
    Linear,
    /// Cubic smoothstep, `1 − (3t² − 2t³)`.
    #[default]
    Smooth,
}

impl Falloff {
    pub fn eval(self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self {
            Falloff::Constant => 1.0,
            Falloff::Linear => 1.0 - t,
            Falloff::Smooth => 1.0 - t * t * (3.0 - 2.0 * t),
        }
    }
}

/// A single additive (positive strength) or subtractive (negative) dab.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrushStroke {
    #[serde(flatten)]
    pub shape: BrushShape,
    pub center: [f64; 3],
    pub strength: f64,
    #[serde(default)]
    pub falloff: Falloff,
}

impl BrushStroke {
    pub fn sphere(center: [f64; 3], radius: f64, strength: f64, falloff: Falloff) -> Self {
        Self { shape: BrushShape::Sphere { radius }, center, strength, falloff }
    }

    pub fn validate(&self) -> Result<(), HeatMapError> {
        let extents_ok = match self.shape {
            BrushShape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
            BrushShape::Box { half_extents } => half_extents.iter().all(|&h| h > 0.0 && h.is_finite()),
        };
        if !extents_ok {
            return Err(HeatMapError::InvalidBrush("extent must be positive".into()));
        }
        if !self.strength.is_finite() || self.center.iter().any(|c| !c.is_finite()) {
            return Err(HeatMapError::InvalidBrush("non-finite center or strength".into()));
        }
        Ok(())
    }

    /// Distance from the center scaled so the brush surface is at 1; `None`
    /// outside the brush. Boxes use the per-axis maximum.
    pub fn normalized_distance(&self, p: &Point) -> Option<f64> {
        let d = [p.x - self.center[0], p.y - self.center[1], p.z - self.center[2]];
        let t = match self.shape {
            BrushShape::Sphere { radius } => (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() / radius,
            BrushShape::Box { half_extents } => (0..3).map(|a| d[a].abs() / half_extents[a]).fold(0.0, f64::max),
        };
        (t <= 1.0).then_some(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use proptest::prelude::*;

    fn plate() -> TriMesh {
        shapes::grid_plate(1.0, 1.0, 4, 4)
    }

    #[test]
    fn zero_strength_is_identity() {
        let mesh = plate();
        let map = HeatMap::uniform(&mesh, MapRole::Skin, 0.3).unwrap();
        let out = map.apply_brush(&mesh, &BrushStroke::sphere([0.5, 0.5, 0.0], 0.4, 0.0, Falloff::Smooth)).unwrap();
        assert_eq!(out, map);
    }

    #[test]
    fn covering_brush_saturates() {
        let mesh = plate();
        let map = HeatMap::uniform(&mesh, MapRole::Skin, 0.0).unwrap();
        let out = map.apply_brush(&mesh, &BrushStroke::sphere([0.5, 0.5, 0.0], 10.0, 1.0, Falloff::Constant)).unwrap();
        assert!(out.weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn add_then_subtract_restores() {
        let mesh = plate();
        let map = HeatMap::uniform(&mesh, MapRole::Density, 0.5).unwrap();
        let add = BrushStroke::sphere([0.2, 0.3, 0.0], 0.5, 0.3, Falloff::Constant);
        let sub = BrushStroke { strength: -0.3, ..add };
        let out = map.apply_brush(&mesh, &add).unwrap().apply_brush(&mesh, &sub).unwrap();
        for (i, (a, b)) in out.weights().iter().zip(map.weights()).enumerate() {
            let raised = map.apply_brush(&mesh, &add).unwrap().weights()[i];
            let inside = add.normalized_distance(&mesh.vertices()[i]).is_some();
            assert!((raised - if inside { 0.8 } else { 0.5 }).abs() < 1e-15);
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn box_brush_and_falloffs() {
        let mesh = plate();
        let map = HeatMap::uniform(&mesh, MapRole::Skin, 0.0).unwrap();
        let stroke = BrushStroke {
            shape: BrushShape::Box { half_extents: [0.26, 0.26, 0.1] },
            center: [0.0, 0.0, 0.0],
            strength: 1.0,
            falloff: Falloff::Linear,
        };
        let out = map.apply_brush(&mesh, &stroke).unwrap();
        // Vertex (0.25, 0) has normalized distance 0.25/0.26.
        assert!((out.weights()[1] - (1.0 - 0.25 / 0.26)).abs() < 1e-12);
        assert_eq!(out.weights()[2], 0.0);
        assert_eq!(Falloff::Smooth.eval(0.0), 1.0);
        assert_eq!(Falloff::Smooth.eval(1.0), 0.0);
        assert!((Falloff::Smooth.eval(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_brush_rejected() {
        let mesh = plate();
        let map = HeatMap::uniform(&mesh, MapRole::Skin, 0.0).unwrap();
        let stroke = BrushStroke::sphere([0.0; 3], 0.0, 1.0, Falloff::Constant);
        assert!(matches!(map.apply_brush(&mesh, &stroke), Err(HeatMapError::InvalidBrush(_))));
    }

    #[test]
    fn set_weights_semantics() {
        let mesh = plate();
        let map = HeatMap::uniform(&mesh, MapRole::Skin, 0.0).unwrap();
        assert_eq!(map.set_weights(&[]).unwrap(), map);
        let once = map.set_weights(&[(0, 0.7)]).unwrap();
        assert_eq!(once.weights()[0], 0.7);
        let twice = map.set_weights(&[(0, 0.7), (0, 0.2)]).unwrap();
        assert_eq!(twice.weights()[0], 0.2);
        assert!(matches!(map.set_weights(&[(999, 0.5)]), Err(HeatMapError::IndexOutOfRange { .. })));
        assert!(matches!(map.set_weights(&[(0, 1.5)]), Err(HeatMapError::WeightOutOfRange { .. })));
    }

    #[test]
    fn weight_at_point_cases() {
        let mesh = plate();
        let f = mesh.faces()[0];
        let map = HeatMap::uniform(&mesh, MapRole::Density, 0.0)
            .unwrap()
            .set_weights(&[(f[2] as usize, 1.0), (f[0] as usize, 0.25)])
            .unwrap();
        assert_eq!(map.weight_at_point(&mesh, 0, [1.0, 0.0, 0.0]).unwrap(), 0.25);
        let third = 1.0 / 3.0;
        let at_centroid = map.weight_at_point(&mesh, 0, [third, third, third]).unwrap();
        assert!((at_centroid - (0.25 + 1.0) / 3.0).abs() < 1e-15);
        let corner_only = HeatMap::uniform(&mesh, MapRole::Density, 0.0).unwrap().set_weights(&[(f[2] as usize, 1.0)]).unwrap();
        assert!((corner_only.weight_at_point(&mesh, 0, [third, third, third]).unwrap() - third).abs() < 1e-15);
        let uniform = HeatMap::uniform(&mesh, MapRole::Density, 0.42).unwrap();
        assert_eq!(uniform.weight_at_point(&mesh, 5, [0.2, 0.3, 0.5]).unwrap(), 0.42);
        assert!(matches!(map.weight_at_point(&mesh, 0, [0.5, 0.6, 0.0]), Err(HeatMapError::InvalidBarycentric(_))));
        assert!(matches!(map.weight_at_point(&mesh, 0, [-0.1, 0.6, 0.5]), Err(HeatMapError::InvalidBarycentric(_))));
    }

    #[test]
    fn sidecar_round_trip_and_checksum_guard() {
        let mesh = plate();
        let map = HeatMap::uniform(&mesh, MapRole::Skin, 0.0)
            .unwrap()
            .apply_brush(&mesh, &BrushStroke::sphere([0.3, 0.3, 0.0], 0.45, 0.8, Falloff::Smooth))
            .unwrap();
        let text = map.to_sidecar();
        assert!(text.starts_with(&format!("# mesh_sha256:{} role:skin n:25\n", mesh.checksum())));
        let back = HeatMap::from_sidecar(&text, &mesh).unwrap();
        assert_eq!(back, map);
        assert_eq!(back.to_sidecar(), text);

        let other = shapes::grid_plate(1.0, 1.0, 4, 5);
        assert!(matches!(HeatMap::from_sidecar(&text, &other), Err(HeatMapError::ChecksumMismatch { .. })));
        let broken = text.replace("\n3 ", "\n3 x");
        assert!(matches!(HeatMap::from_sidecar(&broken, &mesh), Err(HeatMapError::Sidecar { line: 5, .. })));
    }

    fn stroke_strategy() -> impl Strategy<Value = BrushStroke> {
        (0.0..1.0f64, 0.0..1.0f64, 0.05..0.8f64, -2.0..2.0f64, 0..3usize).prop_map(|(x, y, r, s, f)| {
            let falloff = [Falloff::Constant, Falloff::Linear, Falloff::Smooth][f];
            BrushStroke::sphere([x, y, 0.0], r, s, falloff)
        })
    }

    proptest! {
        #[test]
        fn weights_stay_clamped(strokes in proptest::collection::vec(stroke_strategy(), 1..20)) {
            let mesh = plate();
            let mut map = HeatMap::uniform(&mesh, MapRole::Skin, 0.5).unwrap();
            for s in &strokes {
                map = map.apply_brush(&mesh, s).unwrap();
            }
            prop_assert!(map.weights().iter().all(|w| (0.0..=1.0).contains(w)));
        }

        #[test]
        fn interpolation_is_bounded(face in 0usize..32, a in 0.0..1.0f64, b in 0.0..1.0f64, seed in 0u64..1000) {
            let mesh = plate();
            let weights: Vec<f64> = (0..mesh.vertex_count()).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 / 100.0).collect();
            let map = HeatMap::from_weights(&mesh, MapRole::Density, weights).unwrap();
            let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            let bary = [a, b, 1.0 - a - b];
            let w = map.weight_at_point(&mesh, face, bary).unwrap();
            let corners = mesh.faces()[face].map(|c| map.weights()[c as usize]);
            prop_assert!(w >= corners.iter().cloned().fold(f64::INFINITY, f64::min));
            prop_assert!(w <= corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}
