//! Skin heat map to printable shell: cutout, boundary smoothing, extrusion
//! and self-intersection detection.

mod cutout;
mod extrude;
mod intersect;
mod spline;

pub use cutout::{boundary_loops, components, extract_cutout, loop_length, SubMesh};
pub use extrude::{extrude, extrude_with_clearance, SkinShell};
pub use intersect::{detect_self_intersections, mesh_self_intersections, IntersectionPair};
pub use spline::{smooth_boundary, smooth_cutout, BoundarySpline, MIN_RESAMPLED};

use crate::heatmap::HeatMapError;
use crate::mesh::MeshError;

#[derive(Debug, thiserror::Error)]
pub enum SkinError {
    #[error("cutout empty at this tolerance ({0})")]
    EmptyCutout(f64),
    #[error("cutoff tolerance {0} outside [0, 1]")]
    InvalidCutoff(f64),
    #[error("non-manifold edge ({0}, {1}) shared by {2} faces")]
    NonManifoldEdge(u32, u32, usize),
    #[error("boundary loop has {0} vertices, at least 4 required")]
    LoopTooShort(usize),
    #[error("resample ratio {0} outside (0, 1]")]
    InvalidResampleRatio(f64),
    #[error("thickness must be positive, got {0}")]
    InvalidThickness(f64),
    #[error("clearance must be non-negative, got {0}")]
    InvalidClearance(f64),
    #[error("boundary loop is not simple at vertex {0}")]
    TangledBoundary(u32),
    #[error(transparent)]
    HeatMap(#[from] HeatMapError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}
