//! Tactile skin design for robot links: paint where skin goes and how dense
//! its sensors are, then generate a printable shell with embedded sensing
//! nodules and a serial resistive chain that tells them apart.

pub mod chain;
pub mod contact;
pub mod geom;
pub mod heatmap;
pub mod mesh;
pub mod pipeline;
pub mod sampler;
pub mod shapes;
pub mod skin;
pub mod snr;

pub use chain::{CalibrationTable, ChainDesign, ChainError, ChainOptions, FilamentSpec, RouteOptions};
pub use contact::{ContactError, ContactEvent, ContactHistogram, HeuristicParams, SweepTrajectory};
pub use heatmap::{BrushShape, BrushStroke, Falloff, HeatMap, HeatMapError, MapRole};
pub use mesh::{MeshError, MeshFormat, Point, TriMesh, Vec3};
pub use pipeline::{PipelineConfig, PipelineError, RunOutput, SensorManifest, Stage};
pub use sampler::{Nodule, NoduleLayout, SampleError, SamplingParams};
pub use skin::{BoundarySpline, SkinError, SkinShell, SubMesh};
pub use snr::{CaptureTrace, Protocol, SnrClass, SnrError, SnrReport};
