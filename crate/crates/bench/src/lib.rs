//! Fixtures shared by the benchmarks in `benches/`.

use skinkit::mesh::{vertex_normals, LoadReport};
use skinkit::pipeline::{Inputs, PipelineConfig};
use skinkit::sampler::{assign_radii, sample_nodules, NoduleLayout, SamplingParams};
use skinkit::skin::{extract_cutout, extrude, SkinShell};
use skinkit::{shapes, HeatMap, MapRole, TriMesh};

/// Flat square link of `size` metres with `cells` × `cells` quads.
pub fn plate(size: f64, cells: usize) -> TriMesh {
    shapes::grid_plate(size, size, cells, cells)
}

/// Whole-surface shell of the given thickness.
pub fn shell(mesh: &TriMesh, thickness: f64) -> SkinShell {
    let sub = extract_cutout(mesh, &HeatMap::uniform(mesh, MapRole::Skin, 1.0).unwrap(), 0.5).unwrap();
    extrude(&sub, &vertex_normals(mesh).unwrap(), thickness).unwrap()
}

pub fn layout(shell: &SkinShell, mesh: &TriMesh, params: &SamplingParams) -> NoduleLayout {
    let density = HeatMap::uniform(mesh, MapRole::Density, 1.0).unwrap();
    assign_radii(&sample_nodules(shell, &density, params).unwrap(), params).unwrap()
}

/// Uniform maps on a plate, ready for `pipeline::run`.
pub fn plate_inputs(size: f64, cells: usize) -> Inputs {
    let mesh = plate(size, cells);
    Inputs {
        load_report: LoadReport::default(),
        skin: HeatMap::uniform(&mesh, MapRole::Skin, 1.0).unwrap(),
        density: HeatMap::uniform(&mesh, MapRole::Density, 1.0).unwrap(),
        contacts: None,
        mesh,
    }
}

pub fn plate_config(d_min: f64) -> PipelineConfig {
    let mut c = PipelineConfig::from_toml("[mesh]\npath = 'plate.obj'\n").unwrap();
    c.sampling.d_min = d_min;
    c.shell.thickness = 0.004;
    c
}
