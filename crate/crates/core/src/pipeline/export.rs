use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::mesh::TriMesh;

use super::manifest::{sha256_hex, stl_bytes, SensorManifest};
use super::{PipelineError, RunOutput, Stage};

/// One output file, held in memory until written.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn sha256(&self) -> String {
        sha256_hex(&self.bytes)
    }
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

impl RunOutput {
    /// All artifacts in a fixed order.
    pub fn artifacts(&self) -> Vec<Artifact> {
        let mut out = Vec::new();
        for u in &self.units {
            let n = &u.name;
            out.push(Artifact { name: format!("{n}_body.stl"), bytes: stl_bytes(u.shell.mesh()) });
            out.push(Artifact { name: format!("{n}_conductive.stl"), bytes: stl_bytes(&u.conductive) });
            out.push(Artifact { name: format!("{n}_manifest.json"), bytes: u.manifest.to_json().into_bytes() });
            out.push(Artifact { name: format!("{n}_splines.json"), bytes: json_bytes(&u.shell.splines()) });
        }
        if let Some(d) = &self.optimized_density {
            out.push(Artifact { name: "density_optimized.hmap".into(), bytes: d.to_sidecar().into_bytes() });
        }
        out.push(Artifact { name: "report.json".into(), bytes: json_bytes(&self.report) });
        out
    }
}

/// Write every artifact into `dir`, creating it if needed.
pub fn write_artifacts(output: &RunOutput, dir: &Path) -> Result<Vec<Artifact>, PipelineError> {
    let io = |e: std::io::Error, p: &Path| PipelineError::new(Stage::Export, format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let artifacts = output.artifacts();
    for a in &artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(|e| io(e, &path))?;
    }
    Ok(artifacts)
}

/// Summary row for a printed unit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Characterization {
    pub unit: String,
    pub nodules: usize,
    pub volume_cm3: f64,
    pub total_resistance_kohm: f64,
    pub average_radius_mm: f64,
}

/// Volume is measured on `body`; the rest comes from the manifest.
pub fn characterize(manifest: &SensorManifest, body: &TriMesh) -> Characterization {
    let n = manifest.nodules.len();
    let mean_r = if n == 0 { 0.0 } else { manifest.nodules.iter().map(|x| x.radius).sum::<f64>() / n as f64 };
    Characterization {
        unit: manifest.unit.clone(),
        nodules: n,
        volume_cm3: body.signed_volume().abs() * 1e6,
        total_resistance_kohm: manifest.total_resistance,
        average_radius_mm: mean_r * 1000.0,
    }
}

pub fn render_characterization(rows: &[Characterization]) -> String {
    let mut s = format!("{:<16} {:>8} {:>12} {:>12} {:>12}\n", "Unit", "Nodules", "Volume cm3", "Total kOhm", "Radius mm");
    for r in rows {
        s.push_str(&format!(
            "{:<16} {:>8} {:>12.2} {:>12.1} {:>12.2}\n",
            r.unit, r.nodules, r.volume_cm3, r.total_resistance_kohm, r.average_radius_mm
        ));
    }
    s
}
