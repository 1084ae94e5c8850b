use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{CalibrationTable, ChainDesign, ChainOptions, FilamentSpec};
use crate::heatmap::HeatMap;
use crate::mesh::{write_stl, Point, TriMesh, Vec3};
use crate::sampler::{NoduleLayout, SamplingParams};
use crate::skin::SkinShell;

use super::{OptimizationConfig, PipelineConfig, ShellParams, TOOL_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestNodule {
    pub id: usize,
    pub position: Point,
    pub normal: Vec3,
    pub radius: f64,
    /// Resistance from the chain start to this nodule (kΩ).
    pub cumulative_resistance: f64,
}

/// Every numeric parameter that shaped the unit. Paths are left out so the
/// manifest does not depend on where inputs live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParameters {
    pub shell: ShellParams,
    pub sampling: SamplingParams,
    pub optimization: Option<OptimizationConfig>,
    pub filament: FilamentSpec,
    pub chain: ChainOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorManifest {
    pub unit: String,
    pub tool_version: String,
    pub mesh_sha256: String,
    pub skin_map_sha256: String,
    pub density_map_sha256: String,
    pub layout_sha256: String,
    /// SHA-256 of the exported body STL bytes.
    pub body_stl_sha256: String,
    pub nodule_count: usize,
    pub nodules: Vec<ManifestNodule>,
    pub chain_order: Vec<usize>,
    pub segment_resistances: Vec<f64>,
    pub total_resistance: f64,
    pub calibration: CalibrationTable,
    pub shell_volume_cm3: f64,
    pub parameters: GenerationParameters,
}

pub(crate) fn stl_bytes(mesh: &TriMesh) -> Vec<u8> {
    let mut buf = Vec::new();
    write_stl(mesh, &mut buf).expect("writing to memory");
    buf
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl SensorManifest {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        unit: &str,
        config: &PipelineConfig,
        mesh: &TriMesh,
        skin: &HeatMap,
        density: &HeatMap,
        shell: &SkinShell,
        layout: &NoduleLayout,
        design: &ChainDesign,
        calibration: &CalibrationTable,
    ) -> Self {
        let mut nodules: Vec<ManifestNodule> = layout
            .nodules
            .iter()
            .map(|n| {
                let k = design.order.iter().position(|&id| id == n.id).expect("every nodule is chained");
                ManifestNodule {
                    id: n.id,
                    position: n.position,
                    normal: n.normal,
                    radius: n.radius,
                    cumulative_resistance: design.cumulative_resistances[k],
                }
            })
            .collect();
        nodules.sort_by_key(|n| n.id);
        Self {
            unit: unit.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            mesh_sha256: mesh.checksum(),
            skin_map_sha256: skin.checksum(),
            density_map_sha256: density.checksum(),
            layout_sha256: layout.checksum(),
            body_stl_sha256: sha256_hex(&stl_bytes(shell.mesh())),
            nodule_count: layout.len(),
            nodules,
            chain_order: design.order.clone(),
            segment_resistances: design.segment_resistances.clone(),
            total_resistance: design.total_resistance,
            calibration: calibration.clone(),
            shell_volume_cm3: shell.volume() * 1e6,
            parameters: GenerationParameters {
                shell: config.shell.clone(),
                sampling: config.sampling_params(),
                optimization: config.contacts.as_ref().map(|_| config.optimization.clone()),
                filament: config.filament.clone(),
                chain: config.chain.clone(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ManifestMismatch {
    #[error("mesh checksum mismatch: manifest has {expected}, mesh hashes to {found}")]
    Mesh { expected: String, found: String },
    #[error("body checksum mismatch: manifest has {expected}, file hashes to {found}")]
    Body { expected: String, found: String },
}

/// Check that `mesh` is the link the manifest was generated from.
pub fn verify_manifest(manifest: &SensorManifest, mesh: &TriMesh) -> Result<(), ManifestMismatch> {
    let found = mesh.checksum();
    if found != manifest.mesh_sha256 {
        return Err(ManifestMismatch::Mesh { expected: manifest.mesh_sha256.clone(), found });
    }
    Ok(())
}

/// Check exported body bytes against the manifest.
pub fn verify_body(manifest: &SensorManifest, body_stl: &[u8]) -> Result<(), ManifestMismatch> {
    let found = sha256_hex(body_stl);
    if found != manifest.body_stl_sha256 {
        return Err(ManifestMismatch::Body { expected: manifest.body_stl_sha256.clone(), found });
    }
    Ok(())
}
