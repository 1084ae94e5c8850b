use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainOptions, FilamentSpec};
use crate::contact::SweepTrajectory;
use crate::heatmap::{BrushStroke, HeatMap, MapRole};
use crate::mesh::{MeshFormat, TriMesh, DEFAULT_WELD_TOLERANCE};
use crate::sampler::SamplingParams;

use super::{PipelineError, Stage};

/// Single declarative run description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Overrides `sampling.seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_broken: bool,
    pub mesh: MeshSource,
    #[serde(default)]
    pub skin: MapSource,
    #[serde(default)]
    pub density: MapSource,
    #[serde(default)]
    pub shell: ShellParams,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default)]
    pub optimization: OptimizationConfig,
    #[serde(default)]
    pub contacts: Option<ContactConfig>,
    #[serde(default)]
    pub filament: FilamentSpec,
    #[serde(default)]
    pub chain: ChainOptions,
}

fn default_name() -> String {
    "skin".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSource {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<MeshFormat>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "weld")]
    pub weld_tolerance: f64,
}

fn one() -> f64 {
    1.0
}

fn weld() -> f64 {
    DEFAULT_WELD_TOLERANCE
}

/// A heat map: optional sidecar (else a uniform `initial` value), then
/// brush strokes in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSource {
    pub sidecar: Option<PathBuf>,
    pub initial: f64,
    pub brushes: Vec<BrushStroke>,
}

impl MapSource {
    pub fn build(&self, mesh: &TriMesh, role: MapRole, base: &Path) -> Result<HeatMap, PipelineError> {
        let stage = Stage::HeatMaps;
        let mut map = match &self.sidecar {
            Some(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| PipelineError::config(stage, format!("cannot read {}: {e}", path.display())))?;
                HeatMap::from_sidecar(&text, mesh).map_err(|e| PipelineError::new(stage, e))?.with_role(role)
            }
            None => HeatMap::uniform(mesh, role, self.initial).map_err(|e| PipelineError::new(stage, e))?,
        };
        for stroke in &self.brushes {
            map = map.apply_brush(mesh, stroke).map_err(|e| PipelineError::new(stage, e))?;
        }
        Ok(map)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShellParams {
    pub cutoff_tolerance: f64,
    pub resample_ratio: f64,
    /// Shell thickness (m).
    pub thickness: f64,
    /// Lift of the inner surface off the link (m).
    pub clearance: f64,
}

impl Default for ShellParams {
    fn default() -> Self {
        Self { cutoff_tolerance: 0.5, resample_ratio: 0.5, thickness: 0.003, clearance: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationConfig {
    /// Kernel cutoff (m); defaults to twice the layout's mean local minimum distance.
    pub alpha: Option<f64>,
    pub filter_order: u32,
    pub normalize_counts: bool,
    /// Count rising edges instead of contact samples.
    pub onsets: bool,
    pub rounds: usize,
    /// Fill tolerance used when re-sampling the optimized map.
    pub fill_tolerance: f64,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self { alpha: None, filter_order: 2, normalize_counts: true, onsets: false, rounds: 1, fill_tolerance: 0.15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum ContactConfig {
    /// Contact log path.
    Log(PathBuf),
    Sweep(SweepTrajectory),
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::config(Stage::Config, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(Stage::Config, format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sampling parameters with the run seed applied.
    pub fn sampling_params(&self) -> SamplingParams {
        SamplingParams { seed: self.seed, ..self.sampling.clone() }
    }

    /// Scalar ranges and referenced paths (relative to `base`).
    pub fn validate(&self, base: &Path) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::config(Stage::Config, m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("unit name `{}` must be a plain file stem", self.name));
        }
        if !(self.mesh.scale > 0.0 && self.mesh.scale.is_finite()) {
            return bad("mesh.scale must be positive".into());
        }
        if !(self.mesh.weld_tolerance >= 0.0 && self.mesh.weld_tolerance.is_finite()) {
            return bad("mesh.weld_tolerance must be non-negative".into());
        }
        for (label, src) in [("skin", &self.skin), ("density", &self.density)] {
            if !(0.0..=1.0).contains(&src.initial) {
                return bad(format!("{label}.initial must lie in [0, 1]"));
            }
            for b in &src.brushes {
                if let Err(e) = b.validate() {
                    return bad(format!("{label} brush: {e}"));
                }
            }
        }
        let s = &self.shell;
        if !(0.0..=1.0).contains(&s.cutoff_tolerance) {
            return bad("shell.cutoff_tolerance must lie in [0, 1]".into());
        }
        if !(s.resample_ratio > 0.0 && s.resample_ratio <= 1.0) {
            return bad("shell.resample_ratio must lie in (0, 1]".into());
        }
        if !(s.thickness > 0.0 && s.thickness.is_finite()) || !(s.clearance >= 0.0 && s.clearance.is_finite()) {
            return bad("shell.thickness must be positive and shell.clearance non-negative".into());
        }
        if let Err(e) = self.sampling.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.filament.validate() {
            return bad(e.to_string());
        }
        let o = &self.optimization;
        if o.alpha.is_some_and(|a| !(a > 0.0 && a.is_finite())) || o.filter_order == 0 || o.rounds == 0 {
            return bad("optimization: alpha must be positive, filter_order and rounds at least 1".into());
        }
        if !(0.0..=1.0).contains(&o.fill_tolerance) {
            return bad("optimization.fill_tolerance must lie in [0, 1]".into());
        }
        let mut paths = vec![("mesh.path", &self.mesh.path)];
        paths.extend(self.skin.sidecar.as_ref().map(|p| ("skin.sidecar", p)));
        paths.extend(self.density.sidecar.as_ref().map(|p| ("density.sidecar", p)));
        match &self.contacts {
            Some(ContactConfig::Log(p)) => {
                if o.rounds > 1 {
                    return bad("a contact log names the first layout's nodules; use a sweep for more than one round".into());
                }
                paths.push(("contacts.log", p));
            }
            Some(ContactConfig::Sweep(t)) => {
                if let Err(e) = t.validate() {
                    return bad(e.to_string());
                }
            }
            None => {}
        }
        for (label, p) in paths {
            if !base.join(p).is_file() {
                return bad(format!("{label} {} does not exist", base.join(p).display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [mesh]
        path = "plate.obj"
    "#;

    #[test]
    fn defaults_fill_in() {
        let c = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.name, "skin");
        assert_eq!(c.shell, ShellParams::default());
        assert_eq!(c.filament.resistivity, 256.0);
        assert_eq!(c.filament.min_nodule_spacing, 0.06);
        assert_eq!(c.optimization.filter_order, 2);
        assert_eq!(c.optimization.fill_tolerance, 0.15);
        assert!(c.contacts.is_none());
    }

    #[test]
    fn long_parameter_names() {
        let c = PipelineConfig::from_toml(
            r#"
            seed = 7
            [mesh]
            path = "plate.obj"
            [shell]
            cutoff_tolerance = 0.3
            [sampling]
            minimum_distribution_distance = 0.05
            fill_tolerance = 0.2
            radius_factor = 0.4
            [contacts.sweep]
            collider = 0.01
            step = 0.002
            waypoints = [[0, 0, 0], [0.1, 0, 0]]
            "#,
        )
        .unwrap();
        assert_eq!(c.shell.cutoff_tolerance, 0.3);
        assert_eq!(c.sampling.d_min, 0.05);
        assert_eq!(c.sampling.fill_tolerance, 0.2);
        assert_eq!(c.sampling.radius_factor, 0.4);
        assert_eq!(c.sampling_params().seed, 7);
        assert!(matches!(c.contacts, Some(ContactConfig::Sweep(_))));
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert!(PipelineConfig::from_toml("[mesh]\npath = 'a.obj'\nbogus = 1\n").is_err());
        let mut c = PipelineConfig::from_toml(MINIMAL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = c.validate(dir.path()).unwrap_err();
        assert!(err.to_string().contains("mesh.path"), "{err}");
        std::fs::write(dir.path().join("plate.obj"), "").unwrap();
        c.validate(dir.path()).unwrap();
        c.filament.min_nodule_spacing = 0.008;
        assert_eq!(c.validate(dir.path()).unwrap_err().exit_code(), 2);
    }
}
