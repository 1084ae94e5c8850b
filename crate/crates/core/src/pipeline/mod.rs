//! End-to-end run: mesh and maps in, printable bodies and a sensor manifest
//! out. Every stage is a pure function of the config and inputs, so a fixed
//! seed gives byte-identical artifacts.

mod config;
mod export;
mod manifest;

pub use config::{ContactConfig, MapSource, MeshSource, OptimizationConfig, PipelineConfig, ShellParams};
pub use export::{characterize, render_characterization, write_artifacts, Artifact, Characterization};
pub use manifest::{verify_body, verify_manifest, GenerationParameters, ManifestMismatch, ManifestNodule, SensorManifest};

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::chain::{conductive_body, design_chain, expected_rc_table, CalibrationTable, ChainDesign};
use crate::contact::{optimize_round, parse_contact_log, ContactError, ContactSource, HeuristicParams, SweepTrajectory};
use crate::heatmap::{HeatMap, MapRole};
use crate::mesh::{load_mesh, validate_mesh, vertex_normals, LoadOptions, LoadReport, MeshFormat, TriMesh};
use crate::sampler::{assign_radii, sample_nodules, NoduleLayout};
use crate::skin::{components, detect_self_intersections, extract_cutout, extrude_with_clearance, smooth_cutout, SkinShell};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    LoadMesh,
    HeatMaps,
    SkinCutout,
    NoduleSampler,
    ContactOptimizer,
    RcChainDesigner,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::LoadMesh => "load-mesh",
            Stage::HeatMaps => "heat-maps",
            Stage::SkinCutout => "skin-cutout",
            Stage::NoduleSampler => "nodule-sampler",
            Stage::ContactOptimizer => "contact-optimizer",
            Stage::RcChainDesigner => "rc-chain-designer",
            Stage::Export => "export",
        })
    }
}

/// Failure class, which fixes the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Geometry,
    Chain,
    Io,
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

impl PipelineError {
    /// Error with the stage's usual failure class.
    pub fn new(stage: Stage, source: impl fmt::Display) -> Self {
        let kind = match stage {
            Stage::Config | Stage::HeatMaps => ErrorKind::Config,
            Stage::LoadMesh | Stage::SkinCutout | Stage::NoduleSampler | Stage::ContactOptimizer => ErrorKind::Geometry,
            Stage::RcChainDesigner => ErrorKind::Chain,
            Stage::Export => ErrorKind::Io,
        };
        Self { stage, kind, message: source.to_string() }
    }

    pub fn config(stage: Stage, message: impl Into<String>) -> Self {
        Self { stage, kind: ErrorKind::Config, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Geometry => 3,
            ErrorKind::Chain => 4,
            ErrorKind::Io => 1,
        }
    }
}

fn contact_error(e: ContactError) -> PipelineError {
    let input = matches!(
        e,
        ContactError::Io { .. }
            | ContactError::Malformed { .. }
            | ContactError::UnknownNodule { .. }
            | ContactError::DecreasingTimestamp { .. }
            | ContactError::LayoutMismatch { .. }
            | ContactError::InvalidTrajectory(_)
            | ContactError::InvalidParams(_)
    );
    if input {
        PipelineError::config(Stage::ContactOptimizer, e.to_string())
    } else {
        PipelineError::new(Stage::ContactOptimizer, e)
    }
}

/// Contacts as supplied: log text is parsed against the first layout.
#[derive(Clone, Debug)]
pub enum ContactInput {
    Log(String),
    Sweep(SweepTrajectory),
}

/// Everything a run reads, already loaded.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub mesh: TriMesh,
    pub load_report: LoadReport,
    pub skin: HeatMap,
    pub density: HeatMap,
    pub contacts: Option<ContactInput>,
}

pub fn load_mesh_source(config: &PipelineConfig, base: &Path) -> Result<(TriMesh, LoadReport), PipelineError> {
    let path = base.join(&config.mesh.path);
    let format = match config.mesh.format {
        Some(f) => f,
        None => MeshFormat::from_path(&path).map_err(|e| PipelineError::config(Stage::LoadMesh, e.to_string()))?,
    };
    let options = LoadOptions { weld_tolerance: config.mesh.weld_tolerance, scale: config.mesh.scale };
    let loaded = load_mesh(&path, format, &options).map_err(|e| PipelineError::new(Stage::LoadMesh, e))?;
    Ok((loaded.mesh, loaded.report))
}

/// Contact source named by the config, with a log read into memory.
pub fn load_contacts(config: &PipelineConfig, base: &Path) -> Result<Option<ContactInput>, PipelineError> {
    Ok(match &config.contacts {
        None => None,
        Some(ContactConfig::Sweep(t)) => Some(ContactInput::Sweep(t.clone())),
        Some(ContactConfig::Log(p)) => {
            let path = base.join(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PipelineError::config(Stage::ContactOptimizer, format!("cannot read {}: {e}", path.display())))?;
            Some(ContactInput::Log(text))
        }
    })
}

/// Validate the config and read every file it references.
pub fn load_inputs(config: &PipelineConfig, base: &Path) -> Result<Inputs, PipelineError> {
    config.validate(base)?;
    let (mesh, load_report) = load_mesh_source(config, base)?;
    let skin = config.skin.build(&mesh, MapRole::Skin, base)?;
    let density = config.density.build(&mesh, MapRole::Density, base)?;
    let contacts = load_contacts(config, base)?;
    Ok(Inputs { mesh, load_report, skin, density, contacts })
}

/// One generated skin unit.
#[derive(Clone, Debug)]
pub struct UnitOutput {
    pub name: String,
    pub shell: SkinShell,
    pub layout: NoduleLayout,
    pub design: ChainDesign,
    pub calibration: CalibrationTable,
    pub conductive: TriMesh,
    pub self_intersections: usize,
    pub manifest: SensorManifest,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitReport {
    pub name: String,
    pub nodules: usize,
    pub shell_volume_cm3: f64,
    pub total_resistance_kohm: f64,
    pub average_radius_mm: f64,
    pub self_intersections: usize,
    pub watertight: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub rounds: usize,
    pub alpha: f64,
    pub filter_order: u32,
    pub total_contacts: u64,
    pub count_before: usize,
    pub count_after: usize,
    pub count_near_contacts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub mesh_sha256: String,
    pub load: LoadReport,
    pub units: Vec<UnitReport>,
    pub optimization: Option<OptimizationReport>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub units: Vec<UnitOutput>,
    pub optimized_density: Option<HeatMap>,
    pub report: RunReport,
}

/// Shells for every connected cutout component, before sampling.
pub fn build_shells(config: &PipelineConfig, mesh: &TriMesh, skin: &HeatMap) -> Result<Vec<(String, SkinShell, usize)>, PipelineError> {
    let stage = Stage::SkinCutout;
    let err = |e: crate::skin::SkinError| PipelineError::new(stage, e);
    let normals = vertex_normals(mesh).map_err(|e| PipelineError::new(stage, e))?;
    let cutout = extract_cutout(mesh, skin, config.shell.cutoff_tolerance).map_err(err)?;
    let parts = components(&cutout);
    let many = parts.len() > 1;
    let mut shells = Vec::with_capacity(parts.len());
    for (k, part) in parts.iter().enumerate() {
        let name = if many { format!("{}_{}", config.name, k + 1) } else { config.name.clone() };
        let (smoothed, splines) = smooth_cutout(part, config.shell.resample_ratio).map_err(err)?;
        let mut shell = extrude_with_clearance(&smoothed, &normals, config.shell.thickness, config.shell.clearance).map_err(err)?;
        shell.set_splines(splines);
        let hits = detect_self_intersections(&shell);
        if !hits.is_empty() && !config.allow_broken {
            let (a, b) = hits[0];
            return Err(PipelineError::new(
                stage,
                format!("shell `{name}` self-intersects at {} face pairs (first: {a}, {b}); reduce thickness or pass --allow-broken", hits.len()),
            ));
        }
        shells.push((name, shell, hits.len()));
    }
    Ok(shells)
}

fn sample(shell: &SkinShell, density: &HeatMap, params: &crate::sampler::SamplingParams) -> Result<NoduleLayout, PipelineError> {
    let raw = sample_nodules(shell, density, params).map_err(|e| PipelineError::new(Stage::NoduleSampler, e))?;
    assign_radii(&raw, params).map_err(|e| PipelineError::new(Stage::NoduleSampler, e))
}

/// Run every stage on loaded inputs. Nothing is written.
pub fn run(config: &PipelineConfig, inputs: &Inputs) -> Result<RunOutput, PipelineError> {
    let mesh = &inputs.mesh;
    let mut warnings = Vec::new();
    let shells = build_shells(config, mesh, &inputs.skin)?;
    let params = config.sampling_params();
    if inputs.contacts.is_some() && shells.len() != 1 {
        return Err(PipelineError::config(
            Stage::ContactOptimizer,
            format!("contact optimization needs a single skin unit, the cutout has {}", shells.len()),
        ));
    }

    let mut optimized_density = None;
    let mut optimization = None;
    let mut units = Vec::with_capacity(shells.len());
    for (name, shell, hits) in shells {
        if hits > 0 {
            warnings.push(format!("{name}: {hits} self-intersecting face pairs exported (--allow-broken)"));
        }
        let mut layout = sample(&shell, &inputs.density, &params)?;
        let mut density_used = inputs.density.clone();
        if let Some(contacts) = &inputs.contacts {
            let o = &config.optimization;
            let defaults = HeuristicParams::for_layout(&layout);
            let heuristic = HeuristicParams {
                alpha: o.alpha.unwrap_or(defaults.alpha),
                filter_order: o.filter_order,
                normalize_counts: o.normalize_counts,
            };
            let resample = crate::sampler::SamplingParams { fill_tolerance: o.fill_tolerance, ..params.clone() };
            let before = layout.len();
            let mut last = None;
            let mut total_contacts = 0;
            for _ in 0..o.rounds {
                let source = match contacts {
                    ContactInput::Sweep(t) => ContactSource::Sweep(t.clone()),
                    ContactInput::Log(text) => ContactSource::Events(parse_contact_log(text, &layout).map_err(contact_error)?),
                };
                let round = optimize_round(mesh, &shell, &layout, &source, o.onsets, &heuristic, &resample).map_err(contact_error)?;
                total_contacts = round.histogram.total();
                if total_contacts == 0 {
                    warnings.push("no contacts recorded; optimized density map is all zero".into());
                }
                layout = assign_radii(&round.layout, &resample).map_err(|e| PipelineError::new(Stage::NoduleSampler, e))?;
                density_used = round.heatmap.clone();
                last = Some(round);
            }
            let last = last.expect("at least one round");
            optimization = Some(OptimizationReport {
                rounds: o.rounds,
                alpha: heuristic.alpha,
                filter_order: heuristic.filter_order,
                total_contacts,
                count_before: before,
                count_after: last.count_after,
                count_near_contacts: last.count_near_contacts,
            });
            optimized_density = Some(last.heatmap);
        }

        let design = design_chain(&shell, &layout, &config.filament, &config.chain).map_err(|e| PipelineError::new(Stage::RcChainDesigner, e))?;
        layout.chain = Some(design.order.clone());
        let calibration = expected_rc_table(&design);
        let conductive = conductive_body(&shell, &layout, &design, &config.chain.routing)
            .map_err(|e| PipelineError::new(Stage::RcChainDesigner, e))?;
        let manifest = SensorManifest::build(&name, config, mesh, &inputs.skin, &density_used, &shell, &layout, &design, &calibration);
        units.push(UnitOutput { name, shell, layout, design, calibration, conductive, self_intersections: hits, manifest });
    }

    let report = RunReport {
        tool_version: TOOL_VERSION.to_string(),
        mesh_sha256: mesh.checksum(),
        load: inputs.load_report.clone(),
        units: units
            .iter()
            .map(|u| UnitReport {
                name: u.name.clone(),
                nodules: u.layout.len(),
                shell_volume_cm3: u.shell.volume() * 1e6,
                total_resistance_kohm: u.design.total_resistance,
                average_radius_mm: 1000.0 * u.layout.nodules.iter().map(|n| n.radius).sum::<f64>() / u.layout.len() as f64,
                self_intersections: u.self_intersections,
                watertight: validate_mesh(u.shell.mesh()).is_watertight(),
            })
            .collect(),
        optimization,
        warnings,
    };
    Ok(RunOutput { units, optimized_density, report })
}

/// Load, run and write under `base.join(config.output_dir)`.
pub fn run_to_disk(config: &PipelineConfig, base: &Path) -> Result<RunOutput, PipelineError> {
    let inputs = load_inputs(config, base)?;
    let out = run(config, &inputs)?;
    write_artifacts(&out, &base.join(&config.output_dir))?;
    Ok(out)
}
