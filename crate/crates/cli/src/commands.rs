use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use skinkit::mesh::{load_mesh, LoadOptions};
use skinkit::pipeline::{
    characterize, load_inputs, render_characterization, run, verify_body, verify_manifest, write_artifacts, Characterization,
    ContactConfig, PipelineConfig, PipelineError, RunOutput,
};
use skinkit::snr::{analyze_traces, render_table, CaptureTrace, Protocol, SnrReport, UnitRow};
use skinkit::{MeshFormat, SensorManifest};

#[derive(Parser, Debug)]
#[command(name = "skinkit", version, about = "Design tactile skins for robot links")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate shell, conductive body and manifest from a config.
    Generate(GenerateArgs),
    /// Generate, then run contact-driven density optimization.
    Optimize(OptimizeArgs),
    /// Summarize generated units: nodules, volume, total resistance, radius.
    Characterize(CharacterizeArgs),
    /// Pairwise SNR over captured traces, one directory per trial.
    Snr(SnrArgs),
    /// Serve the HTTP API for the painting UI.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub allow_broken: bool,
    /// Mesh unit scale to meters.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Output directory; relative paths resolve against the working directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub cutoff_tolerance: Option<f64>,
    #[arg(long)]
    pub resample_ratio: Option<f64>,
    /// Shell thickness (m).
    #[arg(long)]
    pub thickness: Option<f64>,
    #[arg(long)]
    pub fill_tolerance: Option<f64>,
    /// Base minimum distance between nodules (m).
    #[arg(long)]
    pub minimum_distribution_distance: Option<f64>,
    #[arg(long)]
    pub radius_factor: Option<f64>,
    /// Print the run report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub generate: GenerateArgs,
    /// Contact log, overriding the config's contact source.
    #[arg(long)]
    pub contacts: Option<PathBuf>,
    /// Kernel cutoff distance (m).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub filter_order: Option<u32>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Count contact onsets instead of contact samples.
    #[arg(long)]
    pub onsets: bool,
}

#[derive(Args, Debug)]
pub struct CharacterizeArgs {
    /// Output directory of a generate run.
    pub dir: PathBuf,
    /// Link mesh to check manifest checksums against.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct SnrArgs {
    /// Trial directories, each holding one trace file per nodule.
    #[arg(required = true)]
    pub trials: Vec<PathBuf>,
    #[arg(long, default_value = "unit")]
    pub unit: String,
    #[arg(long, default_value_t = 3.0)]
    pub rest_before: f64,
    #[arg(long, default_value_t = 3.0)]
    pub press: f64,
    #[arg(long, default_value_t = 3.0)]
    pub rest_after: f64,
    #[arg(long, default_value_t = 0.25)]
    pub guard: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    /// Directory that session configs resolve paths against.
    #[arg(long, default_value = ".")]
    pub assets: PathBuf,
}

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self { code: e.exit_code(), message: e.to_string() }
    }
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn io(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

/// Config with command-line overrides; returns it and the directory its
/// relative paths resolve against.
pub fn load_config(args: &GenerateArgs) -> Result<(PipelineConfig, PathBuf), CliError> {
    let mut c = PipelineConfig::load(&args.config)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(v) = args.seed {
        c.seed = v;
    }
    c.allow_broken |= args.allow_broken;
    if let Some(v) = args.scale {
        c.mesh.scale = v;
    }
    if let Some(v) = args.cutoff_tolerance {
        c.shell.cutoff_tolerance = v;
    }
    if let Some(v) = args.resample_ratio {
        c.shell.resample_ratio = v;
    }
    if let Some(v) = args.thickness {
        c.shell.thickness = v;
    }
    if let Some(v) = args.fill_tolerance {
        c.sampling.fill_tolerance = v;
    }
    if let Some(v) = args.minimum_distribution_distance {
        c.sampling.d_min = v;
    }
    if let Some(v) = args.radius_factor {
        c.sampling.radius_factor = v;
    }
    Ok((c, base))
}

fn output_dir(args: &GenerateArgs, config: &PipelineConfig, base: &Path) -> PathBuf {
    args.output.clone().unwrap_or_else(|| base.join(&config.output_dir))
}

fn finish(out: &RunOutput, dir: &Path, json: bool) -> Result<String, CliError> {
    let artifacts = write_artifacts(out, dir)?;
    if json {
        let mut s = serde_json::to_string_pretty(&out.report).expect("report serializes");
        s.push('\n');
        return Ok(s);
    }
    let mut s = String::new();
    for u in &out.report.units {
        s.push_str(&format!(
            "{}: {} nodules, shell {:.2} cm3, total {:.1} kOhm, mean radius {:.2} mm{}\n",
            u.name,
            u.nodules,
            u.shell_volume_cm3,
            u.total_resistance_kohm,
            u.average_radius_mm,
            if u.self_intersections > 0 { format!(", {} self-intersections", u.self_intersections) } else { String::new() },
        ));
    }
    if let Some(o) = &out.report.optimization {
        s.push_str(&format!(
            "optimized: {} contacts, alpha {:.4} m, n {}, nodules {} -> {} ({} near contacts)\n",
            o.total_contacts, o.alpha, o.filter_order, o.count_before, o.count_after, o.count_near_contacts
        ));
    }
    for w in &out.report.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s.push_str(&format!("wrote {} files to {}\n", artifacts.len(), dir.display()));
    Ok(s)
}

pub fn generate(args: &GenerateArgs) -> Result<String, CliError> {
    let (mut config, base) = load_config(args)?;
    config.contacts = None;
    let inputs = load_inputs(&config, &base)?;
    let out = run(&config, &inputs)?;
    finish(&out, &output_dir(args, &config, &base), args.json)
}

pub fn optimize(args: &OptimizeArgs) -> Result<String, CliError> {
    let (mut config, base) = load_config(&args.generate)?;
    if let Some(p) = &args.contacts {
        let abs = std::path::absolute(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
        config.contacts = Some(ContactConfig::Log(abs));
    }
    if config.contacts.is_none() {
        return Err(CliError::config("optimize needs a contact source: pass --contacts or set [contacts] in the config"));
    }
    let o = &mut config.optimization;
    if args.alpha.is_some() {
        o.alpha = args.alpha;
    }
    if let Some(n) = args.filter_order {
        o.filter_order = n;
    }
    if let Some(r) = args.rounds {
        o.rounds = r;
    }
    o.onsets |= args.onsets;
    let inputs = load_inputs(&config, &base)?;
    let out = run(&config, &inputs)?;
    finish(&out, &output_dir(&args.generate, &config, &base), args.generate.json)
}

/// Characterize every `<unit>_manifest.json` in a run directory.
pub fn characterize_dir(args: &CharacterizeArgs) -> Result<String, CliError> {
    let mut manifests: Vec<PathBuf> = std::fs::read_dir(&args.dir)
        .map_err(|e| CliError::io(format!("{}: {e}", args.dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_manifest.json")))
        .collect();
    manifests.sort();
    if manifests.is_empty() {
        return Err(CliError::config(format!("no *_manifest.json in {}", args.dir.display())));
    }
    let link = match &args.mesh {
        Some(p) => {
            let format = MeshFormat::from_path(p).map_err(|e| CliError::config(e.to_string()))?;
            let opts = LoadOptions { scale: args.scale, ..LoadOptions::default() };
            Some(load_mesh(p, format, &opts).map_err(|e| CliError { code: 3, message: e.to_string() })?.mesh)
        }
        None => None,
    };
    let mut rows: Vec<Characterization> = Vec::new();
    for path in manifests {
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let manifest = SensorManifest::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if let Some(mesh) = &link {
            verify_manifest(&manifest, mesh).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        }
        let body_path = args.dir.join(format!("{}_body.stl", manifest.unit));
        let bytes = std::fs::read(&body_path).map_err(|e| CliError::io(format!("{}: {e}", body_path.display())))?;
        verify_body(&manifest, &bytes).map_err(|e| CliError::config(format!("{}: {e}", body_path.display())))?;
        let body = skinkit::mesh::parse_mesh(&bytes, MeshFormat::Stl, &LoadOptions::default())
            .map_err(|e| CliError { code: 3, message: format!("{}: {e}", body_path.display()) })?
            .mesh;
        rows.push(characterize(&manifest, &body));
    }
    if args.json {
        let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
        s.push('\n');
        Ok(s)
    } else {
        Ok(render_characterization(&rows))
    }
}

fn load_trial(dir: &Path) -> Result<Vec<CaptureTrace>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    files.iter().map(|p| CaptureTrace::load(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))).collect()
}

pub fn snr(args: &SnrArgs) -> Result<String, CliError> {
    let protocol = Protocol { rest_before: args.rest_before, press: args.press, rest_after: args.rest_after, guard: args.guard };
    let mut reports: Vec<SnrReport> = Vec::new();
    for dir in &args.trials {
        let traces = load_trial(dir)?;
        reports.push(analyze_traces(&traces, &protocol).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?);
    }
    let minima: Vec<f64> = reports.iter().map(|r| r.min_snr).collect();
    let row = UnitRow::new(&args.unit, &minima).map_err(|e| CliError::config(e.to_string()))?;
    if args.json {
        let v = serde_json::json!({ "unit": args.unit, "trials": reports, "summary": row });
        let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
        s.push('\n');
        return Ok(s);
    }
    let mut s = String::new();
    for (dir, r) in args.trials.iter().zip(&reports) {
        s.push_str(&format!("{}: min SNR {} ({})\n", dir.display(), if r.min_snr.is_infinite() { "inf".to_string() } else { format!("{:.2}", r.min_snr) }, r.classification));
    }
    s.push_str(&render_table(&[row]));
    Ok(s)
}
