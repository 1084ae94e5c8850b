//! Local HTTP service behind the painting UI. Sessions live in memory; a
//! session runs one mutating request at a time and rejects the rest with 409.

use std::collections::HashMap;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use skinkit::chain::ChainOptions;
use skinkit::mesh::LoadReport;
use skinkit::pipeline::{
    load_contacts, load_mesh_source, run, ContactInput, Inputs, OptimizationConfig, PipelineConfig, PipelineError, RunOutput,
    ShellParams,
};
use skinkit::{BrushStroke, FilamentSpec, HeatMap, MapRole, Point, SamplingParams, SweepTrajectory, TriMesh};
use tokio::sync::{Mutex, OwnedMutexGuard, RwLock};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": message.into() }) }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn pipeline(e: PipelineError) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": e.to_string(), "stage": e.stage, "exit_code": e.exit_code() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

type MeshKey = (PathBuf, u64, u64);

pub struct AppState {
    assets: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    meshes: Mutex<HashMap<MeshKey, Arc<(TriMesh, LoadReport)>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(assets: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            assets: assets.into(),
            sessions: RwLock::new(HashMap::new()),
            meshes: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    /// Exclusive access for a mutating request, or 409 when busy.
    async fn claim(&self, id: &str) -> Result<OwnedMutexGuard<Session>, ApiError> {
        self.session(id)
            .await?
            .try_lock_owned()
            .map_err(|_| ApiError::new(StatusCode::CONFLICT, format!("session `{id}` is busy")))
    }
}

struct Session {
    config: PipelineConfig,
    mesh: Arc<(TriMesh, LoadReport)>,
    skin: HeatMap,
    density: HeatMap,
    contacts: Option<ContactInput>,
    output: Option<RunOutput>,
}

impl Session {
    fn inputs(&self, contacts: Option<ContactInput>) -> Inputs {
        Inputs {
            mesh: self.mesh.0.clone(),
            load_report: self.mesh.1.clone(),
            skin: self.skin.clone(),
            density: self.density.clone(),
            contacts,
        }
    }

    fn map(&self, role: MapRole) -> &HeatMap {
        match role {
            MapRole::Skin => &self.skin,
            MapRole::Density => &self.density,
        }
    }

    fn map_mut(&mut self, role: MapRole) -> &mut HeatMap {
        match role {
            MapRole::Skin => &mut self.skin,
            MapRole::Density => &mut self.density,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { Json(json!({ "status": "ok", "version": skinkit::pipeline::TOOL_VERSION })) }))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", axum::routing::delete(delete_session))
        .route("/v1/sessions/{id}/mesh", get(get_mesh))
        .route("/v1/sessions/{id}/heatmap/{role}", get(get_heatmap).put(put_heatmap))
        .route("/v1/sessions/{id}/brush", post(brush))
        .route("/v1/sessions/{id}/generate", post(generate))
        .route("/v1/sessions/{id}/optimize", post(optimize))
        .route("/v1/sessions/{id}/manifest", get(manifest))
        .route("/v1/sessions/{id}/artifacts", get(list_artifacts))
        .route("/v1/sessions/{id}/artifacts/{name}", get(artifact))
        .with_state(state)
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed payload: {e}")))
}

fn parse_or_default<T: for<'de> Deserialize<'de> + Default>(body: &[u8]) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse(body)
    }
}

fn parse_role(role: &str) -> Result<MapRole, ApiError> {
    match role {
        "skin" => Ok(MapRole::Skin),
        "density" => Ok(MapRole::Density),
        other => Err(ApiError::not_found(format!("unknown heat map `{other}`"))),
    }
}

/// Asset paths must stay under the asset root.
fn check_relative(label: &str, p: &FsPath) -> Result<(), ApiError> {
    if p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!("{label} must be relative to the asset root without `..`")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    config: Option<PipelineConfig>,
    config_toml: Option<String>,
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: CreateSession = parse(&body)?;
    let config = match (req.config, req.config_toml) {
        (Some(c), None) => c,
        (None, Some(t)) => PipelineConfig::from_toml(&t).map_err(|e| ApiError::bad_request(e.to_string()))?,
        _ => return Err(ApiError::bad_request("give exactly one of `config` or `config_toml`")),
    };
    check_relative("mesh.path", &config.mesh.path)?;
    for p in [&config.skin.sidecar, &config.density.sidecar].into_iter().flatten() {
        check_relative("sidecar", p)?;
    }
    if let Some(skinkit::pipeline::ContactConfig::Log(p)) = &config.contacts {
        check_relative("contacts.log", p)?;
    }
    config.validate(&app.assets).map_err(|e| ApiError::bad_request(e.to_string()))?;

    let key = (config.mesh.path.clone(), config.mesh.scale.to_bits(), config.mesh.weld_tolerance.to_bits());
    let mesh = {
        let mut cache = app.meshes.lock().await;
        match cache.get(&key) {
            Some(m) => m.clone(),
            None => {
                let (c, base) = (config.clone(), app.assets.clone());
                let loaded = tokio::task::spawn_blocking(move || load_mesh_source(&c, &base))
                    .await
                    .expect("mesh loader panicked")
                    .map_err(ApiError::pipeline)?;
                let m = Arc::new(loaded);
                cache.insert(key, m.clone());
                m
            }
        }
    };
    let skin = config.skin.build(&mesh.0, MapRole::Skin, &app.assets).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let density = config.density.build(&mesh.0, MapRole::Density, &app.assets).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let contacts = load_contacts(&config, &app.assets).map_err(|e| ApiError::bad_request(e.to_string()))?;

    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let summary = json!({
        "id": id,
        "mesh_sha256": mesh.0.checksum(),
        "vertex_count": mesh.0.vertex_count(),
        "face_count": mesh.0.face_count(),
    });
    let session = Session { config, mesh, skin, density, contacts, output: None };
    app.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let _busy = app.claim(&id).await?;
    app.sessions.write().await.remove(&id);
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn get_mesh(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let s = app.session(&id).await?;
    let s = s.lock().await;
    let m = &s.mesh.0;
    Ok(Json(json!({
        "sha256": m.checksum(),
        "vertices": m.vertices().iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>(),
        "faces": m.faces(),
    }))
    .into_response())
}

fn sidecar_response(map: &HeatMap) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], map.to_sidecar()).into_response()
}

async fn get_heatmap(State(app): State<Arc<AppState>>, Path((id, role)): Path<(String, String)>) -> ApiResult {
    let role = parse_role(&role)?;
    let s = app.session(&id).await?;
    let s = s.lock().await;
    Ok(sidecar_response(s.map(role)))
}

async fn put_heatmap(State(app): State<Arc<AppState>>, Path((id, role)): Path<(String, String)>, body: Bytes) -> ApiResult {
    let role = parse_role(&role)?;
    let mut s = app.claim(&id).await?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("sidecar is not UTF-8"))?;
    let map = HeatMap::from_sidecar(text, &s.mesh.0).map_err(|e| ApiError::bad_request(e.to_string()))?.with_role(role);
    *s.map_mut(role) = map;
    Ok(sidecar_response(s.map(role)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BrushRequest {
    role: MapRole,
    #[serde(default)]
    stroke: Option<BrushStroke>,
    #[serde(default)]
    strokes: Vec<BrushStroke>,
}

async fn brush(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: BrushRequest = parse(&body)?;
    let strokes: Vec<BrushStroke> = req.stroke.into_iter().chain(req.strokes).collect();
    if strokes.is_empty() {
        return Err(ApiError::bad_request("no strokes given"));
    }
    let mut s = app.claim(&id).await?;
    let mut map = s.map(req.role).clone();
    for stroke in &strokes {
        map = map.apply_brush(&s.mesh.0, stroke).map_err(|e| ApiError::bad_request(e.to_string()))?;
    }
    let body = json!({ "role": req.role, "checksum": map.checksum(), "weights": map.weights() });
    *s.map_mut(req.role) = map;
    Ok(Json(body).into_response())
}

/// Parameter overrides accepted by generate and optimize; they persist in
/// the session.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overrides {
    seed: Option<u64>,
    allow_broken: Option<bool>,
    shell: Option<ShellParams>,
    sampling: Option<SamplingParams>,
    filament: Option<FilamentSpec>,
    chain: Option<ChainOptions>,
}

impl Overrides {
    fn apply(self, c: &mut PipelineConfig) {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.allow_broken {
            c.allow_broken = v;
        }
        if let Some(v) = self.shell {
            c.shell = v;
        }
        if let Some(v) = self.sampling {
            c.sampling = v;
        }
        if let Some(v) = self.filament {
            c.filament = v;
        }
        if let Some(v) = self.chain {
            c.chain = v;
        }
    }
}

#[derive(Serialize)]
struct UnitPreview<'a> {
    name: &'a str,
    shell: MeshJson,
    nodules: &'a [skinkit::Nodule],
    splines: Vec<&'a [Point]>,
    traces: &'a [Vec<Point>],
    chain_order: &'a [usize],
    total_resistance: f64,
}

#[derive(Serialize)]
struct MeshJson {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
}

fn preview(out: &RunOutput) -> serde_json::Value {
    let units: Vec<UnitPreview> = out
        .units
        .iter()
        .map(|u| UnitPreview {
            name: &u.name,
            shell: MeshJson {
                vertices: u.shell.mesh().vertices().iter().map(|p| [p.x, p.y, p.z]).collect(),
                faces: u.shell.mesh().faces().to_vec(),
            },
            nodules: &u.layout.nodules,
            splines: u.shell.splines().iter().map(|s| s.resampled()).collect(),
            traces: &u.design.trace_polylines,
            chain_order: &u.design.order,
            total_resistance: u.design.total_resistance,
        })
        .collect();
    json!({ "report": out.report, "units": units })
}

async fn execute(mut s: OwnedMutexGuard<Session>, contacts: Option<ContactInput>) -> Result<(OwnedMutexGuard<Session>, serde_json::Value), ApiError> {
    tokio::task::spawn_blocking(move || {
        let inputs = s.inputs(contacts);
        let out = run(&s.config, &inputs).map_err(ApiError::pipeline)?;
        let mut body = preview(&out);
        if let Some(d) = &out.optimized_density {
            body["density_sidecar"] = json!(d.to_sidecar());
        }
        s.output = Some(out);
        Ok((s, body))
    })
    .await
    .expect("pipeline worker panicked")
}

async fn generate(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let overrides: Overrides = parse_or_default(&body)?;
    let mut s = app.claim(&id).await?;
    let mut config = s.config.clone();
    overrides.apply(&mut config);
    config.validate(&app.assets).map_err(|e| ApiError::bad_request(e.to_string()))?;
    s.config = config;
    let (_s, body) = execute(s, None).await?;
    Ok(Json(body).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum ContactPayload {
    /// Contact log text.
    Log(String),
    Sweep(SweepTrajectory),
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizeRequest {
    contacts: Option<ContactPayload>,
    optimization: Option<OptimizationConfig>,
    seed: Option<u64>,
    allow_broken: Option<bool>,
    shell: Option<ShellParams>,
    sampling: Option<SamplingParams>,
    filament: Option<FilamentSpec>,
    chain: Option<ChainOptions>,
}

async fn optimize(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: OptimizeRequest = parse_or_default(&body)?;
    let mut s = app.claim(&id).await?;
    let contacts = match req.contacts {
        Some(ContactPayload::Log(text)) => ContactInput::Log(text),
        Some(ContactPayload::Sweep(t)) => ContactInput::Sweep(t),
        None => s.contacts.clone().ok_or_else(|| ApiError::bad_request("no contact source: send `contacts` or configure one"))?,
    };
    let mut config = s.config.clone();
    Overrides { seed: req.seed, allow_broken: req.allow_broken, shell: req.shell, sampling: req.sampling, filament: req.filament, chain: req.chain }
        .apply(&mut config);
    if let Some(o) = req.optimization {
        config.optimization = o;
    }
    if matches!(contacts, ContactInput::Log(_)) && config.optimization.rounds > 1 {
        return Err(ApiError::bad_request("a contact log supports a single optimization round"));
    }
    config.validate(&app.assets).map_err(|e| ApiError::bad_request(e.to_string()))?;
    s.config = config;
    let (_s, body) = execute(s, Some(contacts)).await?;
    Ok(Json(body).into_response())
}

#[derive(Deserialize)]
struct UnitQuery {
    unit: Option<String>,
}

fn require_output(s: &Session) -> Result<&RunOutput, ApiError> {
    s.output.as_ref().ok_or_else(|| ApiError::not_found("nothing generated in this session yet"))
}

async fn manifest(State(app): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<UnitQuery>) -> ApiResult {
    let s = app.session(&id).await?;
    let s = s.lock().await;
    let out = require_output(&s)?;
    let unit = match &q.unit {
        Some(name) => out.units.iter().find(|u| &u.name == name).ok_or_else(|| ApiError::not_found(format!("unknown unit `{name}`")))?,
        None => &out.units[0],
    };
    Ok(([(header::CONTENT_TYPE, "application/json")], unit.manifest.to_json()).into_response())
}

async fn list_artifacts(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let s = app.session(&id).await?;
    let s = s.lock().await;
    let list: Vec<_> = require_output(&s)?
        .artifacts()
        .into_iter()
        .map(|a| json!({ "name": a.name, "bytes": a.bytes.len(), "sha256": a.sha256() }))
        .collect();
    Ok(Json(list).into_response())
}

async fn artifact(State(app): State<Arc<AppState>>, Path((id, name)): Path<(String, String)>) -> ApiResult {
    let s = app.session(&id).await?;
    let s = s.lock().await;
    let a = require_output(&s)?
        .artifacts()
        .into_iter()
        .find(|a| a.name == name)
        .ok_or_else(|| ApiError::not_found(format!("unknown artifact `{name}`")))?;
    let kind = if name.ends_with(".json") {
        "application/json"
    } else if name.ends_with(".stl") {
        "model/stl"
    } else {
        "text/plain; charset=utf-8"
    };
    Ok(([(header::CONTENT_TYPE, kind)], a.bytes).into_response())
}

/// Bind `127.0.0.1:port` and serve until the process ends.
pub async fn serve(port: u16, assets: PathBuf) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(assets))).await
}
