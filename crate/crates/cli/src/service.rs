//! Local HTTP/JSON service holding one project session.
//!
//! Every mutation bumps the session revision and returns it. A mutation
//! that carries an `If-Match` header with an older revision is rejected
//! with 409 so a client never overwrites state it has not seen.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use formcast_core::circuit::{check_design_rules, CircuitError, FeatureId};
use formcast_core::flatten::flatten_design;
use formcast_core::geometry::build_sheet;
use formcast_core::project::{Project, ProjectError};
use formcast_core::simulator::{simulate, FormedSheet, SheetParams, SimConfig, SimError};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::pipeline::{export_files, mesh_payload, PipelineError};

pub struct Session {
    project: Project,
    revision: u64,
    mesh_revision: u64,
    path: Option<PathBuf>,
    base_dir: PathBuf,
}

impl Session {
    pub fn new(project: Project) -> Self {
        Self {
            project,
            revision: 0,
            mesh_revision: 0,
            path: None,
            base_dir: PathBuf::from("."),
        }
    }

    /// Loads `file` if it exists, otherwise starts a new project that will
    /// be saved there.
    pub fn open(file: &Path) -> Result<Self, ProjectError> {
        let project = if file.exists() {
            Project::load(file)?
        } else {
            let name = file
                .parent()
                .and_then(|d| d.file_name())
                .and_then(|n| n.to_str())
                .unwrap_or("untitled");
            Project::new(name, SheetParams::default(), 1)?
        };
        let mut session = Self::new(project);
        session.base_dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        session.path = Some(file.to_path_buf());
        Ok(session)
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    fn bump(&mut self) -> u64 {
        self.revision += 1;
        if let Some(path) = &self.path {
            if let Err(e) = self.project.save(path) {
                log::warn!("{e}");
            }
        }
        self.revision
    }
}

pub type Shared = Arc<Mutex<Session>>;

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl std::fmt::Display) -> Self {
        Self {
            status,
            body: json!({ "error": msg.to_string() }),
        }
    }

    fn bad_request(msg: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::BAD_REQUEST, msg)
    }

    fn conflict(msg: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::CONFLICT, msg)
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<CircuitError> for ApiError {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::UnknownFeature(_) => ApiError::new(StatusCode::NOT_FOUND, e),
            other => ApiError::bad_request(other),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Violations(v) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "design rule violations")
                .with("violations", serde_json::to_value(v).expect("violations serialize")),
            PipelineError::Project(ProjectError::NoMold) => ApiError::conflict("no mold"),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, other),
        }
    }
}

/// JSON body whose decoding failures are reported as 400.
pub struct Payload<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Payload<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let slice: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        serde_json::from_slice(slice)
            .map(Payload)
            .map_err(|e| ApiError::bad_request(format!("invalid payload: {e}")))
    }
}

fn check_revision(headers: &HeaderMap, session: &Session) -> Result<(), ApiError> {
    let Some(value) = headers.get(header::IF_MATCH) else {
        return Ok(());
    };
    let expected: u64 = value
        .to_str()
        .ok()
        .and_then(|s| s.trim().trim_matches('"').parse().ok())
        .ok_or_else(|| ApiError::bad_request("If-Match must be a revision number"))?;
    if expected != session.revision {
        return Err(ApiError::conflict("stale revision").with("revision", json!(session.revision)));
    }
    Ok(())
}

pub fn router(session: Session) -> Router {
    let shared: Shared = Arc::new(Mutex::new(session));
    Router::new()
        .route("/mold", post(post_mold))
        .route("/simulate", post(post_simulate))
        .route("/mesh", get(get_mesh))
        .route("/traces", post(post_trace))
        .route("/pads", post(post_pad))
        .route("/vias", post(post_via))
        .route("/feature/{id}", delete(delete_feature))
        .route("/check", post(post_check))
        .route("/flatten", get(get_flatten))
        .route("/export", post(post_export))
        .route("/project", get(get_project).put(put_project))
        .with_state(shared)
}

pub async fn serve(session: Session, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(session)).await
}

async fn post_mold(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    check_revision(&headers, &s)?;
    s.project.set_mold_stl(&body).map_err(ApiError::bad_request)?;
    Ok(Json(json!({ "revision": s.bump() })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    config: Option<SimConfig>,
    grid: Option<SheetParams>,
}

async fn post_simulate(
    State(s): State<Shared>,
    headers: HeaderMap,
    Payload(req): Payload<SimulateRequest>,
) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    check_revision(&headers, &s)?;
    if let Some(config) = req.config {
        config.validate().map_err(ApiError::bad_request)?;
        s.project.set_sim_config(config);
    }
    if let Some(grid) = req.grid {
        s.project.set_grid(grid).map_err(|e| match e {
            ProjectError::GridInUse => ApiError::conflict(e),
            other => ApiError::bad_request(other),
        })?;
    }
    let mold = match s.project.mold_mesh(&s.base_dir) {
        Ok(m) => m,
        Err(ProjectError::NoMold) => return Err(ApiError::conflict("no mold")),
        Err(e) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e)),
    };
    let (config, grid) = (s.project.sim_config().clone(), s.project.grid());
    let result = tokio::task::spawn_blocking(move || simulate(&mold, &config, &grid))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    let formed: FormedSheet = match result {
        Ok(f) => f,
        Err(SimError::NoConvergence { partial, .. }) => *partial,
        Err(e @ (SimError::InvalidConfig(_) | SimError::ZeroRestLength)) => return Err(ApiError::bad_request(e)),
        Err(e) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e)),
    };
    s.project.set_formed(&formed);
    s.mesh_revision += 1;
    let revision = s.bump();
    Ok(Json(json!({
        "revision": revision,
        "mesh_revision": s.mesh_revision,
        "converged": formed.converged(),
        "stage_log": formed.stage_log,
        "unreached": formed.unreached,
    })))
}

fn formed_or_conflict(s: &Session) -> Result<FormedSheet, ApiError> {
    s.project.formed().ok_or_else(|| ApiError::conflict("no formed sheet"))
}

async fn get_mesh(State(s): State<Shared>) -> Result<Json<Value>, ApiError> {
    let s = s.lock().await;
    let formed = formed_or_conflict(&s)?;
    let mut body = serde_json::to_value(mesh_payload(&formed)).expect("mesh serializes");
    body["revision"] = json!(s.revision);
    body["mesh_revision"] = json!(s.mesh_revision);
    Ok(Json(body))
}

fn default_width() -> f64 {
    1.5
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceRequest {
    picks: Vec<usize>,
    #[serde(default)]
    layer: usize,
    #[serde(default = "default_width")]
    width_mm: f64,
}

async fn post_trace(
    State(s): State<Shared>,
    headers: HeaderMap,
    Payload(req): Payload<TraceRequest>,
) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    check_revision(&headers, &s)?;
    let trace = s.project.design_mut().add_trace(&req.picks, req.layer, req.width_mm)?.clone();
    Ok(Json(json!({ "revision": s.bump(), "trace": trace })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PadRequest {
    faces: Vec<usize>,
    #[serde(default)]
    layer: usize,
    #[serde(default)]
    exposed: bool,
}

async fn post_pad(
    State(s): State<Shared>,
    headers: HeaderMap,
    Payload(req): Payload<PadRequest>,
) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    check_revision(&headers, &s)?;
    let pad = s.project.design_mut().add_pad(&req.faces, req.layer, req.exposed)?.clone();
    Ok(Json(json!({ "revision": s.bump(), "pad": pad })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ViaRequest {
    vertex: usize,
    radius_mm: f64,
    layer_span: (usize, usize),
}

async fn post_via(
    State(s): State<Shared>,
    headers: HeaderMap,
    Payload(req): Payload<ViaRequest>,
) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    check_revision(&headers, &s)?;
    let via = s.project.design_mut().add_via(req.vertex, req.radius_mm, req.layer_span)?.clone();
    Ok(Json(json!({ "revision": s.bump(), "via": via })))
}

async fn delete_feature(
    State(s): State<Shared>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<FeatureId>,
) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    check_revision(&headers, &s)?;
    let removed = s.project.design_mut().remove_feature(id)?;
    Ok(Json(json!({ "revision": s.bump(), "removed": removed })))
}

async fn post_check(State(s): State<Shared>) -> Result<Json<Value>, ApiError> {
    let s = s.lock().await;
    let sheet = match s.project.formed() {
        Some(f) => f.sheet,
        None => {
            let g = s.project.grid();
            build_sheet(g.nx, g.ny, g.width_mm, g.height_mm, 0.0).map_err(ApiError::bad_request)?
        }
    };
    let violations = check_design_rules(s.project.design(), &sheet);
    Ok(Json(json!({ "revision": s.revision, "violations": violations })))
}

async fn get_flatten(State(s): State<Shared>) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    let formed = formed_or_conflict(&s)?;
    let layout = flatten_design(s.project.design(), &formed).map_err(|e| ApiError::from(PipelineError::from(e)))?;
    s.project.set_flat(layout.clone());
    let mut body = serde_json::to_value(layout).expect("layout serializes");
    body["revision"] = json!(s.revision);
    Ok(Json(body))
}

async fn post_export(State(s): State<Shared>) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    formed_or_conflict(&s)?;
    let base_dir = s.base_dir.clone();
    let export = export_files(&mut s.project, &base_dir)?;
    let files: Vec<Value> = export
        .files
        .iter()
        .map(|(name, bytes)| json!({ "name": name, "stl_base64": BASE64.encode(bytes) }))
        .collect();
    Ok(Json(json!({ "revision": s.revision, "manifest": export.manifest, "files": files })))
}

async fn get_project(State(s): State<Shared>) -> Response {
    let s = s.lock().await;
    (
        [(header::CONTENT_TYPE, "application/json"), (header::ETAG, &format!("\"{}\"", s.revision))],
        s.project.to_json(),
    )
        .into_response()
}

async fn put_project(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>, ApiError> {
    let mut s = s.lock().await;
    check_revision(&headers, &s)?;
    let text = std::str::from_utf8(&body).map_err(ApiError::bad_request)?;
    let project = Project::from_json(text).map_err(ApiError::bad_request)?;
    let had_formed = project.has_formed();
    s.project = project;
    if had_formed {
        s.mesh_revision += 1;
    }
    Ok(Json(json!({ "revision": s.bump() })))
}
