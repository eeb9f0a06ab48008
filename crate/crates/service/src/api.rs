//! HTTP JSON API over a [`SessionStore`].
//!
//! Every mutation answers with the scene revision it produced. Core calls
//! that touch meshes run on the blocking pool.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use voxcompose_core::geometry::{write_obj, GeneratorSpec, Rgb, Transform3, Vec3};
use voxcompose_core::scene::{ComposeError, ComposeParams, Scene};
use voxcompose_core::segmentation::{BrushMode, BrushStroke};
use voxcompose_core::session::{AssetSource, Session, SessionStore};
use voxcompose_core::Error;

pub const REVISION_HEADER: &str = "x-revision";
pub const SCENE_REVISION_HEADER: &str = "x-scene-revision";
pub const STALE_HEADER: &str = "x-stale";

/// Largest accepted request body (uploaded meshes included).
const BODY_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    stage: Option<&'static str>,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
            stage: None,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownId(_) | Error::NoResult => StatusCode::NOT_FOUND,
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            Error::NothingToCompose(_) | Error::EmptyVolume | Error::EmptyGrid | Error::EmptySelection => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            message: e.to_string(),
            stage: None,
        }
    }
}

impl From<ComposeError> for ApiError {
    fn from(e: ComposeError) -> Self {
        let stage = e.stage.name();
        let mut err = ApiError::from(e.source);
        if err.status == StatusCode::BAD_REQUEST {
            err.status = StatusCode::UNPROCESSABLE_ENTITY;
        }
        err.stage = Some(stage);
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(stage) = self.stage {
            body["stage"] = json!(stage);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { "$".to_string() } else { format!("$.{path}") };
        ApiError::bad_request(format!("{at}: {}", e.into_inner()))
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("worker failed: {e}"),
        stage: None,
    })?
}

type Store = Arc<SessionStore>;

fn session(store: &SessionStore, id: &str) -> ApiResult<Arc<Session>> {
    Ok(store.get(id)?)
}

fn revision_json(revision: u64) -> Json<serde_json::Value> {
    Json(json!({ "revision": revision }))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/scene", get(get_scene).put(put_scene))
        .route("/sessions/{id}/compose_params", put(put_compose_params))
        .route("/sessions/{id}/assets", post(add_asset))
        .route("/sessions/{id}/assets/{aid}", axum::routing::delete(delete_asset))
        .route("/sessions/{id}/assets/{aid}/mesh", get(asset_mesh))
        .route("/sessions/{id}/assets/{aid}/mask", get(asset_mask))
        .route("/sessions/{id}/assets/{aid}/strokes", post(add_stroke))
        .route("/sessions/{id}/assets/{aid}/selection", put(reset_selection))
        .route("/sessions/{id}/instances", post(add_instance))
        .route("/sessions/{id}/instances/{iid}", axum::routing::delete(delete_instance))
        .route("/sessions/{id}/instances/{iid}/transform", put(set_transform))
        .route("/sessions/{id}/compose", post(compose).get(compose_status))
        .route("/sessions/{id}/result", get(result))
        .layer(axum::extract::DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(store)
}

/// Optional body: a scene to start from.
async fn create_session(State(store): State<Store>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let scene = if body.iter().all(u8::is_ascii_whitespace) {
        Scene::default()
    } else {
        Scene::from_json(std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?)?
    };
    let s = blocking(move || Ok(store.create_with(scene)?)).await?;
    tracing::info!(session = s.id(), "session created");
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": s.id(), "revision": s.revision() })),
    ))
}

async fn list_sessions(State(store): State<Store>) -> Json<Vec<String>> {
    Json(store.ids())
}

async fn get_session(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let result = s.result().map(|(r, stale)| json!({ "revision": r.revision, "stale": stale }));
    Ok(Json(json!({
        "id": s.id(),
        "revision": s.revision(),
        "result": result,
        "compose": s.compose_status(),
    })))
}

async fn delete_session(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    store.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_scene(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = session(&store, &id)?;
    let (scene, revision) = s.snapshot();
    let mut resp = ([(header::CONTENT_TYPE, "application/json")], scene.to_json()).into_response();
    resp.headers_mut().insert(REVISION_HEADER, HeaderValue::from(revision));
    Ok(resp)
}

async fn put_scene(State(store): State<Store>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let scene = Scene::from_json(std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?)?;
    Ok(revision_json(s.replace_scene(scene)?))
}

async fn put_compose_params(
    State(store): State<Store>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let params: ComposeParams = parse_json(&body)?;
    Ok(revision_json(s.set_compose_params(params)?))
}

fn default_true() -> bool {
    true
}

/// JSON form of an asset upload.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAsset {
    #[serde(default)]
    generator: Option<GeneratorSpec>,
    /// OBJ text, as an alternative to multipart upload.
    #[serde(default)]
    obj: Option<String>,
    #[serde(default)]
    color: Option<Rgb>,
    /// Also place one instance at the identity transform.
    #[serde(default = "default_true")]
    place_instance: bool,
}

fn is_multipart(headers: &HeaderMap) -> bool {
    content_type(headers).starts_with("multipart/form-data")
}

fn content_type(headers: &HeaderMap) -> &str {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
}

fn parse_flag(text: &str) -> ApiResult<bool> {
    match text.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(ApiError::bad_request(format!("expected true or false, got {other:?}"))),
    }
}

/// Accepts a multipart form (`file` = OBJ, optional `color` as a JSON
/// triple and `place_instance`), a JSON body ([`NewAsset`]), or a raw OBJ
/// body of any other content type.
async fn add_asset(State(store): State<Store>, Path(id): Path<String>, req: Request) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let headers = req.headers().clone();
    let new = if is_multipart(&headers) {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let mut new = NewAsset {
            generator: None,
            obj: None,
            color: None,
            place_instance: true,
        };
        while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
            let name = field.name().unwrap_or("").to_string();
            let text = field.text().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
            match name.as_str() {
                "file" => new.obj = Some(text),
                "color" => new.color = Some(parse_json(text.as_bytes())?),
                "place_instance" => new.place_instance = parse_flag(&text)?,
                other => return Err(ApiError::bad_request(format!("unexpected form field {other:?}"))),
            }
        }
        new
    } else {
        let body = Bytes::from_request(req, &())
            .await
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        if content_type(&headers).starts_with("application/json") {
            parse_json(&body)?
        } else {
            NewAsset {
                generator: None,
                obj: Some(String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("OBJ is not UTF-8"))?),
                color: None,
                place_instance: true,
            }
        }
    };
    let source = match (new.obj, new.generator) {
        (Some(obj), None) => AssetSource::Obj(obj),
        (None, Some(g)) => AssetSource::Generator(g),
        _ => return Err(ApiError::bad_request("provide exactly one of an OBJ file and a generator")),
    };
    let added = blocking(move || Ok(s.add_asset(source, new.color, new.place_instance)?)).await?;
    tracing::info!(session = id, asset = added.asset_id, "asset added");
    Ok((StatusCode::CREATED, Json(added)))
}

async fn delete_asset(
    State(store): State<Store>,
    Path((id, aid)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let (removed, revision) = s.delete_asset(&aid)?;
    Ok(Json(json!({ "removed_instances": removed, "revision": revision })))
}

async fn asset_mesh(State(store): State<Store>, Path((id, aid)): Path<(String, String)>) -> ApiResult<Response> {
    let s = session(&store, &id)?;
    let obj = blocking(move || Ok(write_obj(&s.asset_mesh(&aid)?))).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], obj).into_response())
}

async fn asset_mask(
    State(store): State<Store>,
    Path((id, aid)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let revision = s.revision();
    let mask = blocking(move || Ok(s.mask(&aid)?)).await?;
    Ok(Json(json!({
        "kept": mask.as_slice(),
        "kept_count": mask.kept_count(),
        "total": mask.len(),
        "revision": revision,
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrokeRequest {
    path: Vec<[f64; 3]>,
    radius: f64,
    mode: BrushMode,
    /// Instance whose placement maps the world-space path into the asset.
    #[serde(default)]
    instance_id: Option<String>,
}

async fn add_stroke(
    State(store): State<Store>,
    Path((id, aid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let req: StrokeRequest = parse_json(&body)?;
    let path = req.path.iter().map(|&p| Vec3::from(p)).collect();
    let stroke = BrushStroke::new(path, req.radius, req.mode)?;
    let (stats, revision) = blocking(move || Ok(s.paint(&aid, &stroke, req.instance_id.as_deref())?)).await?;
    Ok(Json(json!({ "kept": stats.kept, "total": stats.total, "revision": revision })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionRequest {
    initial: BrushMode,
}

async fn reset_selection(
    State(store): State<Store>,
    Path((id, aid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let req: SelectionRequest = parse_json(&body)?;
    Ok(revision_json(s.reset_selection(&aid, req.initial)?))
}

/// Either `{"asset_id": ..., "transform": [...]}` or `{"duplicate_of": iid}`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRequest {
    #[serde(default)]
    asset_id: Option<String>,
    #[serde(default)]
    transform: Option<Transform3>,
    #[serde(default)]
    duplicate_of: Option<String>,
}

async fn add_instance(State(store): State<Store>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let req: InstanceRequest = parse_json(&body)?;
    let (iid, revision) = match (req.asset_id, req.duplicate_of) {
        (Some(aid), None) => s.add_instance(&aid, req.transform.unwrap_or_default())?,
        (None, Some(src)) if req.transform.is_none() => s.duplicate_instance(&src)?,
        _ => {
            return Err(ApiError::bad_request(
                "provide asset_id (with an optional transform) or duplicate_of alone",
            ))
        }
    };
    Ok((
        StatusCode::CREATED,
        Json(json!({ "instance_id": iid, "revision": revision })),
    ))
}

async fn delete_instance(
    State(store): State<Store>,
    Path((id, iid)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    Ok(revision_json(s.delete_instance(&iid)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformRequest {
    transform: Transform3,
}

async fn set_transform(
    State(store): State<Store>,
    Path((id, iid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let req: TransformRequest = parse_json(&body)?;
    Ok(revision_json(s.set_transform(&iid, req.transform)?))
}

/// Runs composition to completion; `GET` on the same path polls progress.
async fn compose(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let started = std::time::Instant::now();
    let summary = blocking(move || Ok(s.compose_now()?)).await?;
    tracing::info!(
        session = id,
        revision = summary.revision,
        faces = summary.face_count,
        ms = started.elapsed().as_millis() as u64,
        "composed"
    );
    Ok(Json(summary))
}

#[derive(Serialize)]
struct StatusBody {
    #[serde(flatten)]
    status: voxcompose_core::session::ComposeStatus,
    scene_revision: u64,
    result_revision: Option<u64>,
    stale: Option<bool>,
}

async fn compose_status(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let s = session(&store, &id)?;
    let result = s.result();
    Ok(Json(StatusBody {
        status: s.compose_status(),
        scene_revision: s.revision(),
        result_revision: result.as_ref().map(|(r, _)| r.revision),
        stale: result.map(|(_, stale)| stale),
    }))
}

/// The latest result as OBJ; `x-revision` names the scene revision it was
/// computed from and `x-stale` says whether the scene has moved on.
async fn result(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = session(&store, &id)?;
    let scene_revision = s.revision();
    let (r, stale) = s.result().ok_or(Error::NoResult)?;
    let revision = r.revision;
    let obj = blocking(move || Ok(write_obj(&r.mesh))).await?;
    let mut resp = ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], obj).into_response();
    let h = resp.headers_mut();
    h.insert(REVISION_HEADER, HeaderValue::from(revision));
    h.insert(SCENE_REVISION_HEADER, HeaderValue::from(scene_revision));
    h.insert(STALE_HEADER, HeaderValue::from_static(if stale { "true" } else { "false" }));
    Ok(resp)
}
