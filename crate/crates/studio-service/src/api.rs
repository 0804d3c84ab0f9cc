//! HTTP routes over the registry, sessions and job queue.

use std::collections::HashMap;
use std::path::Path as FsPath;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use scene_data::{AttributeVector, SemanticLayout};
use serde_json::json;
use uuid::Uuid;

use crate::error::{Result, StudioError};
use crate::pipeline::{self, ManipulateInput, ManipulateOutput};
use crate::registry::{CheckpointInfo, LoadedModel, Registry};
use crate::session::SessionState;
use crate::wire::*;

pub const OPENAPI_YAML: &str = include_str!("../openapi.yaml");

#[derive(Debug, Default)]
pub struct AppState {
    pub registry: Registry,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionState>>>>,
    jobs: Mutex<HashMap<String, JobStatus>>,
}

impl AppState {
    pub fn new(registry: Registry) -> Arc<Self> {
        Arc::new(Self { registry, ..Self::default() })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionState>>> {
        self.sessions.lock().get(id).cloned().ok_or_else(|| StudioError::NotFound(format!("session `{id}`")))
    }
}

impl IntoResponse for StudioError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.to_string(), stage: self.stage().map(str::to_string) };
        (self.status(), Json(body)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/openapi.yaml", get(|| async { ([("content-type", "application/yaml")], OPENAPI_YAML) }))
        .route("/attributes", get(attributes))
        .route("/checkpoint", get(checkpoint).post(load_checkpoint))
        .route("/hallucinate", post(hallucinate))
        .route("/hallucinate/sweep", post(sweep))
        .route("/manipulate", post(manipulate))
        .route("/jobs/{id}", get(job))
        .route("/session", post(create_session))
        .route("/session/{id}", get(get_session))
        .route("/session/{id}/layout-edit", post(layout_edit))
        .route("/session/{id}/undo", post(undo))
        .route("/session/{id}/attributes", post(set_attributes))
        .route("/session/{id}/hallucinate", post(session_hallucinate))
        .with_state(state)
}

async fn healthz(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let ck = st.registry.current().ok().map(|m| m.info());
    Json(json!({ "status": "ok", "checkpoint": ck }))
}

async fn attributes(State(st): State<Arc<AppState>>) -> Result<Json<AttributesResponse>> {
    let m = st.registry.current()?;
    Ok(Json(AttributesResponse { names: m.attribute_names().to_vec(), checkpoint_hash: m.hash.clone() }))
}

async fn checkpoint(State(st): State<Arc<AppState>>) -> Result<Json<CheckpointInfo>> {
    Ok(Json(st.registry.current()?.info()))
}

async fn load_checkpoint(State(st): State<Arc<AppState>>, Json(req): Json<LoadCheckpointRequest>) -> Result<Json<CheckpointInfo>> {
    let st2 = st.clone();
    let loaded = tokio::task::spawn_blocking(move || st2.registry.load(FsPath::new(&req.path)))
        .await
        .map_err(|e| StudioError::Checkpoint(e.to_string()))??;
    Ok(Json(loaded.info()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| StudioError::Stage { stage: "worker", message: e.to_string() })?
}

async fn hallucinate(State(st): State<Arc<AppState>>, Json(req): Json<HallucinateRequest>) -> Result<Json<HallucinateResponse>> {
    let m = st.registry.current()?;
    let layout = decode_layout(&req.layout, m.num_classes())?;
    pipeline::validate_layout(&m, &layout)?;
    pipeline::validate_attributes(&m, &req.attributes)?;
    let seed = req.seed;
    let m2 = m.clone();
    let (image, fitted) = blocking(move || pipeline::hallucinate(&m2, &layout, &req.attributes, seed)).await?;
    Ok(Json(HallucinateResponse { image: encode_image(&image), layout: encode_layout(&fitted), checkpoint_hash: m.hash.clone(), seed }))
}

async fn sweep(State(st): State<Arc<AppState>>, Json(req): Json<SweepRequest>) -> Result<Json<SweepResponse>> {
    let m = st.registry.current()?;
    let layout = decode_layout(&req.layout, m.num_classes())?;
    pipeline::validate_layout(&m, &layout)?;
    let (m2, r2) = (m.clone(), req.clone());
    let images = blocking(move || pipeline::sweep(&m2, &layout, &r2.attributes, &r2.attribute, &r2.values, r2.seed)).await?;
    Ok(Json(SweepResponse {
        attribute: req.attribute,
        values: req.values,
        images: images.iter().map(encode_image).collect(),
        checkpoint_hash: m.hash.clone(),
        seed: req.seed,
    }))
}

pub fn manipulate_response(m: &LoadedModel, out: &ManipulateOutput, seed: u64, dump_stages: bool) -> ManipulateResponse {
    ManipulateResponse {
        image: encode_image(&out.output),
        hallucination: encode_image(&out.hallucination),
        stages: out
            .stages
            .iter()
            .map(|s| StageImage { stage: s.stage.name().to_string(), seconds: s.seconds, image: dump_stages.then(|| encode_image(&s.image)) })
            .collect(),
        timing: out.timing,
        checkpoint_hash: m.hash.clone(),
        seed,
    }
}

async fn manipulate(State(st): State<Arc<AppState>>, Json(req): Json<ManipulateRequest>) -> Result<(StatusCode, Json<JobAccepted>)> {
    let m = st.registry.current()?;
    let image = decode_image(&req.image)?;
    let session = req.session.as_deref().map(|id| st.session(id)).transpose()?;
    let (layout, attributes) = match (&session, &req.layout) {
        (_, Some(l)) => (decode_layout(l, m.num_classes())?, req.attributes.clone()),
        (Some(s), None) => {
            let s = s.lock();
            (s.layout.clone(), req.attributes.clone().or_else(|| Some(s.attributes.values().to_vec())))
        }
        (None, None) => return Err(StudioError::Validation("provide a layout or a session".into())),
    };
    let attributes = attributes.ok_or_else(|| StudioError::Validation("attributes are required".into()))?;
    let input = ManipulateInput { image, layout, attributes, seed: req.seed, transfer: req.transfer.clone() };
    pipeline::validate_manipulation(&m, &input)?;

    let id = Uuid::new_v4().to_string();
    let hash = m.hash.clone();
    let status = JobStatus { id: id.clone(), state: JobState::Queued, checkpoint_hash: hash.clone(), seed: req.seed, result: None, error: None };
    st.jobs.lock().insert(id.clone(), status);
    if let Some(s) = &session {
        s.lock().last_manipulation = Some(id.clone());
    }
    let (st2, id2, dump) = (st.clone(), id.clone(), req.dump_stages);
    tokio::task::spawn_blocking(move || {
        if let Some(j) = st2.jobs.lock().get_mut(&id2) {
            j.state = JobState::Running;
        }
        let outcome = pipeline::manipulate(&m, &input);
        let mut jobs = st2.jobs.lock();
        let Some(j) = jobs.get_mut(&id2) else { return };
        match outcome {
            Ok(out) => {
                j.result = Some(manipulate_response(&m, &out, input.seed, dump));
                j.state = JobState::Done;
            }
            Err(e) => {
                log::warn!("job {id2} failed: {e}");
                j.error = Some(ErrorBody { error: e.to_string(), stage: e.stage().map(str::to_string) });
                j.state = JobState::Failed;
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id: id, checkpoint_hash: hash, seed: req.seed })))
}

async fn job(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<JobStatus>> {
    st.jobs.lock().get(&id).cloned().map(Json).ok_or_else(|| StudioError::NotFound(format!("job `{id}`")))
}

fn session_response(id: &str, s: &SessionState, m: &LoadedModel, changed: usize, undone: bool) -> SessionResponse {
    SessionResponse {
        id: id.to_string(),
        layout: encode_layout(&s.layout),
        attributes: s.attributes.values().to_vec(),
        undo_depth: s.undo.len(),
        changed,
        undone,
        last_hallucination: s.last_hallucination.clone(),
        last_manipulation: s.last_manipulation.clone(),
        checkpoint_hash: m.hash.clone(),
    }
}

async fn create_session(State(st): State<Arc<AppState>>, Json(req): Json<CreateSessionRequest>) -> Result<Json<SessionResponse>> {
    let m = st.registry.current()?;
    let layout = match &req.layout {
        Some(l) => decode_layout(l, m.num_classes())?,
        None => {
            let side = m.resolution();
            SemanticLayout::filled(side, side, req.fill_label, m.num_classes())?
        }
    };
    pipeline::validate_layout(&m, &layout)?;
    let attributes = match &req.attributes {
        Some(v) => pipeline::validate_attributes(&m, v)?,
        None => AttributeVector::zeros(m.attribute_names().to_vec()),
    };
    let state = SessionState::new(layout, attributes);
    let id = Uuid::new_v4().to_string();
    let resp = session_response(&id, &state, &m, 0, false);
    st.sessions.lock().insert(id, Arc::new(Mutex::new(state)));
    Ok(Json(resp))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionResponse>> {
    let m = st.registry.current()?;
    let s = st.session(&id)?;
    let s = s.lock();
    Ok(Json(session_response(&id, &s, &m, 0, false)))
}

async fn layout_edit(State(st): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<LayoutEditRequest>) -> Result<Json<SessionResponse>> {
    let m = st.registry.current()?;
    let s = st.session(&id)?;
    let mut s = s.lock();
    let changed = s.apply(&req.edit, req.label)?;
    Ok(Json(session_response(&id, &s, &m, changed, false)))
}

async fn undo(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionResponse>> {
    let m = st.registry.current()?;
    let s = st.session(&id)?;
    let mut s = s.lock();
    let undone = s.undo();
    Ok(Json(session_response(&id, &s, &m, 0, undone)))
}

async fn set_attributes(State(st): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<AttributesRequest>) -> Result<Json<SessionResponse>> {
    let m = st.registry.current()?;
    let attributes = pipeline::validate_attributes(&m, &req.attributes)?;
    let s = st.session(&id)?;
    let mut s = s.lock();
    s.attributes = attributes;
    Ok(Json(session_response(&id, &s, &m, 0, false)))
}

async fn session_hallucinate(State(st): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<SeedRequest>) -> Result<Json<HallucinateResponse>> {
    let m = st.registry.current()?;
    let s = st.session(&id)?;
    let (layout, attributes) = {
        let s = s.lock();
        (s.layout.clone(), s.attributes.values().to_vec())
    };
    let m2 = m.clone();
    let (image, fitted) = blocking(move || pipeline::hallucinate(&m2, &layout, &attributes, req.seed)).await?;
    let encoded = encode_image(&image);
    s.lock().last_hallucination = Some(encoded.clone());
    Ok(Json(HallucinateResponse { image: encoded, layout: encode_layout(&fitted), checkpoint_hash: m.hash.clone(), seed: req.seed }))
}
