use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use presetlab_core::bank::Generation;
use presetlab_core::highlight::{group_importance, GroupImportance};
use presetlab_core::mix::NavDirection;
use presetlab_core::modify::{Column, MatrixSnapshot};
use presetlab_core::preset::{diff_presets, ParamValue, Preset};
use presetlab_core::schema::{ParamKind, ParameterSchema};
use presetlab_core::search::{audio_search, text_search, Query, SearchResults};
use presetlab_core::Error;

use crate::error::ApiError;
use crate::session::{ExampleSource, FavoriteAction, Mutation, Session};
use crate::state::AppState;

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose rejections use the service error format.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|e| ApiError::bad_request("invalid request body", Some(e.body_text())))
    }
}

/// Query string whose rejections use the service error format.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|axum::extract::Query(v)| Params(v))
            .map_err(|e| ApiError::bad_request("invalid query string", Some(e.body_text())))
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_summary))
        .route("/search/text", post(search_text))
        .route("/search/audio", post(search_audio))
        .route("/favorites", post(favorites))
        .route("/mix", post(mix))
        .route("/generations/navigate", post(navigate))
        .route("/generations/{index}/bank", get(generation_bank))
        .route("/modify/search", post(modify_search))
        .route("/modify/apply", post(modify_apply))
        .route("/modify/importance", get(modify_importance))
        .route("/render/{id}", get(render_wav))
        .route("/presets/{id}", get(preset))
        .route("/presets/{id}/diff", get(preset_diff))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn session_of(state: &AppState, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
    state.session(id).ok_or_else(|| ApiError::unknown_session(id))
}

fn lock(s: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

fn current_generation(state: &AppState, id: &str) -> ApiResult<Arc<Generation>> {
    let s = session_of(state, id)?;
    let g = lock(&s).generation().clone();
    Ok(g)
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct PresetView {
    pub id: String,
    pub name: String,
    pub provenance: String,
    pub values: BTreeMap<String, Value>,
}

pub fn value_json(schema: &ParameterSchema, index: usize, v: &ParamValue) -> Value {
    match v {
        ParamValue::Continuous(x) => Value::from(*x),
        ParamValue::Discrete(_) => Value::from(schema.params()[index].format_value(v)),
    }
}

impl PresetView {
    pub fn new(p: &Preset, schema: &ParameterSchema) -> Self {
        Self {
            id: p.id.clone(),
            name: p.name.clone(),
            provenance: p.provenance.as_str().into(),
            values: schema
                .params()
                .iter()
                .enumerate()
                .map(|(i, spec)| (spec.id.clone(), value_json(schema, i, &p.value(i))))
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct ChangeView {
    pub id: String,
    pub group: String,
    pub old: Value,
    pub new: Value,
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct DiffView {
    pub changed_params: Vec<ChangeView>,
    pub changed_groups: Vec<String>,
}

fn diff_view(a: &Preset, b: &Preset, schema: &ParameterSchema) -> ApiResult<DiffView> {
    let d = diff_presets(a, b, schema)?;
    Ok(DiffView {
        changed_params: d
            .changed_params()
            .iter()
            .map(|c| ChangeView {
                id: c.id.clone(),
                group: schema.params()[c.index].group.clone(),
                old: value_json(schema, c.index, &c.old),
                new: value_json(schema, c.index, &c.new),
            })
            .collect(),
        changed_groups: d.changed_groups().to_vec(),
    })
}

async fn schema(State(state): State<Shared>) -> Json<Value> {
    let s = &state.engine.schema;
    let params: Vec<Value> = s
        .params()
        .iter()
        .map(|p| {
            let mut o = serde_json::json!({
                "id": p.id,
                "group": p.group,
                "default": value_json(s, s.param_index(&p.id).expect("own id"), &p.default),
            });
            match &p.kind {
                ParamKind::Continuous => o["kind"] = "continuous".into(),
                ParamKind::Discrete { choices } => {
                    o["kind"] = "discrete".into();
                    o["choices"] = choices.clone().into();
                }
            }
            o
        })
        .collect();
    Json(serde_json::json!({ "groups": s.groups(), "params": params }))
}

async fn create_session(State(state): State<Shared>) -> ApiResult<(StatusCode, Json<Value>)> {
    let id = state.create_session()?;
    let size = state.engine.default_bank.len();
    Ok((
        StatusCode::CREATED,
        Json(serde_json::json!({ "session": id, "cursor": 0, "chain_length": 1, "size": size })),
    ))
}

async fn session_summary(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = session_of(&state, &id)?;
    let summary = lock(&s).summary(&state.engine.schema);
    Ok(Json(serde_json::to_value(summary).expect("summary serializes")))
}

#[derive(Deserialize)]
struct TextSearchReq {
    session: String,
    query: String,
    k: Option<usize>,
}

async fn search_text(State(state): State<Shared>, Body(req): Body<TextSearchReq>) -> ApiResult<Json<SearchResults>> {
    let generation = current_generation(&state, &req.session)?;
    let k = req.k.unwrap_or(state.engine.top_k.search);
    blocking(move || Ok(Json(text_search(&req.query, &generation, state.engine.provider.as_ref(), k)?))).await
}

#[derive(Deserialize)]
struct AudioSearchReq {
    session: String,
    preset_id: String,
    k: Option<usize>,
}

async fn search_audio(State(state): State<Shared>, Body(req): Body<AudioSearchReq>) -> ApiResult<Json<SearchResults>> {
    let generation = current_generation(&state, &req.session)?;
    let k = req.k.unwrap_or(state.engine.top_k.search);
    blocking(move || Ok(Json(audio_search(&req.preset_id, &generation, k)?))).await
}

#[derive(Deserialize)]
struct FavoriteReq {
    session: String,
    preset_id: Option<String>,
    action: FavoriteAction,
}

/// Runs a mutation on a worker thread under the session lock and maps the
/// updated session to a response.
async fn mutate<T: Send + 'static>(
    state: Shared,
    session: &str,
    mutation: Mutation,
    respond: impl FnOnce(&AppState, &Session) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let s = session_of(&state, session)?;
    blocking(move || {
        let mut guard = lock(&s);
        state.mutate(&mut guard, mutation)?;
        respond(&state, &guard)
    })
    .await
}

async fn favorites(State(state): State<Shared>, Body(req): Body<FavoriteReq>) -> ApiResult<Json<Value>> {
    let m = Mutation::Favorite {
        preset_id: req.preset_id,
        action: req.action,
    };
    mutate(state, &req.session, m, |_, s| {
        Ok(Json(serde_json::json!({ "favorites": s.favorites.ids() })))
    })
    .await
}

#[derive(Deserialize)]
struct MixReq {
    session: String,
    seed: Option<u64>,
}

async fn mix(State(state): State<Shared>, Body(req): Body<MixReq>) -> ApiResult<Json<Value>> {
    let seed = req.seed.unwrap_or_else(|| state.mix_seed());
    mutate(state, &req.session, Mutation::Mix { seed }, move |_, s| {
        let g = s.chain.current();
        Ok(Json(serde_json::json!({
            "index": s.chain.cursor(),
            "size": g.len(),
            "seed": seed,
            "parents": s.favorites.ids(),
            "chain_length": s.chain.len(),
        })))
    })
    .await
}

#[derive(Deserialize)]
struct NavigateReq {
    session: String,
    dir: NavDirection,
}

async fn navigate(State(state): State<Shared>, Body(req): Body<NavigateReq>) -> ApiResult<Json<Value>> {
    mutate(state, &req.session, Mutation::Navigate { dir: req.dir }, |_, s| {
        Ok(Json(serde_json::json!({
            "cursor": s.chain.cursor(),
            "chain_length": s.chain.len(),
            "size": s.chain.current().len(),
        })))
    })
    .await
}

#[derive(Deserialize)]
struct SessionParam {
    session: Option<String>,
}

async fn generation_bank(
    State(state): State<Shared>,
    Path(index): Path<usize>,
    Params(p): Params<SessionParam>,
) -> ApiResult<Response> {
    let generation = match &p.session {
        Some(id) => {
            let s = session_of(&state, id)?;
            let g = lock(&s).chain.get(index).cloned();
            g.ok_or_else(|| ApiError::not_found(format!("no generation {index}")))?
        }
        None if index == 0 => state.engine.default_bank.clone(),
        None => return Err(ApiError::bad_request("generations above 0 need a session", None)),
    };
    let text = generation.to_text(&state.engine.schema);
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

#[derive(Deserialize)]
struct ModifySearchReq {
    session: String,
    base: Option<String>,
    query: Option<String>,
    anchor: Option<String>,
    refine: Option<usize>,
}

fn matrix_response(state: &AppState, s: &Session) -> ApiResult<Json<MatrixSnapshot>> {
    let m = s.matrix.as_ref().ok_or_else(|| ApiError::internal("matrix missing after search"))?;
    Ok(Json(m.snapshot(&state.engine.schema)))
}

async fn modify_search(State(state): State<Shared>, Body(req): Body<ModifySearchReq>) -> ApiResult<Json<MatrixSnapshot>> {
    let source = match (req.query, req.anchor, req.refine) {
        (Some(q), None, None) => ExampleSource::Query(q),
        (None, Some(a), None) => ExampleSource::Anchor(a),
        (None, None, Some(c)) => ExampleSource::Refine(c),
        _ => {
            return Err(ApiError::bad_request(
                "give exactly one of \"query\", \"anchor\" or \"refine\"",
                None,
            ))
        }
    };
    let m = Mutation::ModifySearch { base: req.base, source };
    mutate(state, &req.session, m, matrix_response).await
}

#[derive(Deserialize)]
struct ModifyApplyReq {
    session: String,
    group: String,
    column: Column,
}

#[derive(Serialize)]
struct ApplyResponse {
    preset: PresetView,
    diff: DiffView,
    matrix: MatrixSnapshot,
}

async fn modify_apply(State(state): State<Shared>, Body(req): Body<ModifyApplyReq>) -> ApiResult<Json<Value>> {
    let m = Mutation::ModifyApply {
        group: req.group,
        column: req.column,
    };
    mutate(state, &req.session, m, |state, s| {
        let schema = &state.engine.schema;
        let m = s.matrix.as_ref().expect("apply needs a matrix");
        let body = ApplyResponse {
            preset: PresetView::new(m.working(), schema),
            diff: diff_view(m.base(), m.working(), schema)?,
            matrix: m.snapshot(schema),
        };
        Ok(Json(serde_json::to_value(body).expect("response serializes")))
    })
    .await
}

#[derive(Deserialize)]
struct ImportanceParams {
    session: String,
    query: Option<String>,
    anchor: Option<String>,
}

#[derive(Serialize)]
struct ImportanceResponse {
    query: Query,
    #[serde(flatten)]
    importance: GroupImportance,
}

async fn modify_importance(State(state): State<Shared>, Params(p): Params<ImportanceParams>) -> ApiResult<Json<Value>> {
    let s = session_of(&state, &p.session)?;
    let (generation, matrix_query) = {
        let s = lock(&s);
        (s.generation().clone(), s.matrix.as_ref().map(|m| m.query().clone()))
    };
    let query = match (p.query, p.anchor, matrix_query) {
        (Some(q), None, _) => Query::Text(q),
        (None, Some(a), _) => Query::Anchor(a),
        (None, None, Some(q)) => q,
        (None, None, None) => return Err(ApiError::bad_request("no query and no example matrix", None)),
        _ => return Err(ApiError::bad_request("give at most one of \"query\" or \"anchor\"", None)),
    };
    blocking(move || {
        let engine = &state.engine;
        let config = engine.highlight_config();
        let baselines = engine.baselines.get(&generation, &engine.schema, config.smoothing);
        let importance = group_importance(
            &query,
            &generation,
            engine.provider.as_ref(),
            &engine.schema,
            &config,
            &baselines,
        )?;
        let body = ImportanceResponse { query, importance };
        Ok(Json(serde_json::to_value(body).expect("response serializes")))
    })
    .await
}

fn lookup(state: &AppState, session: Option<&str>, id: &str) -> ApiResult<Preset> {
    match session {
        Some(sid) => {
            let s = session_of(state, sid)?;
            let found = lock(&s).find_preset(id).cloned();
            found.ok_or_else(|| Error::UnknownPreset(id.into()).into())
        }
        None => state
            .engine
            .default_bank
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownPreset(id.into()).into()),
    }
}

async fn render_wav(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Params(p): Params<SessionParam>,
) -> ApiResult<Response> {
    let preset = lookup(&state, p.session.as_deref(), &id)?;
    let bytes = blocking(move || Ok(state.wav(&preset)?)).await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes.as_ref().clone()).into_response())
}

async fn preset(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Params(p): Params<SessionParam>,
) -> ApiResult<Json<PresetView>> {
    let preset = lookup(&state, p.session.as_deref(), &id)?;
    Ok(Json(PresetView::new(&preset, &state.engine.schema)))
}

#[derive(Deserialize)]
struct DiffParams {
    session: Option<String>,
    against: String,
}

async fn preset_diff(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Params(p): Params<DiffParams>,
) -> ApiResult<Json<DiffView>> {
    let a = lookup(&state, p.session.as_deref(), &id)?;
    let b = lookup(&state, p.session.as_deref(), &p.against)?;
    Ok(Json(diff_view(&a, &b, &state.engine.schema)?))
}
