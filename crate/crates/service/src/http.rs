//! HTTP front end. Artifact responses are envelopes
//! `{id?, checksum, reproduce, result}` where `checksum` is the SHA-256 of
//! the canonical bytes of `result`, the same bytes the CLI writes to disk.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use fairaudit::dataset::{parse_csv, FeatureSchema};
use fairaudit::fairness::ScoreSource;
use fairaudit::improve::{AdjustedScore, ShapeAdjustment};
use fairaudit::models::ModelSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::ops::{self, canonical_json, sha256_hex, DatasetSource, EvaluateOptions, PolicySpec, ScoreSpec, SweepConfig};
use crate::state::{
    AdjustedEntry, AppState, DatasetEntry, JobError, JobInfo, JobStatus, ModelEntry, Recorded, SurrogateEntry,
};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/generate", post(generate))
        .route("/datasets/upload", post(upload))
        .route("/models/fit", post(fit))
        .route("/models/{id}", get(model_info))
        .route("/models/{id}/shapes", get(shapes))
        .route("/models/{id}/interactions", get(interactions))
        .route("/models/{id}/distill", post(distill))
        .route("/jobs/{id}", get(job))
        .route("/evaluate", post(evaluate))
        .route("/manifold", post(manifold))
        .route("/adjust", post(adjust))
        .fallback(|| async { ServiceError::NoRoute })
        .with_state(state)
}

/// What to run offline to get the same `result`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reproduce {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    checksum: String,
    reproduce: Reproduce,
    result: &'a T,
}

fn envelope<T: Serialize, C: Serialize>(id: Option<u64>, command: &str, seed: Option<u64>, config: &C, result: &T) -> Vec<u8> {
    canonical_json(&Envelope {
        id,
        checksum: sha256_hex(&canonical_json(result)),
        reproduce: Reproduce {
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
        },
        result,
    })
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [("content-type", "application/json")], body).into_response()
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> ServiceResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

fn path_id(p: Result<Path<u64>, PathRejection>) -> ServiceResult<u64> {
    p.map(|Path(id)| id).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

/// Runs a mutation once per idempotency key: a retry with the same key and
/// body replays the recorded response, a different body is a conflict.
async fn idempotent<F, Fut>(state: &AppState, route: &str, headers: &HeaderMap, body: Bytes, run: F) -> Response
where
    F: FnOnce(Bytes) -> Fut,
    Fut: Future<Output = ServiceResult<(StatusCode, Vec<u8>)>>,
{
    let key = match headers.get("idempotency-key").map(|v| v.to_str()) {
        None => None,
        Some(Ok(k)) => Some(k.to_string()),
        Some(Err(_)) => return ServiceError::BadRequest("idempotency key is not visible ASCII".into()).into_response(),
    };
    let fingerprint = sha256_hex(&[route.as_bytes(), b"\n", &body[..]].concat());
    if let Some(k) = &key {
        if let Some(rec) = state.lock().idempotency.get(k) {
            if rec.fingerprint != fingerprint {
                return ServiceError::IdempotencyConflict.into_response();
            }
            let status = StatusCode::from_u16(rec.status).expect("recorded status is valid");
            return json_response(status, rec.body.clone());
        }
    }
    match run(body).await {
        Ok((status, bytes)) => {
            if let Some(k) = key {
                let mut store = state.lock();
                // a concurrent retry may have won; replay what it recorded
                let rec = store.idempotency.entry(k).or_insert(Recorded {
                    fingerprint,
                    status: status.as_u16(),
                    body: bytes,
                });
                let status = StatusCode::from_u16(rec.status).expect("recorded status is valid");
                return json_response(status, rec.body.clone());
            }
            json_response(status, bytes)
        }
        Err(e) => e.into_response(),
    }
}

fn respond(r: ServiceResult<Vec<u8>>) -> Response {
    match r {
        Ok(bytes) => json_response(StatusCode::OK, bytes),
        Err(e) => e.into_response(),
    }
}

async fn list_datasets(State(state): State<AppState>) -> Response {
    #[derive(Serialize)]
    struct Item<'a> {
        id: u64,
        #[serde(flatten)]
        summary: &'a ops::DatasetSummary,
    }
    let store = state.lock();
    let items: Vec<Item> = store
        .datasets
        .iter()
        .map(|(&id, e)| Item { id, summary: &e.summary })
        .collect();
    json_response(StatusCode::OK, canonical_json(&items))
}

fn publish_dataset(state: &AppState, data: fairaudit::dataset::ExperimentDataset, source: Option<DatasetSource>) -> (u64, ops::DatasetSummary) {
    let summary = ops::summarize(&data, source);
    let mut store = state.lock();
    let id = store.fresh_id();
    store.datasets.insert(
        id,
        DatasetEntry {
            data: Arc::new(data),
            summary: summary.clone(),
        },
    );
    (id, summary)
}

async fn generate(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let st = state.clone();
    idempotent(&state, "generate", &headers, body, |body| async move {
        let source: DatasetSource = parse(&body)?;
        let src = source.clone();
        let data = blocking(move || ops::generate(&src)).await?;
        let (id, summary) = publish_dataset(&st, data, Some(source.clone()));
        Ok((StatusCode::CREATED, envelope(Some(id), "generate", None, &source, &summary)))
    })
    .await
}

#[derive(Deserialize)]
struct UploadRequest {
    schema: serde_json::Value,
    csv: String,
}

async fn upload(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let st = state.clone();
    idempotent(&state, "upload", &headers, body, |body| async move {
        let req: UploadRequest = parse(&body)?;
        let schema = FeatureSchema::from_json(&req.schema.to_string())?;
        let data = blocking(move || Ok(parse_csv(req.csv.as_bytes(), schema, "upload")?)).await?;
        let (id, summary) = publish_dataset(&st, data, None);
        let config = serde_json::json!({ "csv": "upload", "schema": req.schema });
        Ok((StatusCode::CREATED, envelope(Some(id), "upload", None, &config, &summary)))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitRequest {
    dataset_id: u64,
    #[serde(default = "ops::default_model_spec")]
    model: ModelSpec,
    #[serde(default)]
    seed: u64,
}

async fn fit(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let st = state.clone();
    idempotent(&state, "fit", &headers, body, |body| async move {
        let req: FitRequest = parse(&body)?;
        let (data, job_id) = {
            let mut store = st.lock();
            let data = store.dataset(req.dataset_id)?.data.clone();
            let job_id = store.fresh_id();
            store.jobs.insert(
                job_id,
                JobInfo {
                    id: job_id,
                    status: JobStatus::Running,
                    model_id: None,
                    error: None,
                },
            );
            (data, job_id)
        };
        let info = st.lock().job(job_id)?.clone();
        let worker = st.clone();
        tokio::task::spawn_blocking(move || {
            let outcome = ops::fit(&data, &req.model, req.seed)
                .map(|(tl, bytes)| (ops::model_summary(&tl, &bytes, &req.model, req.seed, &data), tl));
            let mut store = worker.lock();
            let job = match outcome {
                Ok((summary, tl)) => {
                    let model_id = store.fresh_id();
                    store.models.insert(
                        model_id,
                        ModelEntry {
                            learner: Arc::new(tl),
                            dataset_id: req.dataset_id,
                            summary,
                        },
                    );
                    JobInfo {
                        id: job_id,
                        status: JobStatus::Succeeded,
                        model_id: Some(model_id),
                        error: None,
                    }
                }
                Err(e) => JobInfo {
                    id: job_id,
                    status: JobStatus::Failed,
                    model_id: None,
                    error: Some(JobError {
                        code: e.code().to_string(),
                        message: e.to_string(),
                    }),
                },
            };
            store.jobs.insert(job_id, job);
        });
        Ok((StatusCode::ACCEPTED, canonical_json(&info)))
    })
    .await
}

async fn job(State(state): State<AppState>, id: Result<Path<u64>, PathRejection>) -> Response {
    respond(path_id(id).and_then(|id| Ok(canonical_json(state.lock().job(id)?))))
}

async fn model_info(State(state): State<AppState>, id: Result<Path<u64>, PathRejection>) -> Response {
    respond(path_id(id).and_then(|id| {
        let store = state.lock();
        let m = store.model(id)?;
        let config = serde_json::json!({ "dataset_id": m.dataset_id, "model": m.summary.spec });
        Ok(envelope(Some(id), "fit", Some(m.summary.seed), &config, &m.summary))
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SurrogateShapesItem {
    surrogate_id: u64,
    #[serde(flatten)]
    shapes: ops::SurrogateShapes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelShapes {
    arms: Vec<ops::ArmShapes>,
    surrogates: Vec<SurrogateShapesItem>,
}

async fn shapes(State(state): State<AppState>, id: Result<Path<u64>, PathRejection>) -> Response {
    let run = async {
        let id = path_id(id)?;
        let (learner, data, surrogates) = {
            let store = state.lock();
            let m = store.model(id)?;
            let surrogates: Vec<_> = store
                .surrogates
                .iter()
                .filter(|(_, s)| s.model_id == id)
                .map(|(&sid, s)| (sid, s.surrogate.clone(), store.datasets[&s.dataset_id].data.clone()))
                .collect();
            (m.learner.clone(), store.dataset(m.dataset_id)?.data.clone(), surrogates)
        };
        let result = blocking(move || {
            let arms = ops::arm_shapes(&learner, &data)?;
            let surrogates = surrogates
                .into_iter()
                .map(|(sid, s, ds)| {
                    Ok(SurrogateShapesItem {
                        surrogate_id: sid,
                        shapes: ops::surrogate_shapes(&s, &ds)?,
                    })
                })
                .collect::<ServiceResult<Vec<_>>>()?;
            Ok(ModelShapes { arms, surrogates })
        })
        .await?;
        Ok(envelope(Some(id), "shapes", None, &serde_json::json!({ "model_id": id }), &result))
    };
    respond(run.await)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InteractionsQuery {
    #[serde(default)]
    dataset_id: Option<u64>,
    #[serde(default)]
    seed: u64,
    #[serde(rename = "M", alias = "draws", default)]
    draws: Option<usize>,
    #[serde(rename = "K", alias = "k", default)]
    k: Option<usize>,
}

async fn interactions(
    State(state): State<AppState>,
    id: Result<Path<u64>, PathRejection>,
    query: Result<Query<InteractionsQuery>, QueryRejection>,
) -> Response {
    let run = async {
        let id = path_id(id)?;
        let Query(q) = query.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
        let (learner, data) = {
            let store = state.lock();
            let m = store.model(id)?;
            let ds_id = q.dataset_id.unwrap_or(m.dataset_id);
            (m.learner.clone(), store.dataset(ds_id)?.data.clone())
        };
        let defaults = ops::InteractionsConfig::default();
        let cfg = ops::InteractionsConfig {
            draws: q.draws.unwrap_or(defaults.draws),
            k: q.k.unwrap_or(defaults.k),
            baseline: defaults.baseline,
        };
        let c = cfg.clone();
        let seed = q.seed;
        let ranking = blocking(move || ops::interactions(&data, &learner, &c, seed)).await?;
        Ok(envelope(Some(id), "interactions", Some(seed), &cfg, &ranking))
    };
    respond(run.await)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistillRequest {
    #[serde(default)]
    dataset_id: Option<u64>,
    #[serde(default)]
    seed: u64,
    #[serde(flatten)]
    config: ops::DistillRequestConfig,
}

async fn distill(
    State(state): State<AppState>,
    id: Result<Path<u64>, PathRejection>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let model_id = match path_id(id) {
        Ok(id) => id,
        Err(e) => return e.into_response(),
    };
    let st = state.clone();
    let route = format!("distill/{model_id}");
    idempotent(&state, &route, &headers, body, |body| async move {
        let req: DistillRequest = parse(&body)?;
        let (learner, data, dataset_id) = {
            let store = st.lock();
            let m = store.model(model_id)?;
            let ds_id = req.dataset_id.unwrap_or(m.dataset_id);
            (m.learner.clone(), store.dataset(ds_id)?.data.clone(), ds_id)
        };
        let cfg = req.config.clone();
        let seed = req.seed;
        let surrogate = blocking(move || ops::distill_model(&data, &learner, &cfg, seed)).await?;
        let summary = ops::surrogate_summary(&surrogate);
        let sid = {
            let mut store = st.lock();
            let sid = store.fresh_id();
            store.surrogates.insert(
                sid,
                SurrogateEntry {
                    model_id,
                    dataset_id,
                    surrogate: Arc::new(surrogate),
                },
            );
            sid
        };
        Ok((StatusCode::CREATED, envelope(Some(sid), "distill", Some(seed), &req.config, &summary)))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdjustRequest {
    model_id: u64,
    #[serde(default)]
    surrogate_id: Option<u64>,
    adjustments: Vec<ShapeAdjustment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdjustedSummary {
    model_id: u64,
    surrogate_id: u64,
    target: ops::Target,
    adjustments: Vec<ShapeAdjustment>,
}

async fn adjust(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let st = state.clone();
    idempotent(&state, "adjust", &headers, body, |body| async move {
        let req: AdjustRequest = parse(&body)?;
        let mut store = st.lock();
        let model = store.model(req.model_id)?;
        let learner = model.learner.clone();
        let surrogate_id = match req.surrogate_id {
            Some(id) => id,
            None => store.latest_surrogate(req.model_id).ok_or_else(|| {
                ServiceError::Unsupported(format!("model {} has no distilled surrogate", req.model_id))
            })?,
        };
        let entry = store.surrogate(surrogate_id)?;
        if entry.model_id != req.model_id {
            return Err(ServiceError::Unsupported(format!(
                "surrogate {surrogate_id} was not distilled from model {}",
                req.model_id
            )));
        }
        let s = entry.surrogate.clone();
        let score = AdjustedScore::new(
            ops::teacher(&learner, s.target),
            s.student.clone(),
            s.audit.clone(),
            req.adjustments.clone(),
        )?;
        let id = store.fresh_id();
        store.adjusted.insert(
            id,
            AdjustedEntry {
                model_id: req.model_id,
                surrogate_id,
                adjustments: req.adjustments.clone(),
                score: Arc::new(score),
            },
        );
        let summary = AdjustedSummary {
            model_id: req.model_id,
            surrogate_id,
            target: s.target,
            adjustments: req.adjustments,
        };
        Ok((StatusCode::CREATED, envelope(Some(id), "adjust", None, &summary, &summary)))
    })
    .await
}

fn resolve_score(store: &crate::state::Store, spec: &ScoreSpec) -> ServiceResult<ops::ResolvedPolicy> {
    Ok(match spec {
        ScoreSpec::TreatAll => ops::ResolvedPolicy::TreatAll,
        ScoreSpec::TreatNone => ops::ResolvedPolicy::TreatNone,
        ScoreSpec::Constant { value } => ops::ResolvedPolicy::Scored(ScoreSource::Constant(*value)),
        ScoreSpec::Ite { model_id } => {
            let id = model_id.ok_or_else(|| ServiceError::BadRequest("ite score needs model_id".into()))?;
            ops::ResolvedPolicy::Scored(ScoreSource::Ite(store.model(id)?.learner.clone()))
        }
        ScoreSpec::Adjusted { adjusted_id, adjustments } => {
            if !adjustments.is_empty() {
                return Err(ServiceError::BadRequest(
                    "register adjustments through /adjust and pass adjusted_id".into(),
                ));
            }
            let id = adjusted_id.ok_or_else(|| ServiceError::BadRequest("adjusted score needs adjusted_id".into()))?;
            ops::ResolvedPolicy::Scored(ScoreSource::Adjusted(store.adjusted_score(id)?.score.clone()))
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvaluateRequest {
    dataset_id: u64,
    policy: PolicySpec,
    #[serde(flatten)]
    options: EvaluateOptions,
}

async fn evaluate(State(state): State<AppState>, body: Bytes) -> Response {
    let run = async {
        let req: EvaluateRequest = parse(&body)?;
        let (data, policy) = {
            let store = state.lock();
            (store.dataset(req.dataset_id)?.data.clone(), resolve_score(&store, &req.policy.score)?)
        };
        let r = req.clone();
        let out = blocking(move || ops::audit(&data, &policy, &r.policy, &r.options)).await?;
        Ok(envelope(None, "audit", None, &req, &out))
    };
    respond(run.await)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifoldRequest {
    dataset_id: u64,
    score: ScoreSpec,
    #[serde(flatten)]
    sweep: SweepConfig,
}

async fn manifold(State(state): State<AppState>, body: Bytes) -> Response {
    let run = async {
        let req: ManifoldRequest = parse(&body)?;
        let key = sha256_hex(&canonical_json(&req));
        let (data, policy) = {
            let store = state.lock();
            if let Some(bytes) = store.manifolds.get(&key) {
                return Ok(bytes.clone());
            }
            (store.dataset(req.dataset_id)?.data.clone(), resolve_score(&store, &req.score)?)
        };
        let source = match policy {
            ops::ResolvedPolicy::Scored(s) => s,
            ops::ResolvedPolicy::TreatAll | ops::ResolvedPolicy::TreatNone => {
                return Err(ServiceError::BadRequest("a sweep needs a scored policy".into()))
            }
        };
        let cfg = req.sweep.clone();
        let page = blocking(move || ops::sweep(&data, &source, &cfg)).await?;
        let bytes = envelope(None, "sweep", None, &req, &page);
        Ok(state.lock().manifolds.entry(key).or_insert(bytes).clone())
    };
    respond(run.await)
}
