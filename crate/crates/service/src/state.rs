//! In-memory artifact store of one service process. Artifacts are
//! append-only: once published under an id they are never modified.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};

use fairaudit::dataset::ExperimentDataset;
use fairaudit::improve::{AdjustedScore, ShapeAdjustment};
use fairaudit::models::TLearner;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::ops::{DatasetSummary, ModelSummary, Surrogate};

pub struct DatasetEntry {
    pub data: Arc<ExperimentDataset>,
    pub summary: DatasetSummary,
}

pub struct ModelEntry {
    pub learner: Arc<TLearner>,
    pub dataset_id: u64,
    pub summary: ModelSummary,
}

pub struct SurrogateEntry {
    pub model_id: u64,
    pub dataset_id: u64,
    pub surrogate: Arc<Surrogate>,
}

pub struct AdjustedEntry {
    pub model_id: u64,
    pub surrogate_id: u64,
    pub adjustments: Vec<ShapeAdjustment>,
    pub score: Arc<AdjustedScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobInfo {
    pub id: u64,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<JobError>,
}

/// Response recorded under an idempotency key.
pub struct Recorded {
    pub fingerprint: String,
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Default)]
pub struct Store {
    next_id: u64,
    pub datasets: BTreeMap<u64, DatasetEntry>,
    pub models: BTreeMap<u64, ModelEntry>,
    pub surrogates: BTreeMap<u64, SurrogateEntry>,
    pub adjusted: BTreeMap<u64, AdjustedEntry>,
    pub jobs: BTreeMap<u64, JobInfo>,
    pub manifolds: HashMap<String, Vec<u8>>,
    pub idempotency: HashMap<String, Recorded>,
}

impl Store {
    /// Ids are shared by all artifact kinds and never reused.
    pub fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    pub fn dataset(&self, id: u64) -> ServiceResult<&DatasetEntry> {
        self.datasets.get(&id).ok_or(ServiceError::NotFound { kind: "dataset", id })
    }

    pub fn model(&self, id: u64) -> ServiceResult<&ModelEntry> {
        self.models.get(&id).ok_or(ServiceError::NotFound { kind: "model", id })
    }

    pub fn surrogate(&self, id: u64) -> ServiceResult<&SurrogateEntry> {
        self.surrogates.get(&id).ok_or(ServiceError::NotFound { kind: "surrogate", id })
    }

    pub fn adjusted_score(&self, id: u64) -> ServiceResult<&AdjustedEntry> {
        self.adjusted.get(&id).ok_or(ServiceError::NotFound { kind: "adjusted score", id })
    }

    pub fn job(&self, id: u64) -> ServiceResult<&JobInfo> {
        self.jobs.get(&id).ok_or(ServiceError::NotFound { kind: "job", id })
    }

    /// Most recent surrogate distilled from a model.
    pub fn latest_surrogate(&self, model_id: u64) -> Option<u64> {
        self.surrogates
            .iter()
            .rev()
            .find(|(_, s)| s.model_id == model_id)
            .map(|(&id, _)| id)
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Mutex<Store>>,
}

impl AppState {
    pub fn new() -> AppState {
        AppState::default()
    }

    pub fn lock(&self) -> MutexGuard<'_, Store> {
        // a panic inside a handler must not take the whole store down
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}
