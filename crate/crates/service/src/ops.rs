//! Operations shared by the HTTP service and the CLI. Both front ends call
//! these and serialize the results with [`canonical_json`], which is what
//! makes their outputs byte-identical.

use std::sync::Arc;

use fairaudit::dataset::{generate_college, generate_synthetic, CollegeConfig, ExperimentDataset, SyntheticConfig};
use fairaudit::distill::{distill, side_by_side, DistillConfig, ShapeComparison};
use fairaudit::fairness::{
    evaluate, Benchmark, DecisionPolicy, FairnessReport, ScoreSource, ValueModel,
};
use fairaudit::gam::{export_shapes, variance_attribution, AdditiveModel, ShapeDump, ShapeId, VarianceAttribution};
use fairaudit::improve::{
    college_study, default_threshold, shape_removal_curve, sweep_thresholds, threshold_grid, CollegeStudy,
    OutcomeMode, PolicyManifold, RemovalRow, Replacement, ShapeAdjustment, REMOVAL_ALPHAS,
};
use fairaudit::interactions::{rank_pairs, Baseline, RankConfig, Ranking};
use fairaudit::models::{fit_tlearner, FittedModel, MlpParams, ModelSpec, RawModel, TLearner};
use fairaudit::stats::mean;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ServiceError, ServiceResult};

/// Most manifold points returned by one request.
pub const MANIFOLD_POINT_CAP: usize = 10_000;

pub const SURROGATE_VERSION: u32 = 1;

/// Pretty JSON with a trailing newline; the byte form of every artifact.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact serializes");
    out.push(b'\n');
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetSource {
    Synthetic {
        #[serde(default)]
        config: SyntheticConfig,
    },
    College {
        #[serde(default)]
        config: CollegeConfig,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            config: SyntheticConfig::default(),
        }
    }
}

impl DatasetSource {
    pub fn with_seed(mut self, seed: u64) -> DatasetSource {
        match &mut self {
            DatasetSource::Synthetic { config } => config.seed = seed,
            DatasetSource::College { config } => config.seed = seed,
        }
        self
    }
}

pub fn generate(source: &DatasetSource) -> ServiceResult<ExperimentDataset> {
    Ok(match source {
        DatasetSource::Synthetic { config } => generate_synthetic(config)?,
        DatasetSource::College { config } => generate_college(config)?,
    })
}

/// Descriptive header of a dataset; `checksum` identifies its contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub d: usize,
    pub names: Vec<String>,
    pub group_feature: String,
    pub treated_fraction: f64,
    pub checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DatasetSource>,
}

pub fn summarize(ds: &ExperimentDataset, source: Option<DatasetSource>) -> DatasetSummary {
    DatasetSummary {
        n: ds.n(),
        d: ds.d(),
        names: ds.schema().names().to_vec(),
        group_feature: ds.schema().names()[ds.schema().group_feature()].clone(),
        treated_fraction: treated_fraction(ds),
        checksum: ds.checksum(),
        source,
    }
}

pub fn treated_fraction(ds: &ExperimentDataset) -> f64 {
    mean(&ds.t().iter().map(|&t| f64::from(t)).collect::<Vec<_>>())
}

/// Audits another sensitive feature, given by name.
pub fn regroup(ds: &ExperimentDataset, group_feature: Option<&str>) -> ServiceResult<ExperimentDataset> {
    match group_feature {
        None => Ok(ds.clone()),
        Some(name) => {
            let idx = ds
                .schema()
                .index_of(name)
                .ok_or_else(|| fairaudit::Error::InvalidSchema(format!("unknown feature `{name}`")))?;
            Ok(ds.clone().with_group_feature(idx)?)
        }
    }
}

pub fn default_model_spec() -> ModelSpec {
    ModelSpec::Mlp { params: MlpParams::default() }
}

/// Fits a T-learner; returns it with the bytes of its model file.
pub fn fit(ds: &ExperimentDataset, spec: &ModelSpec, seed: u64) -> ServiceResult<(TLearner, Vec<u8>)> {
    let tl = fit_tlearner(ds, spec, seed)?;
    let bytes = tl.to_json().into_bytes();
    Ok((tl, bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: String,
    pub spec: ModelSpec,
    pub seed: u64,
    pub dataset_checksum: String,
    /// SHA-256 of the model file.
    pub checksum: String,
}

pub fn model_summary(tl: &TLearner, bytes: &[u8], spec: &ModelSpec, seed: u64, ds: &ExperimentDataset) -> ModelSummary {
    ModelSummary {
        kind: tl.model1.kind_name().to_string(),
        spec: spec.clone(),
        seed,
        dataset_checksum: ds.checksum(),
        checksum: sha256_hex(bytes),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionsConfig {
    pub draws: usize,
    pub k: usize,
    pub baseline: Baseline,
}

impl Default for InteractionsConfig {
    fn default() -> Self {
        let r = RankConfig::default();
        InteractionsConfig {
            draws: r.draws,
            k: r.k,
            baseline: r.baseline,
        }
    }
}

/// Pairwise interactions of the T-learner, averaged over both arms.
pub fn interactions(ds: &ExperimentDataset, tl: &TLearner, cfg: &InteractionsConfig, seed: u64) -> ServiceResult<Ranking> {
    tl.check_schema(ds.schema())?;
    let rank = RankConfig {
        draws: cfg.draws,
        k: cfg.k,
        baseline: cfg.baseline.clone(),
    };
    Ok(rank_pairs(&[&tl.model0, &tl.model1], ds.schema(), ds.x(), &rank, seed)?)
}

/// Which output of the T-learner plays the teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    Ite,
    Arm0,
    Arm1,
}

pub fn teacher(tl: &Arc<TLearner>, target: Target) -> Arc<dyn RawModel> {
    match target {
        Target::Ite => tl.clone(),
        Target::Arm0 => Arc::new(tl.model0.clone()),
        Target::Arm1 => Arc::new(tl.model1.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DistillRequestConfig {
    pub target: Target,
    pub distill: DistillConfig,
}

/// A distilled surrogate with its audit model; the on-disk form used by
/// shape surgery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub version: u32,
    pub target: Target,
    pub fidelity: f64,
    pub ranking: Ranking,
    pub student: AdditiveModel,
    pub audit: AdditiveModel,
}

impl Surrogate {
    pub fn from_json(bytes: &[u8]) -> ServiceResult<Surrogate> {
        let s: Surrogate = serde_json::from_slice(bytes).map_err(fairaudit::Error::from)?;
        if s.version != SURROGATE_VERSION {
            return Err(fairaudit::Error::UnsupportedVersion(s.version).into());
        }
        Ok(s)
    }
}

/// Headline numbers of a surrogate; `checksum` is the SHA-256 of its file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSummary {
    pub target: Target,
    pub fidelity: f64,
    pub pairs: Vec<(usize, usize)>,
    pub ranking: Ranking,
    pub checksum: String,
}

pub fn surrogate_summary(s: &Surrogate) -> SurrogateSummary {
    SurrogateSummary {
        target: s.target,
        fidelity: s.fidelity,
        pairs: s.student.pairs(),
        ranking: s.ranking.clone(),
        checksum: sha256_hex(&canonical_json(s)),
    }
}

pub fn distill_model(
    ds: &ExperimentDataset,
    tl: &Arc<TLearner>,
    cfg: &DistillRequestConfig,
    seed: u64,
) -> ServiceResult<Surrogate> {
    tl.check_schema(ds.schema())?;
    let d = distill(teacher(tl, cfg.target).as_ref(), ds, &cfg.distill, seed)?;
    Ok(Surrogate {
        version: SURROGATE_VERSION,
        target: cfg.target,
        fidelity: d.fidelity,
        ranking: d.ranking,
        student: d.student,
        audit: d.audit,
    })
}

/// Shapes of a surrogate ready for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateShapes {
    pub target: Target,
    pub fidelity: f64,
    pub student: ShapeDump,
    pub audit: ShapeDump,
    pub comparison: Vec<ShapeComparison>,
    pub attribution: VarianceAttribution,
}

pub fn surrogate_shapes(s: &Surrogate, ds: &ExperimentDataset) -> ServiceResult<SurrogateShapes> {
    Ok(SurrogateShapes {
        target: s.target,
        fidelity: s.fidelity,
        student: export_shapes(&s.student, ds.schema(), ds.x())?,
        audit: export_shapes(&s.audit, ds.schema(), ds.x())?,
        comparison: side_by_side(&s.student, &s.audit, ds.schema().names())?,
        attribution: variance_attribution(&s.student, ds.x())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmShapes {
    pub arm: u8,
    pub shapes: ShapeDump,
    pub attribution: VarianceAttribution,
}

/// Shape dumps of the arms that are additive models.
pub fn arm_shapes(tl: &TLearner, ds: &ExperimentDataset) -> ServiceResult<Vec<ArmShapes>> {
    let mut out = Vec::new();
    for (arm, m) in tl.arms().into_iter().enumerate() {
        if let FittedModel::Gam(g) = m {
            out.push(ArmShapes {
                arm: arm as u8,
                shapes: export_shapes(g, ds.schema(), ds.x())?,
                attribution: variance_attribution(g, ds.x())?,
            });
        }
    }
    Ok(out)
}

/// Policy score. Model references are resolved by the front end: the
/// service through ids, the CLI through its `--model`/`--surrogate` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScoreSpec {
    TreatAll,
    TreatNone,
    Constant {
        value: f64,
    },
    /// Estimated ITE of a fitted T-learner.
    Ite {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_id: Option<u64>,
    },
    /// Teacher output after shape surgery on its surrogate.
    Adjusted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        adjusted_id: Option<u64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        adjustments: Vec<ShapeAdjustment>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub score: ScoreSpec,
    /// Per-group thresholds; when absent one shared threshold treats
    /// `treat_fraction` of the rows (default: the experiment's treated share).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treat_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    #[serde(default)]
    pub value: ValueModel,
    #[serde(default = "never_treat")]
    pub benchmark: Benchmark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_feature: Option<String>,
}

fn never_treat() -> Benchmark {
    Benchmark::NeverTreat
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            value: ValueModel::default(),
            benchmark: Benchmark::NeverTreat,
            group_feature: None,
        }
    }
}

/// A policy with its score source resolved.
pub enum ResolvedPolicy {
    TreatAll,
    TreatNone,
    Scored(ScoreSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutput {
    pub thresholds: [f64; 2],
    pub report: FairnessReport,
}

pub fn audit(
    ds: &ExperimentDataset,
    policy: &ResolvedPolicy,
    spec: &PolicySpec,
    opts: &EvaluateOptions,
) -> ServiceResult<AuditOutput> {
    let ds = regroup(ds, opts.group_feature.as_deref())?;
    let decision = match policy {
        ResolvedPolicy::TreatAll => DecisionPolicy::treat_all(),
        ResolvedPolicy::TreatNone => DecisionPolicy::treat_none(),
        ResolvedPolicy::Scored(source) => {
            let thresholds = match spec.thresholds {
                Some(t) => t,
                None => {
                    let scores = source.scores(ds.x())?;
                    let th = default_threshold(&scores, fraction(&ds, spec.treat_fraction)?);
                    [th, th]
                }
            };
            DecisionPolicy {
                source: source.clone(),
                thresholds,
            }
        }
    };
    let report = evaluate(&ds, &decision, &opts.value, &opts.benchmark)?;
    Ok(AuditOutput {
        thresholds: decision.thresholds,
        report,
    })
}

fn fraction(ds: &ExperimentDataset, requested: Option<f64>) -> ServiceResult<f64> {
    match requested {
        None => Ok(treated_fraction(ds)),
        Some(f) if (0.0..=1.0).contains(&f) => Ok(f),
        Some(f) => Err(fairaudit::Error::InvalidConfig(format!("treat_fraction {f} outside [0, 1]")).into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Quantile levels per group; the grid has levels² points.
    pub levels: usize,
    pub page: usize,
    pub value: ValueModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_feature: Option<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            levels: 41,
            page: 0,
            value: ValueModel::default(),
            group_feature: None,
        }
    }
}

/// One page of a threshold sweep. Pages split the group-0 thresholds so
/// that no page exceeds [`MANIFOLD_POINT_CAP`] points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPage {
    pub levels: usize,
    pub grid: [Vec<f64>; 2],
    pub page: usize,
    pub pages: usize,
    pub total_points: usize,
    pub manifold: PolicyManifold,
}

pub fn sweep(ds: &ExperimentDataset, source: &ScoreSource, cfg: &SweepConfig) -> ServiceResult<ManifoldPage> {
    let ds = regroup(ds, cfg.group_feature.as_deref())?;
    if cfg.levels < 2 {
        return Err(fairaudit::Error::InvalidConfig("levels must be at least 2".into()).into());
    }
    if cfg.levels > MANIFOLD_POINT_CAP {
        return Err(ServiceError::TooLarge(format!(
            "{} levels per group exceed the {MANIFOLD_POINT_CAP}-point page",
            cfg.levels
        )));
    }
    let scores = source.scores(ds.x())?;
    let grid = threshold_grid(&scores, &ds.groups(), cfg.levels)?;
    let rows_per_page = (MANIFOLD_POINT_CAP / cfg.levels).min(cfg.levels);
    let pages = cfg.levels.div_ceil(rows_per_page);
    if cfg.page >= pages {
        return Err(fairaudit::Error::InvalidConfig(format!("page {} of {pages}", cfg.page)).into());
    }
    let start = cfg.page * rows_per_page;
    let end = (start + rows_per_page).min(cfg.levels);
    let page_grid = [grid[0][start..end].to_vec(), grid[1].clone()];
    let manifold = sweep_thresholds(&ds, &scores, &page_grid, &cfg.value)?;
    Ok(ManifoldPage {
        levels: cfg.levels,
        grid,
        page: cfg.page,
        pages,
        total_points: cfg.levels * cfg.levels,
        manifold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalConfig {
    /// Shape to attenuate: a feature name or index, or `a:b` for a pair.
    pub shape: String,
    #[serde(default)]
    pub replacement: Replacement,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub value: ValueModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_feature: Option<String>,
}

fn default_alphas() -> Vec<f64> {
    REMOVAL_ALPHAS.to_vec()
}

pub fn removal_curve(
    ds: &ExperimentDataset,
    tl: &Arc<TLearner>,
    surrogate: &Surrogate,
    cfg: &RemovalConfig,
) -> ServiceResult<Vec<RemovalRow>> {
    let ds = regroup(ds, cfg.group_feature.as_deref())?;
    let shape = ShapeId::parse(&cfg.shape, ds.schema())?;
    let t = teacher(tl, surrogate.target);
    Ok(shape_removal_curve(
        &ds,
        t.as_ref(),
        &surrogate.student,
        &surrogate.audit,
        shape,
        &cfg.alphas,
        cfg.replacement,
        &cfg.value,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollegeRequest {
    pub college: CollegeConfig,
    pub levels: usize,
    pub mode: OutcomeMode,
}

impl Default for CollegeRequest {
    fn default() -> Self {
        CollegeRequest {
            college: CollegeConfig::default(),
            levels: 41,
            mode: OutcomeMode::default(),
        }
    }
}

pub fn college(req: &CollegeRequest) -> ServiceResult<CollegeStudy> {
    let ds = generate_college(&req.college)?;
    Ok(college_study(&ds, req.college.budget, req.levels, req.mode)?)
}
