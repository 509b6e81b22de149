//! Predictors, the two-model (treated / control) ITE learner, and AUC.
//!
//! Two blackbox stand-ins are provided: an L2-regularized generalized linear
//! model and a one-hidden-layer network trained with AdaGrad. Additive models
//! from [`crate::gam`] plug into the same [`Predictor`] interface.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExperimentDataset, FeatureKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::gam::{self, AdditiveModel, GamParams};
use crate::interactions::{self, RankConfig};
use crate::stats::{derive_seed, logit, rng_from_seed, sigmoid};

/// Map between the additive raw score and the prediction scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Identity,
}

impl Link {
    #[inline]
    pub fn inverse(self, raw: f64) -> f64 {
        match self {
            Link::Logit => sigmoid(raw),
            Link::Identity => raw,
        }
    }

    #[inline]
    pub fn apply(self, mu: f64) -> f64 {
        match self {
            Link::Logit => logit(mu),
            Link::Identity => mu,
        }
    }

    /// Logit for 0/1 targets, identity otherwise.
    pub fn for_targets(y: &[f64]) -> Link {
        if y.iter().all(|&v| v == 0.0 || v == 1.0) {
            Link::Logit
        } else {
            Link::Identity
        }
    }

    /// Mean loss of raw scores against targets (log-loss or half squared error).
    pub fn loss(self, raw: &[f64], y: &[f64]) -> f64 {
        let total: f64 = raw
            .iter()
            .zip(y)
            .map(|(&r, &t)| self.row_loss(r, t))
            .sum();
        total / raw.len() as f64
    }

    #[inline]
    pub(crate) fn row_loss(self, r: f64, t: f64) -> f64 {
        match self {
            // log(1 + e^r) - t r, written stably
            Link::Logit => r.max(0.0) + (-r.abs()).exp().ln_1p() - t * r,
            Link::Identity => 0.5 * (r - t) * (r - t),
        }
    }

    /// d loss / d raw.
    #[inline]
    pub(crate) fn row_grad(self, r: f64, t: f64) -> f64 {
        match self {
            Link::Logit => sigmoid(r) - t,
            Link::Identity => r - t,
        }
    }
}

/// Anything that produces a real-valued score on the pre-link scale.
pub trait RawModel: Send + Sync {
    fn n_features(&self) -> usize;

    fn raw(&self, x: ArrayView2<'_, f64>) -> Vec<f64>;

    fn check_dims(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        Ok(())
    }
}

pub trait Predictor: RawModel {
    fn link(&self) -> Link;

    /// Predictions on the outcome scale (probabilities for the logit link).
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let link = self.link();
        self.raw(x).into_iter().map(|r| link.inverse(r)).collect()
    }
}

/// Feature encoding for the dense models: continuous columns standardized with
/// training statistics, categorical columns one-hot encoded, binary kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    kinds: Vec<FeatureKind>,
    means: Vec<f64>,
    scales: Vec<f64>,
    width: usize,
}

impl Encoder {
    pub fn fit(kinds: &[FeatureKind], x: ArrayView2<'_, f64>) -> Encoder {
        let mut means = vec![0.0; kinds.len()];
        let mut scales = vec![1.0; kinds.len()];
        let mut width = 0;
        for (j, kind) in kinds.iter().enumerate() {
            match kind {
                FeatureKind::Continuous => {
                    let col = x.column(j);
                    let n = col.len().max(1) as f64;
                    let m = col.sum() / n;
                    let v = col.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
                    means[j] = m;
                    scales[j] = if v > 0.0 { v.sqrt() } else { 1.0 };
                    width += 1;
                }
                FeatureKind::Binary => width += 1,
                FeatureKind::Categorical { cardinality } => width += cardinality,
            }
        }
        Encoder {
            kinds: kinds.to_vec(),
            means,
            scales,
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_features(&self) -> usize {
        self.kinds.len()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.width));
        for (i, row) in x.rows().into_iter().enumerate() {
            let mut c = 0;
            for (j, kind) in self.kinds.iter().enumerate() {
                match kind {
                    FeatureKind::Continuous => {
                        out[[i, c]] = (row[j] - self.means[j]) / self.scales[j];
                        c += 1;
                    }
                    FeatureKind::Binary => {
                        out[[i, c]] = row[j];
                        c += 1;
                    }
                    FeatureKind::Categorical { cardinality } => {
                        let k = (row[j].max(0.0) as usize).min(cardinality - 1);
                        out[[i, c + k]] = 1.0;
                        c += cardinality;
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    /// L2 penalty on the (non-intercept) weights.
    pub l2: f64,
    pub max_iter: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { l2: 1e-3, max_iter: 50 }
    }
}

/// L2-regularized logistic or ridge regression on encoded features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    encoder: Encoder,
    weights: Vec<f64>,
    intercept: f64,
    link: Link,
}

impl LinearModel {
    pub fn fit(
        kinds: &[FeatureKind],
        x: ArrayView2<'_, f64>,
        y: &[f64],
        link: Link,
        params: &LinearParams,
    ) -> Result<LinearModel> {
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let encoder = Encoder::fit(kinds, x);
        let z = encoder.transform(x);
        let n = z.nrows();
        let p = z.ncols() + 1;
        let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { z[[i, j - 1]] });
        let target = DVector::from_column_slice(y);
        let mut penalty = DMatrix::<f64>::identity(p, p) * (params.l2 * n as f64);
        penalty[(0, 0)] = 0.0;

        let beta = match link {
            Link::Identity => {
                let lhs = design.tr_mul(&design) + &penalty;
                let rhs = design.tr_mul(&target);
                solve_spd(lhs, rhs)?
            }
            Link::Logit => {
                let mut beta = DVector::zeros(p);
                beta[0] = logit(y.iter().sum::<f64>() / n as f64);
                for _ in 0..params.max_iter {
                    let eta = &design * &beta;
                    let mu = eta.map(sigmoid);
                    let w = mu.map(|m| (m * (1.0 - m)).max(1e-10));
                    let grad = design.tr_mul(&(&mu - &target)) + &penalty * &beta;
                    let mut weighted = design.clone();
                    for (i, mut row) in weighted.row_iter_mut().enumerate() {
                        row *= w[i];
                    }
                    let hess = design.tr_mul(&weighted) + &penalty;
                    let step = solve_spd(hess, grad)?;
                    beta -= &step;
                    if step.amax() < 1e-10 {
                        break;
                    }
                }
                beta
            }
        };
        Ok(LinearModel {
            encoder,
            weights: beta.iter().skip(1).copied().collect(),
            intercept: beta[0],
            link,
        })
    }
}

fn solve_spd(lhs: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    match lhs.clone().cholesky() {
        Some(ch) => Ok(ch.solve(&rhs)),
        None => lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidConfig("singular normal equations".into())),
    }
}

impl RawModel for LinearModel {
    fn n_features(&self) -> usize {
        self.encoder.n_features()
    }

    fn raw(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let z = self.encoder.transform(x);
        let w = Array1::from(self.weights.clone());
        (z.dot(&w) + self.intercept).to_vec()
    }
}

impl Predictor for LinearModel {
    fn link(&self) -> Link {
        self.link
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Record the full training loss after every epoch (costs one extra pass).
    pub record_loss: bool,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 64,
            epochs: 200,
            batch_size: 256,
            learning_rate: 0.05,
            record_loss: false,
        }
    }
}

/// One-hidden-layer ReLU network with a linear output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    encoder: Encoder,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array1<f64>,
    b2: f64,
    link: Link,
    #[serde(default)]
    loss_history: Vec<f64>,
}

const ADAGRAD_EPS: f64 = 1e-8;

fn adagrad_step(param: &mut [f64], grad: &[f64], accum: &mut [f64], lr: f64) {
    for ((p, &g), a) in param.iter_mut().zip(grad).zip(accum.iter_mut()) {
        *a += g * g;
        *p -= lr * g / (a.sqrt() + ADAGRAD_EPS);
    }
}

impl Mlp {
    pub fn fit(
        kinds: &[FeatureKind],
        x: ArrayView2<'_, f64>,
        y: &[f64],
        link: Link,
        params: &MlpParams,
        seed: u64,
    ) -> Result<Mlp> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if params.hidden == 0 || params.batch_size == 0 {
            return Err(Error::InvalidConfig("hidden units and batch size must be positive".into()));
        }
        let encoder = Encoder::fit(kinds, x);
        let z = encoder.transform(x);
        let d = z.ncols();
        let h = params.hidden;
        let mut rng = rng_from_seed(seed);
        let s1 = (2.0 / d.max(1) as f64).sqrt();
        let s2 = (1.0 / h as f64).sqrt();
        let w1 = Array2::from_shape_fn((d, h), |_| s1 * rng.sample::<f64, _>(StandardNormal));
        let w2 = Array1::from_shape_fn(h, |_| s2 * rng.sample::<f64, _>(StandardNormal));
        let ybar = y.iter().sum::<f64>() / n as f64;
        let mut net = Mlp {
            encoder,
            w1,
            b1: Array1::zeros(h),
            w2,
            b2: link.apply(ybar),
            link,
            loss_history: Vec::new(),
        };

        let mut acc_w1 = vec![0.0; d * h];
        let mut acc_b1 = vec![0.0; h];
        let mut acc_w2 = vec![0.0; h];
        let mut acc_b2 = [0.0];
        let lr = params.learning_rate;
        let mut order: Vec<usize> = (0..n).collect();
        let yv = Array1::from(y.to_vec());

        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(params.batch_size) {
                let xb = z.select(Axis(0), chunk);
                let yb = yv.select(Axis(0), chunk);
                let m = chunk.len() as f64;
                let pre = xb.dot(&net.w1) + &net.b1;
                let act = pre.mapv(|v| v.max(0.0));
                let out = act.dot(&net.w2) + net.b2;
                let delta = Array1::from_shape_fn(chunk.len(), |i| link.row_grad(out[i], yb[i]) / m);
                let g_w2 = act.t().dot(&delta);
                let g_b2 = delta.sum();
                let mut g_pre = Array2::from_shape_fn(act.raw_dim(), |(i, k)| {
                    if pre[[i, k]] > 0.0 { delta[i] * net.w2[k] } else { 0.0 }
                });
                let g_w1 = xb.t().dot(&g_pre);
                let g_b1 = g_pre.sum_axis(Axis(0));
                g_pre.fill(0.0);

                adagrad_step(net.w1.as_slice_mut().unwrap(), g_w1.as_slice().unwrap(), &mut acc_w1, lr);
                adagrad_step(net.b1.as_slice_mut().unwrap(), g_b1.as_slice().unwrap(), &mut acc_b1, lr);
                adagrad_step(net.w2.as_slice_mut().unwrap(), g_w2.as_slice().unwrap(), &mut acc_w2, lr);
                adagrad_step(std::slice::from_mut(&mut net.b2), &[g_b2], &mut acc_b2, lr);
            }
            if params.record_loss {
                let raw = net.raw_encoded(&z);
                net.loss_history.push(link.loss(&raw, y));
            }
        }
        Ok(net)
    }

    fn raw_encoded(&self, z: &Array2<f64>) -> Vec<f64> {
        let act = (z.dot(&self.w1) + &self.b1).mapv(|v| v.max(0.0));
        (act.dot(&self.w2) + self.b2).to_vec()
    }

    /// Full training loss after each epoch, when recorded.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }
}

impl RawModel for Mlp {
    fn n_features(&self) -> usize {
        self.encoder.n_features()
    }

    fn raw(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.raw_encoded(&self.encoder.transform(x))
    }
}

impl Predictor for Mlp {
    fn link(&self) -> Link {
        self.link
    }
}

/// How an additive model picks its bivariate shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PairSelection {
    /// Univariate shapes only.
    None,
    Fixed { pairs: Vec<(usize, usize)> },
    /// Fit a network teacher on the same rows, rank its pairwise
    /// interactions, and keep the top `k`.
    Detect {
        k: usize,
        #[serde(default)]
        teacher: MlpParams,
        #[serde(default)]
        rank: RankConfig,
    },
}

/// Model family plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelSpec {
    Linear {
        #[serde(default)]
        params: LinearParams,
    },
    Mlp {
        #[serde(default)]
        params: MlpParams,
    },
    Gam {
        #[serde(default)]
        params: GamParams,
        pairs: PairSelection,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FittedModel {
    Linear(LinearModel),
    Mlp(Mlp),
    Gam(AdditiveModel),
}

impl FittedModel {
    pub fn as_gam(&self) -> Option<&AdditiveModel> {
        match self {
            FittedModel::Gam(m) => Some(m),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FittedModel::Linear(_) => "linear",
            FittedModel::Mlp(_) => "mlp",
            FittedModel::Gam(_) => "gam",
        }
    }
}

impl RawModel for FittedModel {
    fn n_features(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.n_features(),
            FittedModel::Mlp(m) => m.n_features(),
            FittedModel::Gam(m) => m.n_features(),
        }
    }

    fn raw(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        match self {
            FittedModel::Linear(m) => m.raw(x),
            FittedModel::Mlp(m) => m.raw(x),
            FittedModel::Gam(m) => m.raw(x),
        }
    }
}

impl Predictor for FittedModel {
    fn link(&self) -> Link {
        match self {
            FittedModel::Linear(m) => m.link(),
            FittedModel::Mlp(m) => m.link(),
            FittedModel::Gam(m) => m.link(),
        }
    }
}

/// Fits one model of the given family on (x, y).
pub fn fit_model(
    spec: &ModelSpec,
    schema: &FeatureSchema,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    seed: u64,
) -> Result<FittedModel> {
    if x.ncols() != schema.len() {
        return Err(Error::DimensionMismatch {
            expected: schema.len(),
            found: x.ncols(),
        });
    }
    let link = Link::for_targets(y);
    Ok(match spec {
        ModelSpec::Linear { params } => FittedModel::Linear(LinearModel::fit(schema.kinds(), x, y, link, params)?),
        ModelSpec::Mlp { params } => FittedModel::Mlp(Mlp::fit(schema.kinds(), x, y, link, params, seed)?),
        ModelSpec::Gam { params, pairs } => {
            let pairs = match pairs {
                PairSelection::None => Vec::new(),
                PairSelection::Fixed { pairs } => pairs.clone(),
                PairSelection::Detect { k, teacher, rank } => {
                    let net = Mlp::fit(schema.kinds(), x, y, link, teacher, derive_seed(seed, 17))?;
                    let cfg = RankConfig { k: *k, ..rank.clone() };
                    let ranking = interactions::rank_pairs(&[&net], schema, x, &cfg, derive_seed(seed, 18))?;
                    ranking.top_pairs()
                }
            };
            let knots = gam::KnotSet::from_data(x, params.knots_1d, params.knots_2d);
            FittedModel::Gam(gam::fit_gam(x, y, &pairs, link, params, &knots, seed)?)
        }
    })
}

/// Two outcome models, one per treatment arm; their difference estimates the ITE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TLearner {
    pub model0: FittedModel,
    pub model1: FittedModel,
    pub schema_fingerprint: String,
}

const TLEARNER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TLearnerFile {
    version: u32,
    #[serde(flatten)]
    learner: TLearner,
}

pub fn fit_tlearner(ds: &ExperimentDataset, spec: &ModelSpec, seed: u64) -> Result<TLearner> {
    fit_tlearner_arms(ds, [spec, spec], seed)
}

/// Like [`fit_tlearner`] with a separate spec per arm (control first).
pub fn fit_tlearner_arms(ds: &ExperimentDataset, specs: [&ModelSpec; 2], seed: u64) -> Result<TLearner> {
    let mut arms = Vec::with_capacity(2);
    for arm in [0u8, 1] {
        let spec = specs[usize::from(arm)];
        let rows = ds.arm_indices(arm);
        if rows.is_empty() {
            return Err(Error::EmptyArm(arm));
        }
        let x = ds.x().select(Axis(0), &rows);
        let y: Vec<f64> = rows.iter().map(|&i| ds.y()[i]).collect();
        arms.push(fit_model(spec, ds.schema(), x.view(), &y, derive_seed(seed, u64::from(arm)))?);
    }
    let model1 = arms.pop().unwrap();
    let model0 = arms.pop().unwrap();
    Ok(TLearner {
        model0,
        model1,
        schema_fingerprint: ds.schema().fingerprint(),
    })
}

impl TLearner {
    /// Estimated ITE: model1.predict − model0.predict, elementwise.
    pub fn ite(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.model0.check_dims(x)?;
        let p1 = self.model1.predict(x);
        let p0 = self.model0.predict(x);
        Ok(p1.iter().zip(&p0).map(|(a, b)| a - b).collect())
    }

    pub fn arms(&self) -> [&FittedModel; 2] {
        [&self.model0, &self.model1]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TLearnerFile {
            version: TLEARNER_VERSION,
            learner: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<TLearner> {
        let file: TLearnerFile = serde_json::from_str(text)?;
        if file.version != TLEARNER_VERSION {
            return Err(Error::UnsupportedVersion(file.version));
        }
        Ok(file.learner)
    }

    /// Errors unless the learner was trained against `schema`.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if self.schema_fingerprint != schema.fingerprint() {
            return Err(Error::SchemaMismatch);
        }
        Ok(())
    }
}

/// The ITE itself as a raw score, so a T-learner can be distilled.
impl RawModel for TLearner {
    fn n_features(&self) -> usize {
        self.model0.n_features()
    }

    fn raw(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let p1 = self.model1.predict(x);
        let p0 = self.model0.predict(x);
        p1.iter().zip(&p0).map(|(a, b)| a - b).collect()
    }
}

/// Rank-based AUC (Mann-Whitney), ties averaged.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidConfig("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1.0).count();
    let neg = labels.iter().filter(|&&l| l == 0.0).count();
    if pos + neg != labels.len() {
        return Err(Error::InvalidConfig("labels must be 0 or 1".into()));
    }
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = crate::stats::ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1.0).map(|(r, _)| r).sum();
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

pub fn auc_of(model: &dyn Predictor, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<f64> {
    model.check_dims(x)?;
    auc(&model.predict(x), y)
}
