//! Mock-experiment evaluation of decision policies: treatment and outcome
//! fairness under the p%-rule, no-worse-off against a benchmark, and
//! economic value with a standard error.
//!
//! Only rows whose randomized treatment agrees with the policy's decision
//! enter the outcome statistics; randomization makes them unbiased.

use std::fmt;
use std::sync::Arc;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentDataset;
use crate::error::{Error, Result};
use crate::improve::AdjustedScore;
use crate::models::{RawModel, TLearner};
use crate::stats::{mean, sample_variance};

/// A percentage that may be undefined; never silently 0 or 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Metric {
    Defined { value: f64 },
    Undefined { reason: String },
}

impl Metric {
    pub fn defined(value: f64) -> Metric {
        Metric::Defined { value }
    }

    pub fn undefined(reason: impl Into<String>) -> Metric {
        Metric::Undefined { reason: reason.into() }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Defined { value } => Some(*value),
            Metric::Undefined { .. } => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Metric::Defined { .. })
    }

    fn from_result(r: Result<f64>) -> Metric {
        match r {
            Ok(v) => Metric::defined(v),
            Err(e) => Metric::undefined(e.to_string()),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Defined { value } => write!(f, "{value}"),
            Metric::Undefined { .. } => write!(f, "undefined"),
        }
    }
}

/// 100 · min(a, b) / max(a, b).
pub fn p_rule(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::InvalidConfig(format!("p%-rule needs nonnegative inputs, got {a} and {b}")));
    }
    if a == 0.0 && b == 0.0 {
        return Err(Error::UndefinedMetric("both group values are zero".into()));
    }
    Ok(100.0 * a.min(b) / a.max(b))
}

/// min(OF_B / OF_A, 1) · 100.
pub fn nwo(of_b: f64, of_a: f64) -> Result<f64> {
    if !(of_a > 0.0) {
        return Err(Error::UndefinedMetric("benchmark outcome fairness is zero or undefined".into()));
    }
    if !(of_b >= 0.0) {
        return Err(Error::InvalidConfig(format!("outcome fairness must be nonnegative, got {of_b}")));
    }
    Ok((of_b / of_a).min(1.0) * 100.0)
}

/// Monetary value of an individual's (treatment, outcome):
/// `outcome_value[t] * y - t * cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    pub outcome_value: [f64; 2],
    pub cost: f64,
}

impl Default for ValueModel {
    fn default() -> Self {
        ValueModel {
            outcome_value: [1.0, 1.0],
            cost: 0.0,
        }
    }
}

impl ValueModel {
    /// 200ml donation worth 220; the treatment is a 40 coupon plus a 1 message.
    pub fn blood() -> ValueModel {
        ValueModel {
            outcome_value: [220.0, 180.0],
            cost: 1.0,
        }
    }

    /// Referral gain is 3.93 untreated and 3.72 when the gift is offered.
    pub fn referral() -> ValueModel {
        ValueModel {
            outcome_value: [3.93, 3.72],
            cost: 0.0,
        }
    }

    #[inline]
    pub fn value(&self, t: u8, y: f64) -> f64 {
        self.outcome_value[usize::from(t)] * y - f64::from(t) * self.cost
    }
}

/// Where a policy's per-row score comes from.
#[derive(Clone)]
pub enum ScoreSource {
    Ite(Arc<TLearner>),
    Raw(Arc<dyn RawModel>),
    Adjusted(Arc<AdjustedScore>),
    Constant(f64),
}

impl fmt::Debug for ScoreSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreSource::Ite(_) => write!(f, "Ite"),
            ScoreSource::Raw(_) => write!(f, "Raw"),
            ScoreSource::Adjusted(_) => write!(f, "Adjusted"),
            ScoreSource::Constant(c) => write!(f, "Constant({c})"),
        }
    }
}

impl ScoreSource {
    pub fn scores(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        match self {
            ScoreSource::Ite(tl) => tl.ite(x),
            ScoreSource::Raw(m) => {
                m.check_dims(x)?;
                Ok(m.raw(x))
            }
            ScoreSource::Adjusted(a) => a.scores(x),
            ScoreSource::Constant(c) => Ok(vec![*c; x.nrows()]),
        }
    }
}

/// Treat iff score ≥ threshold of the row's group.
#[derive(Debug, Clone)]
pub struct DecisionPolicy {
    pub source: ScoreSource,
    pub thresholds: [f64; 2],
}

impl DecisionPolicy {
    pub fn treat_all() -> DecisionPolicy {
        DecisionPolicy {
            source: ScoreSource::Constant(0.0),
            thresholds: [0.0, 0.0],
        }
    }

    pub fn treat_none() -> DecisionPolicy {
        DecisionPolicy {
            source: ScoreSource::Constant(0.0),
            thresholds: [1.0, 1.0],
        }
    }

    /// Decisions for the rows of `ds`; reads covariates only.
    pub fn decide(&self, ds: &ExperimentDataset) -> Result<Vec<u8>> {
        let scores = self.source.scores(ds.x())?;
        Ok(decide_from_scores(&scores, &ds.groups(), self.thresholds))
    }
}

pub fn decide_from_scores(scores: &[f64], groups: &[u8], thresholds: [f64; 2]) -> Vec<u8> {
    scores
        .iter()
        .zip(groups)
        .map(|(&s, &g)| u8::from(s >= thresholds[usize::from(g)]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Econ {
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Econ {
    fn new(mean: f64, se: f64) -> Econ {
        Econ {
            mean,
            se,
            ci_low: mean - 1.96 * se,
            ci_high: mean + 1.96 * se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockExperimentResult {
    pub group_sizes: [usize; 2],
    /// Rows with decision 1 and T = 1, per group.
    pub matched_treated: [usize; 2],
    /// Rows with decision 0 and T = 0, per group.
    pub matched_control: [usize; 2],
    pub treat_rate: [f64; 2],
    pub outcome_mean: [Metric; 2],
    /// Overall fraction the policy treats.
    pub treat_fraction: f64,
    /// Undefined when a needed matched subset is empty.
    pub econ: Option<Econ>,
}

/// Per-person value of the policy estimated from the matched rows:
/// π·v̄_treated + (1 − π)·v̄_control, each arm's mean over its matched subset.
pub fn economic_value(
    ds: &ExperimentDataset,
    decisions: &[u8],
    value: &ValueModel,
) -> Result<Econ> {
    let mut vt = Vec::new();
    let mut vc = Vec::new();
    for i in 0..ds.n() {
        let (d, t) = (decisions[i], ds.t()[i]);
        if d == t {
            let v = value.value(t, ds.y()[i]);
            if t == 1 { vt.push(v) } else { vc.push(v) }
        }
    }
    let pi = decisions.iter().map(|&d| f64::from(d)).sum::<f64>() / ds.n().max(1) as f64;
    if (pi > 0.0 && vt.is_empty()) || (pi < 1.0 && vc.is_empty()) {
        return Err(Error::UndefinedMetric("empty matched subset".into()));
    }
    let arm = |v: &[f64], w: f64| -> (f64, f64) {
        if w == 0.0 {
            (0.0, 0.0)
        } else {
            (w * mean(v), w * w * sample_variance(v) / v.len() as f64)
        }
    };
    let (mt, vart) = arm(&vt, pi);
    let (mc, varc) = arm(&vc, 1.0 - pi);
    Ok(Econ::new(mt + mc, (vart + varc).sqrt()))
}

/// Evaluates fixed decisions against the randomized assignment.
pub fn mock_from_decisions(
    ds: &ExperimentDataset,
    decisions: &[u8],
    value: &ValueModel,
) -> Result<MockExperimentResult> {
    if decisions.len() != ds.n() {
        return Err(Error::InvalidConfig(format!("{} decisions for {} rows", decisions.len(), ds.n())));
    }
    let groups = ds.groups();
    let mut size = [0usize; 2];
    let mut treated = [0usize; 2];
    let mut mt = [0usize; 2];
    let mut mc = [0usize; 2];
    let mut ysum = [0.0; 2];
    for i in 0..ds.n() {
        let g = usize::from(groups[i]);
        let d = decisions[i];
        size[g] += 1;
        treated[g] += usize::from(d);
        if d == 1 && ds.t()[i] == 1 {
            mt[g] += 1;
            ysum[g] += ds.y()[i];
        } else if d == 0 && ds.t()[i] == 0 {
            mc[g] += 1;
        }
    }
    for g in 0..2 {
        if size[g] == 0 {
            return Err(Error::EmptyGroup(g as u8));
        }
    }
    let outcome = |g: usize| {
        if mt[g] == 0 {
            Metric::undefined(format!("no treated rows matched in group {g}"))
        } else {
            Metric::defined(ysum[g] / mt[g] as f64)
        }
    };
    Ok(MockExperimentResult {
        group_sizes: size,
        matched_treated: mt,
        matched_control: mc,
        treat_rate: [treated[0] as f64 / size[0] as f64, treated[1] as f64 / size[1] as f64],
        outcome_mean: [outcome(0), outcome(1)],
        treat_fraction: (treated[0] + treated[1]) as f64 / ds.n() as f64,
        econ: economic_value(ds, decisions, value).ok(),
    })
}

pub fn mock_evaluate(ds: &ExperimentDataset, policy: &DecisionPolicy, value: &ValueModel) -> Result<MockExperimentResult> {
    let decisions = policy.decide(ds)?;
    mock_from_decisions(ds, &decisions, value)
}

/// p%-rule over per-group treatment rates; both zero counts as equal treatment.
pub fn tf(result: &MockExperimentResult) -> Metric {
    let [a, b] = result.treat_rate;
    if a == 0.0 && b == 0.0 {
        return Metric::defined(100.0);
    }
    Metric::from_result(p_rule(a, b))
}

/// p%-rule over per-group mean outcomes of matched treated rows.
pub fn of(result: &MockExperimentResult) -> Metric {
    match (&result.outcome_mean[0], &result.outcome_mean[1]) {
        (Metric::Defined { value: a }, Metric::Defined { value: b }) => Metric::from_result(p_rule(*a, *b)),
        (Metric::Undefined { reason }, _) | (_, Metric::Undefined { reason }) => Metric::undefined(reason.clone()),
    }
}

/// Outcome fairness of never treating anyone: the p%-rule over per-group
/// outcome means of the control arm.
pub fn of_never_treat(ds: &ExperimentDataset) -> Metric {
    let groups = ds.groups();
    let mut sum = [0.0; 2];
    let mut cnt = [0usize; 2];
    for i in 0..ds.n() {
        if ds.t()[i] == 0 {
            let g = usize::from(groups[i]);
            sum[g] += ds.y()[i];
            cnt[g] += 1;
        }
    }
    if cnt[0] == 0 || cnt[1] == 0 {
        return Metric::undefined("a group has no control rows");
    }
    Metric::from_result(p_rule(sum[0] / cnt[0] as f64, sum[1] / cnt[1] as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Benchmark {
    NeverTreat,
    /// Outcome fairness of some other, already evaluated policy.
    Of { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub tf: Metric,
    pub of: Metric,
    pub nwo: Metric,
    pub benchmark_of: Metric,
    pub econ: Option<Econ>,
    /// Directed ratios group 0 over group 1, before the p%-rule inversion.
    pub treat_ratio: Option<f64>,
    pub outcome_ratio: Option<f64>,
    pub result: MockExperimentResult,
}

pub fn report_from_result(result: MockExperimentResult, benchmark_of: Metric) -> FairnessReport {
    let tf_m = tf(&result);
    let of_m = of(&result);
    let nwo_m = match (&of_m, &benchmark_of) {
        (Metric::Defined { value: b }, Metric::Defined { value: a }) => Metric::from_result(nwo(*b, *a)),
        (Metric::Undefined { reason }, _) => Metric::undefined(reason.clone()),
        (_, Metric::Undefined { reason }) => Metric::undefined(format!("benchmark: {reason}")),
    };
    let ratio = |a: f64, b: f64| if b > 0.0 { Some(a / b) } else { None };
    let outcome_ratio = match (result.outcome_mean[0].value(), result.outcome_mean[1].value()) {
        (Some(a), Some(b)) => ratio(a, b),
        _ => None,
    };
    FairnessReport {
        tf: tf_m,
        of: of_m,
        nwo: nwo_m,
        benchmark_of,
        econ: result.econ,
        treat_ratio: ratio(result.treat_rate[0], result.treat_rate[1]),
        outcome_ratio,
        result,
    }
}

pub fn benchmark_of(ds: &ExperimentDataset, benchmark: &Benchmark) -> Metric {
    match benchmark {
        Benchmark::NeverTreat => of_never_treat(ds),
        Benchmark::Of { value } => Metric::defined(*value),
    }
}

pub fn evaluate(
    ds: &ExperimentDataset,
    policy: &DecisionPolicy,
    value: &ValueModel,
    benchmark: &Benchmark,
) -> Result<FairnessReport> {
    let result = mock_evaluate(ds, policy, value)?;
    Ok(report_from_result(result, benchmark_of(ds, benchmark)))
}
