//! Improvement levers: shape surgery on a distilled surrogate, per-group
//! threshold sweeps, removal curves, and the admission simulation's
//! Pareto frontier.

use std::sync::Arc;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentDataset;
use crate::distill::check_shared_knots;
use crate::error::{Error, Result};
use crate::fairness::{
    decide_from_scores, mock_from_decisions, of, of_never_treat, p_rule, report_from_result, tf, Econ, Metric,
    ValueModel,
};
use crate::gam::{AdditiveModel, ShapeId};
use crate::models::RawModel;
use crate::stats::{mean, sorted_copy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    #[default]
    Zero,
    Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeAdjustment {
    pub shape: ShapeId,
    pub alpha: f64,
    #[serde(default)]
    pub replacement: Replacement,
}

/// teacher_raw − Σ α·f_distilled + Σ α·f_replacement, row by row.
pub fn adjust_prediction(
    teacher_raw: &[f64],
    x: ArrayView2<'_, f64>,
    distilled: &AdditiveModel,
    audit: &AdditiveModel,
    adjustments: &[ShapeAdjustment],
) -> Result<Vec<f64>> {
    if teacher_raw.len() != x.nrows() {
        return Err(Error::InvalidConfig("teacher scores and rows differ in length".into()));
    }
    let mut out = teacher_raw.to_vec();
    for adj in adjustments {
        if !(0.0..=1.0).contains(&adj.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", adj.alpha)));
        }
        let removed = distilled.shape_output(adj.shape, x)?;
        let added = match adj.replacement {
            Replacement::Zero => None,
            Replacement::Audit => {
                check_shared_knots(distilled, audit, adj.shape)?;
                Some(audit.shape_output(adj.shape, x)?)
            }
        };
        if adj.alpha == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o -= adj.alpha * removed[i];
            if let Some(a) = &added {
                *o += adj.alpha * a[i];
            }
        }
    }
    Ok(out)
}

/// A teacher's raw score modified through its distilled decomposition.
pub struct AdjustedScore {
    pub teacher: Arc<dyn RawModel>,
    pub distilled: AdditiveModel,
    pub audit: AdditiveModel,
    pub adjustments: Vec<ShapeAdjustment>,
}

impl AdjustedScore {
    pub fn new(
        teacher: Arc<dyn RawModel>,
        distilled: AdditiveModel,
        audit: AdditiveModel,
        adjustments: Vec<ShapeAdjustment>,
    ) -> Result<AdjustedScore> {
        for adj in &adjustments {
            distilled.shape_knots(adj.shape)?;
            if adj.replacement == Replacement::Audit {
                check_shared_knots(&distilled, &audit, adj.shape)?;
            }
            if !(0.0..=1.0).contains(&adj.alpha) {
                return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", adj.alpha)));
            }
        }
        Ok(AdjustedScore {
            teacher,
            distilled,
            audit,
            adjustments,
        })
    }

    pub fn scores(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.teacher.check_dims(x)?;
        adjust_prediction(&self.teacher.raw(x), x, &self.distilled, &self.audit, &self.adjustments)
    }
}

/// Threshold that treats `fraction` of the rows (ties may add a few).
pub fn default_threshold(scores: &[f64], fraction: f64) -> f64 {
    let mut desc = sorted_copy(scores);
    desc.reverse();
    let k = (fraction.clamp(0.0, 1.0) * scores.len() as f64).round() as usize;
    if k == 0 || desc.is_empty() {
        return desc.first().map_or(f64::INFINITY, |m| m + 1.0);
    }
    desc[k - 1]
}

/// Per-group thresholds at quantile levels q = k/(levels−1): level q is the
/// order statistic that admits ⌊n_g·(1 − q)⌋ rows of group g (more only under
/// ties). Level 0 treats everyone; the top level is max + 1 and treats no one.
pub fn threshold_grid(scores: &[f64], groups: &[u8], levels: usize) -> Result<[Vec<f64>; 2]> {
    if levels < 2 {
        return Err(Error::InvalidConfig("threshold grid needs at least two levels".into()));
    }
    let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for g in 0..2u8 {
        let vals: Vec<f64> = scores.iter().zip(groups).filter(|(_, &gg)| gg == g).map(|(&s, _)| s).collect();
        if vals.is_empty() {
            return Err(Error::EmptyGroup(g));
        }
        let mut desc = sorted_copy(&vals);
        desc.reverse();
        let n = desc.len();
        out[usize::from(g)] = (0..levels)
            .map(|k| {
                let admit = (n * (levels - 1 - k)) / (levels - 1);
                if admit == 0 { desc[0] + 1.0 } else { desc[admit - 1] }
            })
            .collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldEntry {
    pub thresholds: [f64; 2],
    pub treat_rate: [f64; 2],
    pub tf: Metric,
    pub of: Metric,
    pub econ: Option<Econ>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyManifold {
    /// Grid sizes for group 0 and group 1; entries are group-0 major.
    pub resolution: [usize; 2],
    pub entries: Vec<ManifoldEntry>,
}

/// Mock-evaluates every (group 0, group 1) threshold pair of `grid`.
pub fn sweep_thresholds(
    ds: &ExperimentDataset,
    scores: &[f64],
    grid: &[Vec<f64>; 2],
    value: &ValueModel,
) -> Result<PolicyManifold> {
    if grid[0].is_empty() || grid[1].is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty for a group".into()));
    }
    if scores.len() != ds.n() {
        return Err(Error::InvalidConfig("one score per row required".into()));
    }
    let groups = ds.groups();
    let mut entries = Vec::with_capacity(grid[0].len() * grid[1].len());
    for &t0 in &grid[0] {
        for &t1 in &grid[1] {
            let thresholds = [t0, t1];
            let decisions = decide_from_scores(scores, &groups, thresholds);
            let r = mock_from_decisions(ds, &decisions, value)?;
            entries.push(ManifoldEntry {
                thresholds,
                treat_rate: r.treat_rate,
                tf: tf(&r),
                of: of(&r),
                econ: r.econ,
            });
        }
    }
    Ok(PolicyManifold {
        resolution: [grid[0].len(), grid[1].len()],
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalRow {
    pub alpha: f64,
    pub threshold: f64,
    pub treat_rate: [f64; 2],
    pub tf: Metric,
    pub of: Metric,
    pub nwo: Metric,
    pub econ: Option<Econ>,
}

pub const REMOVAL_ALPHAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// For each α, removes that fraction of one distilled shape from the
/// teacher's score and evaluates the policy that treats the experiment's
/// treated fraction.
#[allow(clippy::too_many_arguments)]
pub fn shape_removal_curve(
    ds: &ExperimentDataset,
    teacher: &dyn RawModel,
    distilled: &AdditiveModel,
    audit: &AdditiveModel,
    shape: ShapeId,
    alphas: &[f64],
    replacement: Replacement,
    value: &ValueModel,
) -> Result<Vec<RemovalRow>> {
    teacher.check_dims(ds.x())?;
    let teacher_raw = teacher.raw(ds.x());
    let fraction = mean(&ds.t().iter().map(|&t| f64::from(t)).collect::<Vec<_>>());
    let groups = ds.groups();
    let benchmark = of_never_treat(ds);
    alphas
        .iter()
        .map(|&alpha| {
            let adj = ShapeAdjustment { shape, alpha, replacement };
            let scores = adjust_prediction(&teacher_raw, ds.x(), distilled, audit, &[adj])?;
            let threshold = default_threshold(&scores, fraction);
            let decisions = decide_from_scores(&scores, &groups, [threshold; 2]);
            let report = report_from_result(mock_from_decisions(ds, &decisions, value)?, benchmark.clone());
            Ok(RemovalRow {
                alpha,
                threshold,
                treat_rate: report.result.treat_rate,
                tf: report.tf,
                of: report.of,
                nwo: report.nwo,
                econ: report.econ,
            })
        })
        .collect()
}

/// Indices (ascending) of points not dominated when maximizing both coordinates.
pub fn pareto(points: &[(f64, f64)]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("no policies to compare".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[j]
            .0
            .total_cmp(&points[i].0)
            .then(points[j].1.total_cmp(&points[i].1))
    });
    let mut frontier = Vec::new();
    let mut best_b = f64::NEG_INFINITY;
    let mut k = 0;
    while k < order.len() {
        let a = points[order[k]].0;
        let top_b = points[order[k]].1;
        let mut end = k;
        while end < order.len() && points[order[end]].0 == a {
            end += 1;
        }
        if top_b > best_b {
            frontier.extend(order[k..end].iter().copied().filter(|&i| points[i].1 == top_b));
            best_b = top_b;
        }
        k = end;
    }
    frontier.sort_unstable();
    Ok(frontier)
}

/// Whether graduation counts use drawn outcomes or their probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    #[default]
    Expected,
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollegePolicy {
    /// Score thresholds for the majority (0) and minority (1) groups.
    pub thresholds: [f64; 2],
    pub admitted: [usize; 2],
    pub admit_rate: [f64; 2],
    pub graduates: f64,
    pub minority_admits: usize,
    pub feasible: bool,
    /// Majority admit rate minus minority admit rate.
    pub treatment_parity_gap: f64,
    /// Majority minus minority graduation rate among the admitted.
    pub predictive_parity_gap: Metric,
    pub nwo: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollegeStudy {
    pub budget: f64,
    pub mode: OutcomeMode,
    /// Outcome fairness of admitting no one.
    pub baseline_of: Metric,
    pub policies: Vec<CollegePolicy>,
    /// Pareto-optimal feasible policies in (graduates, minority admits).
    pub frontier: Vec<usize>,
}

/// Enumerates per-group test-score thresholds for the admission simulation
/// and scores each policy with the stored potential outcomes.
pub fn college_study(ds: &ExperimentDataset, budget: f64, levels: usize, mode: OutcomeMode) -> Result<CollegeStudy> {
    let po = ds
        .potential()
        .ok_or_else(|| Error::InvalidConfig("admission study needs potential outcomes".into()))?;
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(Error::InvalidConfig(format!("budget {budget} outside (0, 1]")));
    }
    let score_col = ds
        .schema()
        .index_of("test_score")
        .ok_or_else(|| Error::MissingColumn { column: "test_score".into() })?;
    let (y1, y0) = match mode {
        OutcomeMode::Expected => (&po.p1, &po.p0),
        OutcomeMode::Realized => (&po.y1, &po.y0),
    };
    let groups = ds.groups();
    let scores: Vec<f64> = ds.x().column(score_col).to_vec();
    let grid = threshold_grid(&scores, &groups, levels)?;

    // per group: scores sorted descending with prefix sums of y1 and y0
    struct Prefix {
        desc: Vec<f64>,
        y1: Vec<f64>,
        y0: Vec<f64>,
    }
    let prefix: Vec<Prefix> = (0..2u8)
        .map(|g| {
            let mut rows: Vec<usize> = (0..ds.n()).filter(|&i| groups[i] == g).collect();
            rows.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut p = Prefix {
                desc: rows.iter().map(|&i| scores[i]).collect(),
                y1: vec![0.0],
                y0: vec![0.0],
            };
            for &i in &rows {
                p.y1.push(p.y1.last().unwrap() + y1[i]);
                p.y0.push(p.y0.last().unwrap() + y0[i]);
            }
            p
        })
        .collect();
    let size = [prefix[0].desc.len(), prefix[1].desc.len()];
    let natural = [prefix[0].y0[size[0]] / size[0] as f64, prefix[1].y0[size[1]] / size[1] as f64];
    let baseline_of = match p_rule(natural[0], natural[1]) {
        Ok(v) => Metric::defined(v),
        Err(e) => Metric::undefined(e.to_string()),
    };
    let cap = budget * ds.n() as f64;

    let mut policies = Vec::with_capacity(levels * levels);
    for &t0 in &grid[0] {
        for &t1 in &grid[1] {
            let thresholds = [t0, t1];
            let mut admitted = [0usize; 2];
            let mut grads = 0.0;
            let mut rate_admitted = [None, None];
            for g in 0..2 {
                let p = &prefix[g];
                let k = p.desc.partition_point(|&s| s >= thresholds[g]);
                admitted[g] = k;
                let treated_y1 = p.y1[k];
                grads += treated_y1 + (p.y0[size[g]] - p.y0[k]);
                if k > 0 {
                    rate_admitted[g] = Some(treated_y1 / k as f64);
                }
            }
            let admit_rate = [admitted[0] as f64 / size[0] as f64, admitted[1] as f64 / size[1] as f64];
            let (pp, nwo_m) = match (rate_admitted[0], rate_admitted[1]) {
                (Some(a), Some(b)) => {
                    let nwo_m = match (p_rule(a, b), baseline_of.value()) {
                        (Ok(of_b), Some(of_a)) => match crate::fairness::nwo(of_b, of_a) {
                            Ok(v) => Metric::defined(v),
                            Err(e) => Metric::undefined(e.to_string()),
                        },
                        (Err(e), _) => Metric::undefined(e.to_string()),
                        (_, None) => Metric::undefined("baseline outcome fairness undefined"),
                    };
                    (Metric::defined(a - b), nwo_m)
                }
                _ => (
                    Metric::undefined("a group has no admitted applicants"),
                    Metric::undefined("a group has no admitted applicants"),
                ),
            };
            policies.push(CollegePolicy {
                thresholds,
                admitted,
                admit_rate,
                graduates: grads,
                minority_admits: admitted[1],
                feasible: (admitted[0] + admitted[1]) as f64 <= cap,
                treatment_parity_gap: admit_rate[0] - admit_rate[1],
                predictive_parity_gap: pp,
                nwo: nwo_m,
            });
        }
    }
    let feasible: Vec<usize> = (0..policies.len()).filter(|&i| policies[i].feasible).collect();
    let points: Vec<(f64, f64)> = feasible
        .iter()
        .map(|&i| (policies[i].graduates, policies[i].minority_admits as f64))
        .collect();
    let frontier = pareto(&points)?.into_iter().map(|k| feasible[k]).collect();
    Ok(CollegeStudy {
        budget,
        mode,
        baseline_of,
        policies,
        frontier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_college, generate_synthetic, CollegeConfig, SyntheticConfig};
    use crate::fairness::{mock_evaluate, DecisionPolicy, ScoreSource};
    use crate::gam::{Shape1D, Shape2D};
    use crate::models::Link;
    use proptest::prelude::*;

    fn brute_pareto(points: &[(f64, f64)]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| {
                !(0..points.len()).any(|j| {
                    let (a, b) = (points[j], points[i]);
                    a.0 >= b.0 && a.1 >= b.1 && (a.0 > b.0 || a.1 > b.1)
                })
            })
            .collect()
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto(&[(0.3, 0.2)]).unwrap(), vec![0]);
        assert_eq!(pareto(&[(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)]).unwrap(), vec![0, 1, 2]);
        assert_eq!(pareto(&[(1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]).unwrap(), vec![0]);
        assert!(pareto(&[]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pareto_matches_brute_force(pts in prop::collection::vec((0u8..12, 0u8..12), 1..200)) {
            let points: Vec<(f64, f64)> = pts.iter().map(|&(a, b)| (f64::from(a), f64::from(b))).collect();
            prop_assert_eq!(pareto(&points).unwrap(), brute_pareto(&points));
        }
    }

    /// Teacher built as an additive model so the distilled copy is exact.
    fn toy_models() -> (AdditiveModel, AdditiveModel) {
        let s0 = Shape1D::new(0, vec![0.0, 1.0], vec![-0.5, 0.5]).unwrap();
        let s1 = Shape1D::new(1, vec![-2.0, 0.0, 2.0], vec![-1.0, 0.3, 1.0]).unwrap();
        let g = Shape2D::new((0, 1), vec![0.0, 1.0], vec![-2.0, 2.0], vec![0.2, -0.2, -0.1, 0.1]).unwrap();
        let teacher = AdditiveModel::new(0.1, vec![s0, s1], vec![g], Link::Logit, 2).unwrap();
        let mut audit = teacher.clone();
        audit.shape1_mut(1).unwrap().values_mut().copy_from_slice(&[2.0, 0.0, -2.0]);
        (teacher, audit)
    }

    fn toy_x() -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((40, 2), |(i, c)| if c == 0 { (i % 2) as f64 } else { -2.5 + 0.13 * i as f64 })
    }

    #[test]
    fn adjustment_examples() {
        let (teacher, audit) = toy_models();
        let x = toy_x();
        let raw = teacher.raw(x.view());
        let zero = ShapeAdjustment { shape: ShapeId::One(1), alpha: 0.0, replacement: Replacement::Audit };
        assert_eq!(adjust_prediction(&raw, x.view(), &teacher, &audit, &[zero]).unwrap(), raw);

        let remove = ShapeAdjustment { shape: ShapeId::One(1), alpha: 1.0, replacement: Replacement::Zero };
        let out = adjust_prediction(&raw, x.view(), &teacher, &audit, &[remove]).unwrap();
        let mut deleted = teacher.clone();
        deleted.shape1_mut(1).unwrap().values_mut().fill(0.0);
        for (a, b) in out.iter().zip(deleted.raw(x.view())) {
            assert!((a - b).abs() < 1e-12);
        }

        let swap = ShapeAdjustment { shape: ShapeId::One(1), alpha: 1.0, replacement: Replacement::Audit };
        let out = adjust_prediction(&raw, x.view(), &teacher, &audit, &[swap]).unwrap();
        let mut swapped = teacher.clone();
        swapped.shape1_mut(1).unwrap().values_mut().copy_from_slice(&[2.0, 0.0, -2.0]);
        for (a, b) in out.iter().zip(swapped.raw(x.view())) {
            assert!((a - b).abs() < 1e-12);
        }

        let unknown = ShapeAdjustment { shape: ShapeId::Two(0, 1), alpha: 1.0, replacement: Replacement::Zero };
        let gam1 = AdditiveModel::new(0.0, teacher.shapes1().to_vec(), vec![], Link::Logit, 2).unwrap();
        assert!(matches!(adjust_prediction(&raw, x.view(), &gam1, &audit, &[unknown]), Err(Error::UnknownShape(_))));

        let mut moved = audit.clone();
        *moved.shape1_mut(1).unwrap() = Shape1D::new(1, vec![-2.0, 0.5, 2.0], vec![0.0; 3]).unwrap();
        assert!(matches!(adjust_prediction(&raw, x.view(), &teacher, &moved, &[swap]), Err(Error::KnotMismatch(_))));
    }

    #[test]
    fn removing_every_group_shape_makes_decisions_group_blind() {
        let ds = generate_synthetic(&SyntheticConfig { n: 2000, c: 0.5, seed: 3 }).unwrap();
        let g = ds.schema().group_feature();
        let s_g = Shape1D::new(g, vec![0.0, 1.0], vec![-0.8, 0.8]).unwrap();
        let s5 = Shape1D::new(4, vec![-2.0, 2.0], vec![-1.0, 1.0]).unwrap();
        let pair = Shape2D::new((g, 4), vec![0.0, 1.0], vec![-2.0, 2.0], vec![0.3, -0.3, -0.3, 0.3]).unwrap();
        let teacher = AdditiveModel::new(0.0, vec![s_g, s5], vec![pair], Link::Logit, 12).unwrap();
        let adjustments: Vec<ShapeAdjustment> = teacher
            .shape_ids()
            .into_iter()
            .filter(|id| id.involves(g))
            .map(|shape| ShapeAdjustment { shape, alpha: 1.0, replacement: Replacement::Zero })
            .collect();
        let adjusted = AdjustedScore::new(Arc::new(teacher.clone()), teacher.clone(), teacher, adjustments).unwrap();
        let policy = DecisionPolicy { source: ScoreSource::Adjusted(Arc::new(adjusted)), thresholds: [0.1, 0.1] };
        let mut flipped = ds.x().to_owned();
        flipped.column_mut(g).mapv_inplace(|v| 1.0 - v);
        let ds_flipped = ExperimentDataset::new(ds.schema().clone(), flipped, ds.t().to_vec(), ds.y().to_vec(), None, 0.5).unwrap();
        assert_eq!(policy.decide(&ds).unwrap(), policy.decide(&ds_flipped).unwrap());
    }

    #[test]
    fn default_threshold_treats_requested_fraction() {
        let s: Vec<f64> = (0..100).map(f64::from).collect();
        let t = default_threshold(&s, 0.3);
        assert_eq!(s.iter().filter(|&&v| v >= t).count(), 30);
        assert!(s.iter().all(|&v| v < default_threshold(&s, 0.0)));
        assert_eq!(default_threshold(&s, 1.0), 0.0);
    }

    #[test]
    fn sweep_matches_direct_evaluation_and_is_monotone() {
        let ds = generate_synthetic(&SyntheticConfig { n: 3000, c: 0.0, seed: 5 }).unwrap();
        let scorer = AdditiveModel::new(
            0.0,
            vec![Shape1D::new(8, vec![-3.0, 3.0], vec![-3.0, 3.0]).unwrap()],
            vec![],
            Link::Logit,
            12,
        )
        .unwrap();
        let scores = scorer.raw(ds.x());
        let grid = threshold_grid(&scores, &ds.groups(), 9).unwrap();
        let m = sweep_thresholds(&ds, &scores, &grid, &ValueModel::default()).unwrap();
        assert_eq!(m.entries.len(), 81);
        assert_eq!(m, sweep_thresholds(&ds, &scores, &grid, &ValueModel::default()).unwrap());
        let src = ScoreSource::Raw(Arc::new(scorer));
        for e in m.entries.iter().step_by(7) {
            let policy = DecisionPolicy { source: src.clone(), thresholds: e.thresholds };
            let r = mock_evaluate(&ds, &policy, &ValueModel::default()).unwrap();
            assert_eq!(tf(&r), e.tf);
            assert_eq!(of(&r), e.of);
            assert_eq!(r.econ, e.econ);
        }
        // treat-all corner
        let corner = &m.entries[0];
        assert_eq!(corner.treat_rate, [1.0, 1.0]);
        assert_eq!(corner.tf, Metric::defined(100.0));
        // treat rate of group 0 nonincreasing in its threshold
        for j in 0..9 {
            for i in 1..9 {
                assert!(m.entries[i * 9 + j].treat_rate[0] <= m.entries[(i - 1) * 9 + j].treat_rate[0]);
            }
        }
        // x3 is independent of x9 at c = 0: equal thresholds give TF near 100
        for i in 0..8 {
            let e = &m.entries[i * 9 + i];
            assert!(e.tf.value().unwrap() > 90.0, "{:?}", e.tf);
        }
    }

    #[test]
    fn college_corner_cases() {
        let ds = generate_college(&CollegeConfig { n: 5000, ..Default::default() }).unwrap();
        let study = college_study(&ds, 0.4, 11, OutcomeMode::Realized).unwrap();
        let po = ds.potential().unwrap();
        let none = study.policies.last().unwrap();
        assert_eq!(none.admitted, [0, 0]);
        assert_eq!(none.treatment_parity_gap, 0.0);
        assert_eq!(none.graduates, po.y0.iter().sum::<f64>());
        assert!(!none.predictive_parity_gap.is_defined());
        for p in &study.policies {
            if p.admit_rate[0] == p.admit_rate[1] {
                assert_eq!(p.treatment_parity_gap, 0.0);
            }
        }
        for &i in &study.frontier {
            assert!(study.policies[i].feasible);
        }
    }
}
