//! Additive surrogates of a query-only teacher, plus the label-fitted audit
//! model on the same knots.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::ExperimentDataset;
use crate::error::{Error, Result};
use crate::gam::{fit_gam, AdditiveModel, GamParams, KnotSet, ShapeId};
use crate::interactions::{rank_pairs, RankConfig, Ranking};
use crate::models::{Link, RawModel};
use crate::stats::{derive_seed, variance};

/// Variance below rounding noise of the values' magnitude counts as zero, so
/// a constant like 0.3 is caught even though its computed variance is ~1e-33.
fn has_variance(v: &[f64]) -> Option<f64> {
    let var = variance(v);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = (scale * 1e-12).powi(2);
    (var > floor).then_some(var)
}

/// 1 − MSE(teacher − student) / Var(teacher).
pub fn fidelity(teacher_raw: &[f64], student_raw: &[f64]) -> Result<f64> {
    if teacher_raw.len() != student_raw.len() {
        return Err(Error::InvalidConfig("teacher and student outputs differ in length".into()));
    }
    if teacher_raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let var = has_variance(teacher_raw).ok_or(Error::ZeroVariance)?;
    let mse = teacher_raw
        .iter()
        .zip(student_raw)
        .map(|(t, s)| (t - s) * (t - s))
        .sum::<f64>()
        / teacher_raw.len() as f64;
    Ok(1.0 - mse / var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub rank: RankConfig,
    pub gam: GamParams,
    /// Fit the audit model only on rows of this treatment arm.
    pub audit_arm: Option<u8>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            rank: RankConfig::default(),
            gam: GamParams::default(),
            audit_arm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distillation {
    pub student: AdditiveModel,
    pub audit: AdditiveModel,
    pub ranking: Ranking,
    /// Fidelity of the student on the audit rows.
    pub fidelity: f64,
}

/// Ranks the teacher's interactions, fits an identity-link surrogate to its
/// raw scores with the top-K pairs, and fits a label model on the same knots.
pub fn distill(
    teacher: &dyn RawModel,
    ds_audit: &ExperimentDataset,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<Distillation> {
    let x = ds_audit.x();
    teacher.check_dims(x)?;
    if ds_audit.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let teacher_raw = teacher.raw(x);
    if has_variance(&teacher_raw).is_none() {
        return Err(Error::ZeroVariance);
    }
    let ranking = rank_pairs(&[teacher], ds_audit.schema(), x, &cfg.rank, derive_seed(seed, 1))?;
    let pairs = ranking.top_pairs();
    let knots = KnotSet::from_data(x, cfg.gam.knots_1d, cfg.gam.knots_2d);
    let student = fit_gam(x, &teacher_raw, &pairs, Link::Identity, &cfg.gam, &knots, derive_seed(seed, 2))?;
    let fid = fidelity(&teacher_raw, &student.raw(x))?;

    let rows: Vec<usize> = match cfg.audit_arm {
        Some(arm) => ds_audit.arm_indices(arm),
        None => (0..ds_audit.n()).collect(),
    };
    if rows.is_empty() {
        return Err(Error::EmptyArm(cfg.audit_arm.unwrap_or(0)));
    }
    let xa = x.select(Axis(0), &rows);
    let ya: Vec<f64> = rows.iter().map(|&i| ds_audit.y()[i]).collect();
    let audit = fit_gam(xa.view(), &ya, &pairs, Link::for_targets(&ya), &cfg.gam, &knots, derive_seed(seed, 3))?;
    Ok(Distillation {
        student,
        audit,
        ranking,
        fidelity: fid,
    })
}

/// Student fidelity against the teacher on another reference set.
pub fn fidelity_on(teacher: &dyn RawModel, student: &AdditiveModel, x_ref: ArrayView2<'_, f64>) -> Result<f64> {
    teacher.check_dims(x_ref)?;
    fidelity(&teacher.raw(x_ref), &student.raw(x_ref))
}

/// Distilled and audit values of one shape on their shared knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeComparison {
    pub shape: ShapeId,
    pub label: String,
    pub knots: Vec<Vec<f64>>,
    pub distilled: Vec<f64>,
    pub audit: Vec<f64>,
}

/// Errors with a knot mismatch unless the shape exists in both models on
/// identical knots.
pub fn check_shared_knots(a: &AdditiveModel, b: &AdditiveModel, id: ShapeId) -> Result<()> {
    if a.shape_knots(id)? != b.shape_knots(id)? {
        return Err(Error::KnotMismatch(id.to_string()));
    }
    Ok(())
}

pub fn side_by_side(student: &AdditiveModel, audit: &AdditiveModel, names: &[String]) -> Result<Vec<ShapeComparison>> {
    let mut out = Vec::new();
    for id in student.shape_ids() {
        check_shared_knots(student, audit, id)?;
        let (distilled, theirs) = match id {
            ShapeId::One(i) => (
                student.shape1(i).unwrap().values().to_vec(),
                audit.shape1(i).unwrap().values().to_vec(),
            ),
            ShapeId::Two(i, j) => (
                student.shape2(i, j).unwrap().grid().to_vec(),
                audit.shape2(i, j).unwrap().grid().to_vec(),
            ),
        };
        out.push(ShapeComparison {
            shape: id,
            label: id.label(names),
            knots: student.shape_knots(id)?.into_iter().map(<[f64]>::to_vec).collect(),
            distilled,
            audit: theirs,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn fidelity_examples() {
        let t = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(fidelity(&t, &t).unwrap(), 1.0);
        assert!(fidelity(&t, &[3.0; 4]).unwrap().abs() < 1e-12);
        assert!(matches!(fidelity(&[2.0; 4], &t), Err(Error::ZeroVariance)));
        assert!(matches!(fidelity(&[0.3; 1000], &[0.3; 1000]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn independent_noise_of_teacher_variance_gives_zero() {
        let mut rng = rng_from_seed(4);
        let t: Vec<f64> = (0..200_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let s: Vec<f64> = t.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(fidelity(&t, &s).unwrap().abs() < 0.02);
    }
}
