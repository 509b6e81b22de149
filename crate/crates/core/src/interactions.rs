//! Pairwise interaction scores from scaled double differences of a model's
//! raw output, averaged over two contexts and many sampled queries.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::models::RawModel;
use crate::stats::{quantile_sorted, rng_from_seed, sorted_copy};

/// Where the baseline instance of each query comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Baseline {
    /// Column median for continuous features, mode otherwise.
    #[default]
    Median,
    /// A second row drawn from the reference data.
    Sampled,
    Fixed { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    /// Number of sampled queries.
    pub draws: usize,
    pub k: usize,
    pub baseline: Baseline,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            draws: 50,
            k: 10,
            baseline: Baseline::Median,
        }
    }
}

/// A target instance and a baseline instance over the same features.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionQuery {
    pub target: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl InteractionQuery {
    pub fn new(target: Vec<f64>, baseline: Vec<f64>) -> Result<InteractionQuery> {
        if target.len() != baseline.len() {
            return Err(Error::DimensionMismatch {
                expected: target.len(),
                found: baseline.len(),
            });
        }
        Ok(InteractionQuery { target, baseline })
    }

    pub fn h(&self, i: usize) -> f64 {
        self.target[i] - self.baseline[i]
    }

    fn defined(&self, i: usize, j: usize) -> bool {
        self.h(i) != 0.0 && self.h(j) != 0.0
    }

    /// The four corner points for pair (i, j) with the remaining features from `context`.
    fn corners(&self, context: &[f64], i: usize, j: usize) -> [Vec<f64>; 4] {
        let point = |ai: f64, aj: f64| {
            let mut p = context.to_vec();
            p[i] = ai;
            p[j] = aj;
            p
        };
        let (t, b) = (&self.target, &self.baseline);
        [point(t[i], t[j]), point(b[i], t[j]), point(t[i], b[j]), point(b[i], b[j])]
    }
}

fn check_pair(d: usize, i: usize, j: usize) -> Result<()> {
    if i == j || i >= d || j >= d {
        return Err(Error::InvalidPair(i, j));
    }
    Ok(())
}

#[inline]
fn scaled_square(f: [f64; 4], hi: f64, hj: f64) -> f64 {
    let dd = (f[0] - f[1] - f[2] + f[3]) / (hi * hj);
    dd * dd
}

/// Squared scaled double difference in one context; `None` when either
/// coordinate of the query has zero displacement.
pub fn pairwise_score(
    f: &dyn RawModel,
    q: &InteractionQuery,
    context: &[f64],
    i: usize,
    j: usize,
) -> Result<Option<f64>> {
    let d = q.target.len();
    check_pair(d, i, j)?;
    if context.len() != d || f.n_features() != d {
        return Err(Error::DimensionMismatch {
            expected: f.n_features(),
            found: context.len(),
        });
    }
    if !q.defined(i, j) {
        return Ok(None);
    }
    let pts = q.corners(context, i, j);
    let x = Array2::from_shape_fn((4, d), |(r, c)| pts[r][c]);
    let out = f.raw(x.view());
    Ok(Some(scaled_square([out[0], out[1], out[2], out[3]], q.h(i), q.h(j))))
}

/// Mean of the scores with the target and the baseline as contexts.
pub fn average_score(f: &dyn RawModel, q: &InteractionQuery, i: usize, j: usize) -> Result<Option<f64>> {
    let a = pairwise_score(f, q, &q.target, i, j)?;
    let b = pairwise_score(f, q, &q.baseline, i, j)?;
    Ok(a.zip(b).map(|(a, b)| 0.5 * (a + b)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionScore {
    pub pair: (usize, usize),
    pub names: (String, String),
    pub score: f64,
    /// Draws on which the score was defined.
    pub draws: usize,
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub k: usize,
    /// Every pair with at least one defined draw, highest score first.
    pub scores: Vec<InteractionScore>,
    /// Pairs whose every draw was undefined.
    pub undefined_pairs: Vec<(usize, usize)>,
}

impl Ranking {
    pub fn top(&self) -> &[InteractionScore] {
        &self.scores[..self.k.min(self.scores.len())]
    }

    pub fn top_pairs(&self) -> Vec<(usize, usize)> {
        self.top().iter().map(|s| s.pair).collect()
    }
}

fn baseline_vector(schema: &FeatureSchema, x: ArrayView2<'_, f64>) -> Vec<f64> {
    schema
        .kinds()
        .iter()
        .enumerate()
        .map(|(c, kind)| {
            let sorted = sorted_copy(&x.column(c).to_vec());
            match kind {
                FeatureKind::Continuous => quantile_sorted(&sorted, 0.5),
                _ => mode_sorted(&sorted),
            }
        })
        .collect()
}

/// Most frequent value; ties go to the smallest.
fn mode_sorted(sorted: &[f64]) -> f64 {
    let mut best = (sorted[0], 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > best.1 {
            best = (sorted[i], j - i);
        }
        i = j;
    }
    best.0
}

/// Scores every unordered pair over `cfg.draws` sampled queries, averaging
/// across `models` (e.g. both arms of a two-model learner) and across draws.
pub fn rank_pairs(
    models: &[&dyn RawModel],
    schema: &FeatureSchema,
    x: ArrayView2<'_, f64>,
    cfg: &RankConfig,
    seed: u64,
) -> Result<Ranking> {
    let d = schema.len();
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if models.is_empty() || cfg.draws == 0 {
        return Err(Error::InvalidConfig("need at least one model and one draw".into()));
    }
    let n_pairs = d * (d - 1) / 2;
    if cfg.k > n_pairs {
        return Err(Error::InvalidConfig(format!("k = {} exceeds {} pairs", cfg.k, n_pairs)));
    }
    if x.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x.ncols() });
    }
    for m in models {
        if m.n_features() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.n_features(),
            });
        }
    }
    let fixed = match &cfg.baseline {
        Baseline::Median => Some(baseline_vector(schema, x)),
        Baseline::Fixed { values } => {
            if values.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: values.len() });
            }
            Some(values.clone())
        }
        Baseline::Sampled => None,
    };

    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let mut sum = vec![0.0; pairs.len()];
    let mut count = vec![0usize; pairs.len()];
    let mut rng = rng_from_seed(seed);

    for _ in 0..cfg.draws {
        let target = x.row(rng.random_range(0..n)).to_vec();
        let baseline = match &fixed {
            Some(b) => b.clone(),
            None => x.row(rng.random_range(0..n)).to_vec(),
        };
        let q = InteractionQuery { target, baseline };
        let live: Vec<usize> = (0..pairs.len()).filter(|&p| q.defined(pairs[p].0, pairs[p].1)).collect();
        if live.is_empty() {
            continue;
        }
        // eight points per pair: four corners in each of the two contexts
        let mut pts = Array2::zeros((live.len() * 8, d));
        for (slot, &p) in live.iter().enumerate() {
            let (i, j) = pairs[p];
            for (c, context) in [&q.target, &q.baseline].into_iter().enumerate() {
                for (k, pt) in q.corners(context, i, j).iter().enumerate() {
                    pts.row_mut(slot * 8 + c * 4 + k).assign(&ndarray::ArrayView1::from(pt.as_slice()));
                }
            }
        }
        let mut acc = vec![0.0; live.len()];
        for m in models {
            let out = m.raw(pts.view());
            for (slot, &p) in live.iter().enumerate() {
                let (i, j) = pairs[p];
                let o = &out[slot * 8..slot * 8 + 8];
                let a = scaled_square([o[0], o[1], o[2], o[3]], q.h(i), q.h(j));
                let b = scaled_square([o[4], o[5], o[6], o[7]], q.h(i), q.h(j));
                acc[slot] += 0.5 * (a + b);
            }
        }
        for (slot, &p) in live.iter().enumerate() {
            sum[p] += acc[slot] / models.len() as f64;
            count[p] += 1;
        }
    }

    let names = schema.names();
    let mut scores = Vec::new();
    let mut undefined_pairs = Vec::new();
    for (p, &(i, j)) in pairs.iter().enumerate() {
        if count[p] == 0 {
            undefined_pairs.push((i, j));
            continue;
        }
        scores.push(InteractionScore {
            pair: (i, j),
            names: (names[i].clone(), names[j].clone()),
            score: sum[p] / count[p] as f64,
            draws: count[p],
            undefined: cfg.draws - count[p],
        });
    }
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.pair.cmp(&b.pair)));
    Ok(Ranking {
        k: cfg.k,
        scores,
        undefined_pairs,
    })
}
