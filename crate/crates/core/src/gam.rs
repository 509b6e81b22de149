//! Additive models with piecewise-linear univariate shapes and bilinear
//! bivariate grids, fitted jointly by AdaGrad.
//!
//! Bivariate axis knots are a subset of the univariate knots of the same
//! feature, so a function that is piecewise linear on the coarse axis knots
//! is represented exactly on the univariate knots. Purification relies on
//! that to move marginal effects out of the grids without changing any
//! prediction.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureSchema;
use crate::error::{Error, Result};
use crate::models::{Link, Predictor, RawModel};
use crate::stats::{quantile_sorted, rng_from_seed, sorted_copy, variance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GamParams {
    pub knots_1d: usize,
    /// Knots per axis of each bivariate grid.
    pub knots_2d: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub smoothness: f64,
}

impl Default for GamParams {
    fn default() -> Self {
        GamParams {
            knots_1d: 32,
            knots_2d: 16,
            learning_rate: 0.1,
            epochs: 300,
            batch_size: 512,
            l2: 1e-4,
            smoothness: 1e-3,
        }
    }
}

impl GamParams {
    fn validate(&self) -> Result<()> {
        if self.knots_1d < 2 || self.knots_2d < 2 {
            return Err(Error::InvalidConfig("need at least two knots per axis".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("batch size and learning rate must be positive".into()));
        }
        if self.l2 < 0.0 || self.smoothness < 0.0 {
            return Err(Error::InvalidConfig("penalties must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Identifies one shape of an additive model by its feature index or pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeId {
    One(usize),
    Two(usize, usize),
}

impl ShapeId {
    pub fn pair(i: usize, j: usize) -> ShapeId {
        ShapeId::Two(i.min(j), i.max(j))
    }

    pub fn involves(&self, feature: usize) -> bool {
        match *self {
            ShapeId::One(i) => i == feature,
            ShapeId::Two(i, j) => i == feature || j == feature,
        }
    }

    /// Accepts feature names or 0-based indices; pairs joined by ':'.
    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<ShapeId> {
        let lookup = |s: &str| -> Result<usize> {
            let s = s.trim();
            schema
                .index_of(s)
                .or_else(|| s.parse::<usize>().ok().filter(|&i| i < schema.len()))
                .ok_or_else(|| Error::UnknownShape(text.to_string()))
        };
        match text.split_once(':') {
            None => Ok(ShapeId::One(lookup(text)?)),
            Some((a, b)) => {
                let (i, j) = (lookup(a)?, lookup(b)?);
                if i == j {
                    return Err(Error::InvalidPair(i, j));
                }
                Ok(ShapeId::pair(i, j))
            }
        }
    }

    pub fn label(&self, names: &[String]) -> String {
        match *self {
            ShapeId::One(i) => names[i].clone(),
            ShapeId::Two(i, j) => format!("{}:{}", names[i], names[j]),
        }
    }
}

impl fmt::Display for ShapeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeId::One(i) => write!(f, "{i}"),
            ShapeId::Two(i, j) => write!(f, "{i}:{j}"),
        }
    }
}

/// Locates `v` among strictly increasing knots: the value there is
/// `(1 - w) * f[lo] + w * f[lo + 1]`, with constant extrapolation.
#[inline]
pub(crate) fn hat(knots: &[f64], v: f64) -> (usize, f64) {
    let last = knots.len() - 1;
    if last == 0 || v <= knots[0] {
        return (0, 0.0);
    }
    if v >= knots[last] {
        return (last, 0.0);
    }
    let hi = knots.partition_point(|&k| k <= v);
    let lo = hi - 1;
    (lo, (v - knots[lo]) / (knots[hi] - knots[lo]))
}

fn strictly_increasing(knots: &[f64]) -> bool {
    !knots.is_empty() && knots.iter().all(|k| k.is_finite()) && knots.windows(2).all(|w| w[0] < w[1])
}

/// Knot placement shared by every model fitted on the same reference data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSet {
    knots: Vec<Vec<f64>>,
    /// Indices into `knots[f]` used as the bivariate axis for feature `f`.
    axes: Vec<Vec<usize>>,
}

impl KnotSet {
    /// Quantile knots per column; columns with few distinct values use them all.
    pub fn from_data(x: ArrayView2<'_, f64>, b1: usize, b2: usize) -> KnotSet {
        let b1 = b1.max(2);
        let b2 = b2.max(2);
        let mut knots = Vec::with_capacity(x.ncols());
        let mut axes = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let sorted = sorted_copy(&col.to_vec());
            let mut uniq = sorted.clone();
            uniq.dedup();
            let k = if uniq.len() <= b1 {
                uniq
            } else {
                let mut k: Vec<f64> = (0..b1)
                    .map(|q| quantile_sorted(&sorted, q as f64 / (b1 - 1) as f64))
                    .collect();
                k.dedup();
                k
            };
            let axis = subset_indices(k.len(), b2);
            knots.push(k);
            axes.push(axis);
        }
        KnotSet { knots, axes }
    }

    pub fn n_features(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self, feature: usize) -> &[f64] {
        &self.knots[feature]
    }

    pub fn axis_knots(&self, feature: usize) -> Vec<f64> {
        self.axes[feature].iter().map(|&a| self.knots[feature][a]).collect()
    }
}

fn subset_indices(len: usize, b2: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    if len <= b2 {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..b2)
        .map(|k| ((k * (len - 1)) as f64 / (b2 - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape1D {
    pub feature: usize,
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Shape1D {
    pub fn new(feature: usize, knots: Vec<f64>, values: Vec<f64>) -> Result<Shape1D> {
        if !strictly_increasing(&knots) || knots.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "shape for feature {feature}: knots must be strictly increasing and match values"
            )));
        }
        Ok(Shape1D { feature, knots, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        let (lo, w) = hat(&self.knots, v);
        if w == 0.0 {
            self.values[lo]
        } else {
            (1.0 - w) * self.values[lo] + w * self.values[lo + 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape2D {
    pub features: (usize, usize),
    knots_i: Vec<f64>,
    knots_j: Vec<f64>,
    /// Row-major, `grid[a * knots_j.len() + b]`.
    grid: Vec<f64>,
}

impl Shape2D {
    pub fn new(features: (usize, usize), knots_i: Vec<f64>, knots_j: Vec<f64>, grid: Vec<f64>) -> Result<Shape2D> {
        if features.0 >= features.1 {
            return Err(Error::InvalidPair(features.0, features.1));
        }
        if !strictly_increasing(&knots_i) || !strictly_increasing(&knots_j) || grid.len() != knots_i.len() * knots_j.len() {
            return Err(Error::InvalidConfig(format!(
                "grid for pair ({}, {}) has inconsistent knots or values",
                features.0, features.1
            )));
        }
        Ok(Shape2D { features, knots_i, knots_j, grid })
    }

    pub fn knots_i(&self) -> &[f64] {
        &self.knots_i
    }

    pub fn knots_j(&self) -> &[f64] {
        &self.knots_j
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut [f64] {
        &mut self.grid
    }

    #[inline]
    fn corners(&self, vi: f64, vj: f64) -> [(usize, f64); 4] {
        let nj = self.knots_j.len();
        let (a, wa) = hat(&self.knots_i, vi);
        let (b, wb) = hat(&self.knots_j, vj);
        let a1 = (a + 1).min(self.knots_i.len() - 1);
        let b1 = (b + 1).min(nj - 1);
        [
            (a * nj + b, (1.0 - wa) * (1.0 - wb)),
            (a * nj + b1, (1.0 - wa) * wb),
            (a1 * nj + b, wa * (1.0 - wb)),
            (a1 * nj + b1, wa * wb),
        ]
    }

    #[inline]
    pub fn eval(&self, vi: f64, vj: f64) -> f64 {
        self.corners(vi, vj).iter().map(|&(k, w)| w * self.grid[k]).sum()
    }
}

/// Intercept plus univariate and bivariate shapes under a link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub intercept: f64,
    shapes1: Vec<Shape1D>,
    shapes2: Vec<Shape2D>,
    link: Link,
    n_features: usize,
}

impl AdditiveModel {
    pub fn new(
        intercept: f64,
        shapes1: Vec<Shape1D>,
        shapes2: Vec<Shape2D>,
        link: Link,
        n_features: usize,
    ) -> Result<AdditiveModel> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &shapes1 {
            if s.feature >= n_features || !seen.insert(ShapeId::One(s.feature)) {
                return Err(Error::UnknownShape(s.feature.to_string()));
            }
        }
        for s in &shapes2 {
            let (i, j) = s.features;
            if j >= n_features || !seen.insert(ShapeId::Two(i, j)) {
                return Err(Error::InvalidPair(i, j));
            }
        }
        Ok(AdditiveModel {
            intercept,
            shapes1,
            shapes2,
            link,
            n_features,
        })
    }

    pub fn shapes1(&self) -> &[Shape1D] {
        &self.shapes1
    }

    pub fn shapes2(&self) -> &[Shape2D] {
        &self.shapes2
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.shapes2.iter().map(|s| s.features).collect()
    }

    pub fn shape_ids(&self) -> Vec<ShapeId> {
        self.shapes1
            .iter()
            .map(|s| ShapeId::One(s.feature))
            .chain(self.shapes2.iter().map(|s| ShapeId::Two(s.features.0, s.features.1)))
            .collect()
    }

    pub fn shape1(&self, feature: usize) -> Option<&Shape1D> {
        self.shapes1.iter().find(|s| s.feature == feature)
    }

    pub fn shape1_mut(&mut self, feature: usize) -> Option<&mut Shape1D> {
        self.shapes1.iter_mut().find(|s| s.feature == feature)
    }

    pub fn shape2(&self, i: usize, j: usize) -> Option<&Shape2D> {
        self.shapes2.iter().find(|s| s.features == (i, j))
    }

    pub fn shape2_mut(&mut self, i: usize, j: usize) -> Option<&mut Shape2D> {
        self.shapes2.iter_mut().find(|s| s.features == (i, j))
    }

    /// Knot vectors of a shape, for checking that two models are comparable.
    pub fn shape_knots(&self, id: ShapeId) -> Result<Vec<&[f64]>> {
        match id {
            ShapeId::One(i) => self.shape1(i).map(|s| vec![s.knots()]),
            ShapeId::Two(i, j) => self.shape2(i, j).map(|s| vec![s.knots_i(), s.knots_j()]),
        }
        .ok_or_else(|| Error::UnknownShape(id.to_string()))
    }

    /// Per-row output of one shape.
    pub fn shape_output(&self, id: ShapeId, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_dims(x)?;
        match id {
            ShapeId::One(i) => {
                let s = self.shape1(i).ok_or_else(|| Error::UnknownShape(id.to_string()))?;
                Ok(x.column(i).iter().map(|&v| s.eval(v)).collect())
            }
            ShapeId::Two(i, j) => {
                let s = self.shape2(i, j).ok_or_else(|| Error::UnknownShape(id.to_string()))?;
                Ok(x.rows().into_iter().map(|r| s.eval(r[i], r[j])).collect())
            }
        }
    }

    pub fn raw_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut r = self.intercept;
        for s in &self.shapes1 {
            r += s.eval(row[s.feature]);
        }
        for s in &self.shapes2 {
            r += s.eval(row[s.features.0], row[s.features.1]);
        }
        r
    }

    fn n_params(&self) -> usize {
        1 + self.shapes1.iter().map(|s| s.values.len()).sum::<usize>()
            + self.shapes2.iter().map(|s| s.grid.len()).sum::<usize>()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.push(self.intercept);
        for s in &self.shapes1 {
            p.extend_from_slice(&s.values);
        }
        for s in &self.shapes2 {
            p.extend_from_slice(&s.grid);
        }
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        self.intercept = p[0];
        let mut o = 1;
        for s in &mut self.shapes1 {
            let n = s.values.len();
            s.values.copy_from_slice(&p[o..o + n]);
            o += n;
        }
        for s in &mut self.shapes2 {
            let n = s.grid.len();
            s.grid.copy_from_slice(&p[o..o + n]);
            o += n;
        }
    }

    /// Parameter offsets: univariate blocks then grid blocks.
    fn offsets(&self) -> (Vec<usize>, Vec<usize>) {
        let mut o = 1;
        let mut o1 = Vec::with_capacity(self.shapes1.len());
        for s in &self.shapes1 {
            o1.push(o);
            o += s.values.len();
        }
        let mut o2 = Vec::with_capacity(self.shapes2.len());
        for s in &self.shapes2 {
            o2.push(o);
            o += s.grid.len();
        }
        (o1, o2)
    }

    /// Moves the conditional means of each grid into the univariate shapes,
    /// then centers every shape on the training rows.
    fn purify_and_center(&mut self, x: ArrayView2<'_, f64>) {
        let n = x.nrows() as f64;
        for k in 0..self.shapes2.len() {
            let (fi, fj) = self.shapes2[k].features;
            let s = &mut self.shapes2[k];
            let (row_adj, col_adj) = purify_grid(s, x);
            let (ki, kj) = (s.knots_i.clone(), s.knots_j.clone());
            absorb(&mut self.shapes1, fi, &ki, &row_adj);
            absorb(&mut self.shapes1, fj, &kj, &col_adj);
        }

        for s in &mut self.shapes1 {
            let m = x.column(s.feature).iter().map(|&v| s.eval(v)).sum::<f64>() / n;
            s.values.iter_mut().for_each(|v| *v -= m);
            self.intercept += m;
        }
        for s in &mut self.shapes2 {
            let (i, j) = s.features;
            let m = x.rows().into_iter().map(|r| s.eval(r[i], r[j])).sum::<f64>() / n;
            s.grid.iter_mut().for_each(|v| *v -= m);
            self.intercept += m;
        }
    }
}

/// Removes from a grid its least-squares projection onto functions of one
/// axis at a time, alternating until nothing moves. Afterwards the grid is
/// orthogonal (over the rows of `x`) to every hat function of either axis.
/// Returns the removed per-axis node values.
fn purify_grid(s: &mut Shape2D, x: ArrayView2<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let (fi, fj) = s.features;
    let (ni, nj) = (s.knots_i.len(), s.knots_j.len());
    let nk = ni * nj;
    // Gram matrix of the bilinear basis over the rows
    let mut q = DMatrix::<f64>::zeros(nk, nk);
    for row in x.rows() {
        let c = s.corners(row[fi], row[fj]);
        for &(k1, w1) in &c {
            for &(k2, w2) in &c {
                q[(k1, k2)] += w1 * w2;
            }
        }
    }
    // axis Gram matrices: sum the bilinear Gram over the other axis
    let mut gi = DMatrix::<f64>::zeros(ni, ni);
    let mut gj = DMatrix::<f64>::zeros(nj, nj);
    for k1 in 0..nk {
        for k2 in 0..nk {
            let v = q[(k1, k2)];
            if v != 0.0 {
                gi[(k1 / nj, k2 / nj)] += v;
                gj[(k1 % nj, k2 % nj)] += v;
            }
        }
    }
    let solver_i = AxisSolver::new(gi);
    let solver_j = AxisSolver::new(gj);
    let mut row_adj = vec![0.0; ni];
    let mut col_adj = vec![0.0; nj];
    for _ in 0..10_000 {
        let qg = &q * DVector::from_column_slice(&s.grid);
        let rhs: Vec<f64> = (0..ni).map(|a| (0..nj).map(|b| qg[a * nj + b]).sum()).collect();
        let r = solver_i.solve(&rhs);
        for a in 0..ni {
            for b in 0..nj {
                s.grid[a * nj + b] -= r[a];
            }
            row_adj[a] += r[a];
        }
        let qg = &q * DVector::from_column_slice(&s.grid);
        let rhs: Vec<f64> = (0..nj).map(|b| (0..ni).map(|a| qg[a * nj + b]).sum()).collect();
        let c = solver_j.solve(&rhs);
        for a in 0..ni {
            for b in 0..nj {
                s.grid[a * nj + b] -= c[b];
            }
        }
        for b in 0..nj {
            col_adj[b] += c[b];
        }
        let moved = r.iter().chain(&c).fold(0.0f64, |m, v| m.max(v.abs()));
        if moved < 1e-13 {
            break;
        }
    }
    (row_adj, col_adj)
}

/// Solves an axis Gram system; nodes no row touches are pinned to zero.
struct AxisSolver {
    empty: Vec<bool>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl AxisSolver {
    fn new(mut g: DMatrix<f64>) -> AxisSolver {
        let n = g.nrows();
        let empty: Vec<bool> = (0..n).map(|a| g[(a, a)] <= 0.0).collect();
        for a in 0..n {
            if empty[a] {
                g[(a, a)] = 1.0;
            }
        }
        AxisSolver {
            empty,
            chol: g.clone().cholesky(),
            lu: g.lu(),
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = DVector::from_column_slice(rhs);
        for (a, &e) in self.empty.iter().enumerate() {
            if e {
                b[a] = 0.0;
            }
        }
        let sol = match &self.chol {
            Some(ch) => ch.solve(&b),
            None => self.lu.solve(&b).unwrap_or_else(|| DVector::zeros(rhs.len())),
        };
        sol.iter().copied().collect()
    }
}

/// Adds a function that is piecewise linear on `coarse` knots to the
/// univariate shape of `feature`, whose knots refine them.
fn absorb(shapes1: &mut [Shape1D], feature: usize, coarse: &[f64], adj: &[f64]) {
    if let Some(s) = shapes1.iter_mut().find(|s| s.feature == feature) {
        for (k, v) in s.knots.iter().zip(s.values.iter_mut()) {
            let (lo, w) = hat(coarse, *k);
            let hi = (lo + 1).min(coarse.len() - 1);
            *v += (1.0 - w) * adj[lo] + w * adj[hi];
        }
    }
}

impl RawModel for AdditiveModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn raw(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.raw_row(r)).collect()
    }
}

impl Predictor for AdditiveModel {
    fn link(&self) -> Link {
        self.link
    }
}

/// Sparse basis rows: every univariate shape contributes two entries and
/// every grid four, so each row has a fixed stride.
struct Design {
    stride: usize,
    idx: Vec<u32>,
    w: Vec<f64>,
}

impl Design {
    fn build(model: &AdditiveModel, x: ArrayView2<'_, f64>) -> Design {
        let stride = 2 * model.shapes1.len() + 4 * model.shapes2.len();
        let (o1, o2) = model.offsets();
        let mut idx = Vec::with_capacity(stride * x.nrows());
        let mut w = Vec::with_capacity(stride * x.nrows());
        for row in x.rows() {
            for (s, &o) in model.shapes1.iter().zip(&o1) {
                let (lo, t) = hat(&s.knots, row[s.feature]);
                let hi = (lo + 1).min(s.knots.len() - 1);
                idx.push((o + lo) as u32);
                w.push(1.0 - t);
                idx.push((o + hi) as u32);
                w.push(t);
            }
            for (s, &o) in model.shapes2.iter().zip(&o2) {
                for (k, wt) in s.corners(row[s.features.0], row[s.features.1]) {
                    idx.push((o + k) as u32);
                    w.push(wt);
                }
            }
        }
        Design { stride, idx, w }
    }

    #[inline]
    fn raw(&self, theta: &[f64], row: usize) -> f64 {
        let s = row * self.stride;
        let mut r = theta[0];
        for k in s..s + self.stride {
            r += self.w[k] * theta[self.idx[k] as usize];
        }
        r
    }
}

struct Trainer<'a> {
    design: Design,
    y: &'a [f64],
    link: Link,
    l2: f64,
    smoothness: f64,
    /// (offset, len) of each univariate block; (offset, rows, cols) of each grid.
    blocks1: Vec<(usize, usize)>,
    blocks2: Vec<(usize, usize, usize)>,
}

impl Trainer<'_> {
    fn penalty(&self, theta: &[f64]) -> f64 {
        let mut p = 0.5 * self.l2 * theta[1..].iter().map(|v| v * v).sum::<f64>();
        let mut smooth = 0.0;
        self.for_each_second_diff(|a, b, c| {
            let d = theta[a] - 2.0 * theta[b] + theta[c];
            smooth += d * d;
        });
        p += 0.5 * self.smoothness * smooth;
        p
    }

    fn add_penalty_grad(&self, theta: &[f64], grad: &mut [f64]) {
        for k in 1..theta.len() {
            grad[k] += self.l2 * theta[k];
        }
        let lam = self.smoothness;
        self.for_each_second_diff(|a, b, c| {
            let d = lam * (theta[a] - 2.0 * theta[b] + theta[c]);
            grad[a] += d;
            grad[b] -= 2.0 * d;
            grad[c] += d;
        });
    }

    fn for_each_second_diff(&self, mut f: impl FnMut(usize, usize, usize)) {
        for &(o, len) in &self.blocks1 {
            for s in 1..len.saturating_sub(1) {
                f(o + s - 1, o + s, o + s + 1);
            }
        }
        for &(o, ni, nj) in &self.blocks2 {
            for a in 0..ni {
                for b in 1..nj.saturating_sub(1) {
                    let k = o + a * nj + b;
                    f(k - 1, k, k + 1);
                }
            }
            for a in 1..ni.saturating_sub(1) {
                for b in 0..nj {
                    let k = o + a * nj + b;
                    f(k - nj, k, k + nj);
                }
            }
        }
    }

    /// Mean loss over `rows` plus penalties.
    fn objective(&self, theta: &[f64], rows: &[usize]) -> f64 {
        let m = rows.len() as f64;
        let loss: f64 = rows
            .iter()
            .map(|&r| self.link.row_loss(self.design.raw(theta, r), self.y[r]))
            .sum();
        loss / m + self.penalty(theta)
    }

    fn gradient(&self, theta: &[f64], rows: &[usize], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let m = rows.len() as f64;
        let st = self.design.stride;
        for &r in rows {
            let g = self.link.row_grad(self.design.raw(theta, r), self.y[r]) / m;
            grad[0] += g;
            for k in r * st..(r + 1) * st {
                grad[self.design.idx[k] as usize] += g * self.design.w[k];
            }
        }
        self.add_penalty_grad(theta, grad);
    }
}

fn skeleton(
    knots: &KnotSet,
    pairs: &[(usize, usize)],
    link: Link,
    intercept: f64,
) -> Result<AdditiveModel> {
    let d = knots.n_features();
    let shapes1 = (0..d)
        .map(|f| Shape1D::new(f, knots.knots(f).to_vec(), vec![0.0; knots.knots(f).len()]))
        .collect::<Result<Vec<_>>>()?;
    let mut shapes2 = Vec::new();
    for &(i, j) in pairs {
        let (ki, kj) = (knots.axis_knots(i), knots.axis_knots(j));
        let len = ki.len() * kj.len();
        shapes2.push(Shape2D::new((i, j), ki, kj, vec![0.0; len])?);
    }
    AdditiveModel::new(intercept, shapes1, shapes2, link, d)
}

/// Validates, orders and deduplicates pairs; pairs on a constant feature are
/// dropped with a warning.
fn normalize_pairs(pairs: &[(usize, usize)], knots: &KnotSet) -> Result<Vec<(usize, usize)>> {
    let d = knots.n_features();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in pairs {
        if a == b || a >= d || b >= d {
            return Err(Error::InvalidPair(a, b));
        }
        let p = (a.min(b), a.max(b));
        if knots.knots(p.0).len() < 2 || knots.knots(p.1).len() < 2 {
            log::warn!("dropping pair ({}, {}): constant feature", p.0, p.1);
            continue;
        }
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Fits all shapes and the intercept jointly by minibatch AdaGrad, then
/// purifies the grids and centers every shape on the training rows.
pub fn fit_gam(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    pairs: &[(usize, usize)],
    link: Link,
    params: &GamParams,
    knots: &KnotSet,
    seed: u64,
) -> Result<AdditiveModel> {
    params.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if y.len() != n {
        return Err(Error::InvalidConfig(format!("{} targets for {} rows", y.len(), n)));
    }
    if x.ncols() != knots.n_features() {
        return Err(Error::DimensionMismatch {
            expected: knots.n_features(),
            found: x.ncols(),
        });
    }
    let pairs = normalize_pairs(pairs, knots)?;
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut model = skeleton(knots, &pairs, link, link.apply(ybar))?;
    let trainer = trainer_for(&model, x, y, params);

    let mut theta = model.params();
    let mut grad = vec![0.0; theta.len()];
    let mut accum = vec![0.0; theta.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(params.batch_size) {
            trainer.gradient(&theta, chunk, &mut grad);
            for ((t, &g), a) in theta.iter_mut().zip(&grad).zip(accum.iter_mut()) {
                *a += g * g;
                *t -= params.learning_rate * g / (a.sqrt() + 1e-8);
            }
        }
    }
    model.set_params(&theta);
    model.purify_and_center(x);
    Ok(model)
}

fn trainer_for<'a>(model: &AdditiveModel, x: ArrayView2<'_, f64>, y: &'a [f64], params: &GamParams) -> Trainer<'a> {
    let (o1, o2) = model.offsets();
    Trainer {
        design: Design::build(model, x),
        y,
        link: model.link,
        l2: params.l2,
        smoothness: params.smoothness,
        blocks1: model.shapes1.iter().zip(&o1).map(|(s, &o)| (o, s.values.len())).collect(),
        blocks2: model
            .shapes2
            .iter()
            .zip(&o2)
            .map(|(s, &o)| (o, s.knots_i.len(), s.knots_j.len()))
            .collect(),
    }
}

/// Training loss (mean loss plus penalties) of `model` on (x, y).
pub fn training_objective(model: &AdditiveModel, x: ArrayView2<'_, f64>, y: &[f64], params: &GamParams) -> f64 {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    trainer_for(model, x, y, params).objective(&model.params(), &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeShare {
    pub shape: ShapeId,
    pub share: f64,
}

/// Per-shape output variance divided by the raw-score variance. Shares need
/// not sum to one when shapes are correlated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceAttribution {
    pub total_variance: f64,
    pub shares: Vec<ShapeShare>,
}

impl VarianceAttribution {
    pub fn share(&self, id: ShapeId) -> Option<f64> {
        self.shares.iter().find(|s| s.shape == id).map(|s| s.share)
    }
}

pub fn variance_attribution(m: &AdditiveModel, x_ref: ArrayView2<'_, f64>) -> Result<VarianceAttribution> {
    m.check_dims(x_ref)?;
    if x_ref.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let total = variance(&m.raw(x_ref));
    if !(total > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let shares = m
        .shape_ids()
        .into_iter()
        .map(|id| {
            let out = m.shape_output(id, x_ref)?;
            Ok(ShapeShare {
                shape: id,
                share: variance(&out) / total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceAttribution {
        total_variance: total,
        shares,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Equal-width histogram; binary-valued columns get one bin per value.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    if values.is_empty() {
        return Histogram { edges: vec![], counts: vec![] };
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = if lo == hi { 1 } else if values.iter().all(|&v| v == lo || v == hi) { 2 } else { bins.max(1) };
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|k| if k == bins { hi.max(lo + width) } else { lo + k as f64 * width }).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape1DDump {
    pub feature: usize,
    pub name: String,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub density: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape2DDump {
    pub features: (usize, usize),
    pub names: (String, String),
    pub knots_i: Vec<f64>,
    pub knots_j: Vec<f64>,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDump {
    pub version: u32,
    pub link: Link,
    pub intercept: f64,
    pub n_features: usize,
    pub shapes1: Vec<Shape1DDump>,
    pub shapes2: Vec<Shape2DDump>,
}

const DUMP_VERSION: u32 = 1;
const DENSITY_BINS: usize = 20;

/// Knots and values of every shape, with density histograms of `x_ref`.
pub fn export_shapes(m: &AdditiveModel, schema: &FeatureSchema, x_ref: ArrayView2<'_, f64>) -> Result<ShapeDump> {
    m.check_dims(x_ref)?;
    if schema.len() != m.n_features {
        return Err(Error::DimensionMismatch {
            expected: m.n_features,
            found: schema.len(),
        });
    }
    let names = schema.names();
    Ok(ShapeDump {
        version: DUMP_VERSION,
        link: m.link,
        intercept: m.intercept,
        n_features: m.n_features,
        shapes1: m
            .shapes1
            .iter()
            .map(|s| Shape1DDump {
                feature: s.feature,
                name: names[s.feature].clone(),
                knots: s.knots.clone(),
                values: s.values.clone(),
                density: histogram(&x_ref.column(s.feature).to_vec(), DENSITY_BINS),
            })
            .collect(),
        shapes2: m
            .shapes2
            .iter()
            .map(|s| Shape2DDump {
                features: s.features,
                names: (names[s.features.0].clone(), names[s.features.1].clone()),
                knots_i: s.knots_i.clone(),
                knots_j: s.knots_j.clone(),
                grid: s.grid.clone(),
            })
            .collect(),
    })
}

impl ShapeDump {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dump serializes")
    }

    pub fn from_json(text: &str) -> Result<ShapeDump> {
        let dump: ShapeDump = serde_json::from_str(text)?;
        if dump.version != DUMP_VERSION {
            return Err(Error::UnsupportedVersion(dump.version));
        }
        Ok(dump)
    }

    pub fn to_model(&self) -> Result<AdditiveModel> {
        let shapes1 = self
            .shapes1
            .iter()
            .map(|s| Shape1D::new(s.feature, s.knots.clone(), s.values.clone()))
            .collect::<Result<Vec<_>>>()?;
        let shapes2 = self
            .shapes2
            .iter()
            .map(|s| Shape2D::new(s.features, s.knots_i.clone(), s.knots_j.clone(), s.grid.clone()))
            .collect::<Result<Vec<_>>>()?;
        AdditiveModel::new(self.intercept, shapes1, shapes2, self.link, self.n_features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticConfig};
    use crate::stats::{rng_from_seed, sigmoid};
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
    }

    fn quick() -> GamParams {
        GamParams { epochs: 40, ..Default::default() }
    }

    #[test]
    fn hat_interpolates_and_clamps() {
        let k = [0.0, 1.0, 3.0];
        assert_eq!(hat(&k, -1.0), (0, 0.0));
        assert_eq!(hat(&k, 0.5), (0, 0.5));
        assert_eq!(hat(&k, 1.0), (1, 0.0));
        assert_eq!(hat(&k, 2.0), (1, 0.5));
        assert_eq!(hat(&k, 9.0), (2, 0.0));
        assert_eq!(hat(&[4.0], 1.0), (0, 0.0));
    }

    #[test]
    fn knot_placement() {
        let x = gaussian_matrix(1000, 1, 1);
        let mut with_binary = Array2::zeros((1000, 2));
        with_binary.column_mut(0).assign(&x.column(0));
        for i in 0..1000 {
            with_binary[[i, 1]] = (i % 2) as f64;
        }
        let ks = KnotSet::from_data(with_binary.view(), 32, 16);
        assert_eq!(ks.knots(0).len(), 32);
        assert!(strictly_increasing(ks.knots(0)));
        assert_eq!(ks.knots(1), &[0.0, 1.0]);
        let axis = ks.axis_knots(0);
        assert_eq!(axis.len(), 16);
        assert_eq!(axis[0], ks.knots(0)[0]);
        assert_eq!(axis[15], ks.knots(0)[31]);
        assert!(axis.iter().all(|a| ks.knots(0).contains(a)));
    }

    #[test]
    fn hand_built_predictions() {
        let x = array![[0.0, 5.0], [2.0, -1.0]];
        let m = AdditiveModel::new(0.0, vec![], vec![], Link::Logit, 2).unwrap();
        assert_eq!(m.predict(x.view()), vec![0.5, 0.5]);

        let ident = Shape1D::new(0, vec![-10.0, 10.0], vec![-10.0, 10.0]).unwrap();
        let m = AdditiveModel::new(0.0, vec![ident], vec![], Link::Logit, 2).unwrap();
        assert_eq!(m.predict(x.view())[0], 0.5);

        let minus_one = Shape1D::new(1, vec![0.0], vec![-1.0]).unwrap();
        let m = AdditiveModel::new(1.0, vec![minus_one], vec![], Link::Logit, 2).unwrap();
        assert_eq!(m.raw(x.view()), vec![0.0, 0.0]);
        assert_eq!(m.predict(x.view()), vec![0.5, 0.5]);

        let wide = array![[0.0, 1.0, 2.0]];
        assert!(matches!(m.check_dims(wide.view()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constructors_reject_bad_shapes() {
        assert!(Shape1D::new(0, vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(Shape2D::new((2, 1), vec![0.0], vec![0.0], vec![0.0]).is_err());
        let s = Shape1D::new(0, vec![0.0], vec![0.0]).unwrap();
        assert!(AdditiveModel::new(0.0, vec![s.clone(), s], vec![], Link::Identity, 1).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let ds = generate_synthetic(&SyntheticConfig { n: 400, c: 0.5, seed: 8 }).unwrap();
        let params = GamParams::default();
        let knots = KnotSet::from_data(ds.x(), params.knots_1d, params.knots_2d);
        for link in [Link::Logit, Link::Identity] {
            let mut model = skeleton(&knots, &[(5, 6), (9, 10), (2, 4)], link, 0.1).unwrap();
            let mut rng = rng_from_seed(3);
            let mut theta = model.params();
            theta.iter_mut().for_each(|t| *t = 0.3 * rng.sample::<f64, _>(StandardNormal));
            model.set_params(&theta);
            let y: Vec<f64> = match link {
                Link::Logit => ds.y().to_vec(),
                Link::Identity => ds.y().iter().map(|v| 2.0 * v - 0.3).collect(),
            };
            let tr = trainer_for(&model, ds.x(), &y, &params);
            let rows: Vec<usize> = (0..10).map(|_| rng.random_range(0..ds.n())).collect();
            let mut grad = vec![0.0; theta.len()];
            tr.gradient(&theta, &rows, &mut grad);
            let h = 1e-4;
            for k in 0..theta.len() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[k] += h;
                tm[k] -= h;
                let fd = (tr.objective(&tp, &rows) - tr.objective(&tm, &rows)) / (2.0 * h);
                let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
                assert!(err <= 1e-3, "param {k}: analytic {} vs numeric {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn constant_target_gives_flat_model() {
        let x = gaussian_matrix(2000, 3, 2);
        let y = vec![0.5; 2000];
        let knots = KnotSet::from_data(x.view(), 32, 16);
        let m = fit_gam(x.view(), &y, &[(0, 1)], Link::Logit, &quick(), &knots, 0).unwrap();
        assert!(m.intercept.abs() < 1e-9);
        for s in m.shapes1() {
            assert!(s.values().iter().all(|v| v.abs() < 1e-9));
        }
        assert!(m.shapes2()[0].grid().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn purification_preserves_predictions_and_zeroes_marginals() {
        let ds = generate_synthetic(&SyntheticConfig { n: 3000, c: 0.5, seed: 9 }).unwrap();
        let p = ds.potential().unwrap();
        let y: Vec<f64> = p.p1.iter().map(|&v| crate::stats::logit(v)).collect();
        let params = quick();
        let knots = KnotSet::from_data(ds.x(), 32, 16);
        let pairs = [(5, 6), (9, 10), (2, 4)];
        let m = fit_gam(ds.x(), &y, &pairs, Link::Identity, &params, &knots, 1).unwrap();

        // shift the grids off-center and purify again: predictions must not move
        let mut shifted = m.clone();
        for s in &mut shifted.shapes2 {
            let nj = s.knots_j.len();
            for (k, v) in s.grid.iter_mut().enumerate() {
                *v += 0.3 * (k / nj) as f64 - 0.2 * (k % nj) as f64 + 1.0;
            }
        }
        let before = shifted.raw(ds.x());
        shifted.purify_and_center(ds.x());
        let after = shifted.raw(ds.x());
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-9);
        }

        for model in [&m, &shifted] {
            for s in model.shapes1() {
                let mean = ds.x().column(s.feature).iter().map(|&v| s.eval(v)).sum::<f64>() / ds.n() as f64;
                assert!(mean.abs() < 1e-8);
            }
            for s in model.shapes2() {
                let (i, j) = s.features;
                let ni = s.knots_i.len();
                let nj = s.knots_j.len();
                let mut row = vec![(0.0, 0.0); ni];
                let mut col = vec![(0.0, 0.0); nj];
                for r in ds.x().rows() {
                    let f = s.eval(r[i], r[j]);
                    let (a, wa) = hat(&s.knots_i, r[i]);
                    let (b, wb) = hat(&s.knots_j, r[j]);
                    for (node, w) in [(a, 1.0 - wa), ((a + 1).min(ni - 1), wa)] {
                        row[node].0 += w * f;
                        row[node].1 += w;
                    }
                    for (node, w) in [(b, 1.0 - wb), ((b + 1).min(nj - 1), wb)] {
                        col[node].0 += w * f;
                        col[node].1 += w;
                    }
                }
                for (num, den) in row.into_iter().chain(col) {
                    if den > 0.0 {
                        assert!((num / den).abs() < 1e-6, "marginal mean {}", num / den);
                    }
                }
            }
        }
    }

    #[test]
    fn recovers_a_logistic_univariate_effect() {
        let n = 50_000;
        let x = gaussian_matrix(n, 3, 4);
        let mut rng = rng_from_seed(5);
        let y: Vec<f64> = x
            .column(0)
            .iter()
            .map(|&v| f64::from(u8::from(rng.random::<f64>() < sigmoid(v))))
            .collect();
        let params = GamParams::default();
        let knots = KnotSet::from_data(x.view(), 32, 16);
        let m = fit_gam(x.view(), &y, &[], Link::Logit, &params, &knots, 0).unwrap();
        assert!(m.shapes2().is_empty());
        let s = m.shape1(0).unwrap();
        let offset = m.intercept;
        for k in 0..=40 {
            let t = -2.0 + 0.1 * k as f64;
            let err = (s.eval(t) + offset - t).abs();
            assert!(err < 0.1, "f({t}) off by {err}");
        }
    }

    #[test]
    fn variance_shares() {
        let x = gaussian_matrix(20_000, 2, 6);
        let lin = |f, scale: f64| Shape1D::new(f, vec![-10.0, 10.0], vec![-10.0 * scale, 10.0 * scale]).unwrap();

        let single = AdditiveModel::new(0.3, vec![lin(0, 1.0)], vec![], Link::Identity, 2).unwrap();
        let va = variance_attribution(&single, x.view()).unwrap();
        assert!((va.share(ShapeId::One(0)).unwrap() - 1.0).abs() < 1e-12);

        let equal = AdditiveModel::new(0.0, vec![lin(0, 1.0), lin(1, 1.0)], vec![], Link::Identity, 2).unwrap();
        let va = variance_attribution(&equal, x.view()).unwrap();
        assert!((va.share(ShapeId::One(0)).unwrap() - 0.5).abs() < 0.02);

        // Var(2 x0) = 4, Var(x1) = 1
        let skew = AdditiveModel::new(0.0, vec![lin(0, 2.0), lin(1, 1.0)], vec![], Link::Identity, 2).unwrap();
        let va = variance_attribution(&skew, x.view()).unwrap();
        assert!((va.share(ShapeId::One(0)).unwrap() - 0.8).abs() < 0.02);
        assert!((va.share(ShapeId::One(1)).unwrap() - 0.2).abs() < 0.02);

        let flat = AdditiveModel::new(1.0, vec![], vec![], Link::Identity, 2).unwrap();
        assert!(matches!(variance_attribution(&flat, x.view()), Err(Error::ZeroVariance)));
    }

    #[test]
    fn dump_round_trip_and_density() {
        let ds = generate_synthetic(&SyntheticConfig { n: 2000, c: 0.25, seed: 11 }).unwrap();
        let y: Vec<f64> = ds.x().column(4).to_vec();
        let knots = KnotSet::from_data(ds.x(), 32, 16);
        let m = fit_gam(ds.x(), &y, &[(4, 6)], Link::Identity, &quick(), &knots, 0).unwrap();
        let dump = export_shapes(&m, ds.schema(), ds.x()).unwrap();
        let text = dump.to_json();
        let back = ShapeDump::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.to_model().unwrap(), m);
        for s in &dump.shapes1 {
            assert_eq!(s.density.counts.iter().sum::<u64>(), ds.n() as u64);
        }
        // identity target on x5: exported values are monotone
        let s = &dump.shapes1[4];
        assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn shape_ids_parse_names_and_indices() {
        let schema = crate::dataset::synthetic_schema();
        assert_eq!(ShapeId::parse("x4", &schema).unwrap(), ShapeId::One(3));
        assert_eq!(ShapeId::parse("x7:x6", &schema).unwrap(), ShapeId::Two(5, 6));
        assert_eq!(ShapeId::parse("3", &schema).unwrap(), ShapeId::One(3));
        assert!(ShapeId::parse("nope", &schema).is_err());
        assert!(ShapeId::parse("x1:x1", &schema).is_err());
    }

    #[test]
    fn invalid_pairs_rejected_and_constant_pairs_dropped() {
        let mut x = gaussian_matrix(500, 3, 7);
        x.column_mut(2).fill(1.0);
        let y = x.column(0).to_vec();
        let knots = KnotSet::from_data(x.view(), 32, 16);
        assert!(matches!(
            fit_gam(x.view(), &y, &[(0, 0)], Link::Identity, &quick(), &knots, 0),
            Err(Error::InvalidPair(0, 0))
        ));
        assert!(matches!(
            fit_gam(x.view(), &y, &[(0, 7)], Link::Identity, &quick(), &knots, 0),
            Err(Error::InvalidPair(0, 7))
        ));
        let m = fit_gam(x.view(), &y, &[(0, 2), (1, 0), (0, 1)], Link::Identity, &quick(), &knots, 0).unwrap();
        assert_eq!(m.pairs(), vec![(0, 1)]);
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(matches!(
            fit_gam(empty.view(), &[], &[], Link::Identity, &quick(), &knots, 0),
            Err(Error::EmptyDataset)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bilinear_eval_matches_corner_values(
            vi in -3.0f64..3.0, vj in -3.0f64..3.0,
            grid in prop::collection::vec(-2.0f64..2.0, 9)
        ) {
            let s = Shape2D::new((0, 1), vec![-1.0, 0.0, 2.0], vec![-2.0, 0.5, 1.0], grid.clone()).unwrap();
            let v = s.eval(vi, vj);
            let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            prop_assert!((s.eval(0.0, 0.5) - grid[4]).abs() < 1e-12);
        }
    }
}
