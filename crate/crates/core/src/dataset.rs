//! Randomized-experiment data: schema, in-memory dataset, synthetic
//! generators, CSV ingestion and stratified splitting.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats::{rng_from_seed, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Binary,
    Continuous,
    Categorical { cardinality: usize },
}

/// Names, kinds and sensitivity flags of the covariates, plus the sensitive
/// binary feature whose two groups are being compared.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    names: Vec<String>,
    kinds: Vec<FeatureKind>,
    sensitive: Vec<bool>,
    group_feature: usize,
}

#[derive(Serialize, Deserialize)]
struct FeatureEntry {
    name: String,
    kind: FeatureKind,
    #[serde(default)]
    sensitive: bool,
}

/// On-disk layout of the schema sidecar file.
#[derive(Serialize, Deserialize)]
struct SchemaFile {
    features: Vec<FeatureEntry>,
    group_feature: String,
}

impl FeatureSchema {
    pub fn new(
        names: Vec<String>,
        kinds: Vec<FeatureKind>,
        sensitive: Vec<bool>,
        group_feature: usize,
    ) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidSchema("schema has no features".into()));
        }
        if kinds.len() != names.len() || sensitive.len() != names.len() {
            return Err(Error::InvalidSchema(format!(
                "{} names, {} kinds, {} sensitive flags",
                names.len(),
                kinds.len(),
                sensitive.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n == "T" || n == "Y" {
                return Err(Error::InvalidSchema(format!("feature name `{n}` is reserved")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate feature name `{n}`")));
            }
        }
        for k in &kinds {
            if let FeatureKind::Categorical { cardinality } = k {
                if *cardinality < 2 {
                    return Err(Error::InvalidSchema("categorical cardinality must be >= 2".into()));
                }
            }
        }
        let schema = FeatureSchema {
            names,
            kinds,
            sensitive,
            group_feature: 0,
        };
        schema.with_group_feature(group_feature)
    }

    /// Same schema auditing a different sensitive feature.
    pub fn with_group_feature(mut self, index: usize) -> Result<Self> {
        if index >= self.names.len() {
            return Err(Error::InvalidSchema(format!("group feature index {index} out of range")));
        }
        if !self.sensitive[index] {
            return Err(Error::InvalidSchema(format!(
                "group feature `{}` is not flagged sensitive",
                self.names[index]
            )));
        }
        if self.kinds[index] != FeatureKind::Binary {
            return Err(Error::InvalidSchema(format!(
                "group feature `{}` must be binary",
                self.names[index]
            )));
        }
        self.group_feature = index;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn sensitive(&self) -> &[bool] {
        &self.sensitive
    }

    pub fn group_feature(&self) -> usize {
        self.group_feature
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn to_json(&self) -> String {
        let file = SchemaFile {
            features: self
                .names
                .iter()
                .zip(&self.kinds)
                .zip(&self.sensitive)
                .map(|((name, kind), sensitive)| FeatureEntry {
                    name: name.clone(),
                    kind: *kind,
                    sensitive: *sensitive,
                })
                .collect(),
            group_feature: self.names[self.group_feature].clone(),
        };
        serde_json::to_string_pretty(&file).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SchemaFile = serde_json::from_str(text)?;
        let group = file
            .features
            .iter()
            .position(|f| f.name == file.group_feature)
            .ok_or_else(|| {
                Error::InvalidSchema(format!("group feature `{}` not in schema", file.group_feature))
            })?;
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut sensitive = Vec::new();
        for f in file.features {
            names.push(f.name);
            kinds.push(f.kind);
            sensitive.push(f.sensitive);
        }
        FeatureSchema::new(names, kinds, sensitive, group)
    }

    /// Stable hash of the schema contents; ties serialized models to the data layout.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_json().as_bytes());
        hex::encode(h.finalize())
    }
}

/// Both potential outcomes and the probabilities they were drawn from.
/// Only available for simulated data.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    schema: FeatureSchema,
    x: Array2<f64>,
    t: Vec<u8>,
    y: Vec<f64>,
    potential: Option<PotentialOutcomes>,
    assignment_prob: f64,
}

impl ExperimentDataset {
    pub fn new(
        schema: FeatureSchema,
        x: Array2<f64>,
        t: Vec<u8>,
        y: Vec<f64>,
        potential: Option<PotentialOutcomes>,
        assignment_prob: f64,
    ) -> Result<Self> {
        let n = x.nrows();
        if x.ncols() != schema.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.len(),
                found: x.ncols(),
            });
        }
        if t.len() != n || y.len() != n {
            return Err(Error::InvalidConfig(format!(
                "row counts disagree: X has {n}, T has {}, Y has {}",
                t.len(),
                y.len()
            )));
        }
        if !(assignment_prob > 0.0 && assignment_prob < 1.0) {
            return Err(Error::InvalidConfig("assignment probability must lie in (0, 1)".into()));
        }
        if let Some(row) = t.iter().position(|&v| v > 1) {
            return Err(Error::InvalidTreatment {
                row: row + 1,
                value: t[row].to_string(),
            });
        }
        if let Some(po) = &potential {
            if [po.y0.len(), po.y1.len(), po.p0.len(), po.p1.len()].iter().any(|&l| l != n) {
                return Err(Error::InvalidConfig("potential outcome lengths disagree".into()));
            }
            for i in 0..n {
                let expect = if t[i] == 1 { po.y1[i] } else { po.y0[i] };
                if expect != y[i] {
                    return Err(Error::InvalidConfig(format!(
                        "row {}: observed outcome differs from the potential outcome of its arm",
                        i + 1
                    )));
                }
            }
        }
        Ok(ExperimentDataset {
            schema,
            x,
            t,
            y,
            potential,
            assignment_prob,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn t(&self) -> &[u8] {
        &self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn potential(&self) -> Option<&PotentialOutcomes> {
        self.potential.as_ref()
    }

    pub fn assignment_prob(&self) -> f64 {
        self.assignment_prob
    }

    /// Group membership (0/1) of each row under the audited feature.
    pub fn groups(&self) -> Vec<u8> {
        let g = self.schema.group_feature;
        self.x.column(g).iter().map(|&v| u8::from(v >= 0.5)).collect()
    }

    /// Switches the audited sensitive feature.
    pub fn with_group_feature(mut self, index: usize) -> Result<Self> {
        self.schema = self.schema.with_group_feature(index)?;
        Ok(self)
    }

    /// True ITE p1(x) - p0(x); simulated data only.
    pub fn true_ite(&self) -> Option<Vec<f64>> {
        self.potential
            .as_ref()
            .map(|po| po.p1.iter().zip(&po.p0).map(|(a, b)| a - b).collect())
    }

    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.t[i] == arm).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> ExperimentDataset {
        let x = self.x.select(Axis(0), rows);
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        ExperimentDataset {
            schema: self.schema.clone(),
            x,
            t: rows.iter().map(|&i| self.t[i]).collect(),
            y: pick(&self.y),
            potential: self.potential.as_ref().map(|po| PotentialOutcomes {
                y0: pick(&po.y0),
                y1: pick(&po.y1),
                p0: pick(&po.p0),
                p1: pick(&po.p1),
            }),
            assignment_prob: self.assignment_prob,
        }
    }

    /// CSV bytes: header of feature names then `T`,`Y`.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.schema.names.iter().map(String::as_str).collect();
        header.push("T");
        header.push("Y");
        w.write_record(&header).expect("in-memory write");
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            rec.clear();
            for j in 0..self.d() {
                rec.push(format_cell(self.x[[i, j]], self.schema.kinds[j]));
            }
            rec.push(self.t[i].to_string());
            rec.push(self.y[i].to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        w.into_inner().expect("flush")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_bytes())?;
        Ok(())
    }

    /// SHA-256 over the CSV serialization, the schema, and (when present)
    /// the potential outcomes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.to_json().as_bytes());
        h.update(self.to_csv_bytes());
        if let Some(po) = &self.potential {
            for v in [&po.y0, &po.y1, &po.p0, &po.p1] {
                for x in v.iter() {
                    h.update(x.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

fn format_cell(v: f64, kind: FeatureKind) -> String {
    match kind {
        FeatureKind::Binary | FeatureKind::Categorical { .. } => format!("{}", v as i64),
        FeatureKind::Continuous => v.to_string(),
    }
}

/// Configuration of the 12-covariate structural simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Correlation between sensitive features and their linked covariates.
    pub c: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 50_000,
            c: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::InvalidConfig(format!("correlation c={} outside [0, 1]", self.c)));
        }
        Ok(())
    }
}

/// p1(x) = σ(x5 + x7 + 2x9 − x6x7 + x10x11), 0-based row slice.
pub fn synthetic_p1(x: &[f64]) -> f64 {
    sigmoid(x[4] + x[6] + 2.0 * x[8] - x[5] * x[6] + x[9] * x[10])
}

/// p0(x) = σ(x5 + 0.1x8² + x5x7 − x9x11), 0-based row slice.
pub fn synthetic_p0(x: &[f64]) -> f64 {
    sigmoid(x[4] + 0.1 * x[7] * x[7] + x[4] * x[6] - x[8] * x[10])
}

/// (sensitive feature, linked continuous covariate) pairs, 0-based.
pub const SYNTHETIC_LINKS: [(usize, usize); 5] = [(0, 5), (1, 7), (2, 4), (2, 6), (2, 8)];

/// Schema of the structural simulation: x1..x4 sensitive binary, x5..x9
/// Gaussian, x10..x12 binary. Audits x3 by default.
pub fn synthetic_schema() -> FeatureSchema {
    let names = (1..=12).map(|i| format!("x{i}")).collect();
    let kinds = (0..12)
        .map(|j| if (4..9).contains(&j) { FeatureKind::Continuous } else { FeatureKind::Binary })
        .collect();
    let sensitive = (0..12).map(|j| j < 4).collect();
    FeatureSchema::new(names, kinds, sensitive, 2).expect("static schema is valid")
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<ExperimentDataset> {
    cfg.validate()?;
    let n = cfg.n;
    let d = 12;
    let mut rng = rng_from_seed(cfg.seed);
    let mut x = Array2::<f64>::zeros((n, d));
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut po = PotentialOutcomes {
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        p0: Vec::with_capacity(n),
        p1: Vec::with_capacity(n),
    };
    let noise_scale = (1.0 - cfg.c * cfg.c).sqrt();
    let mut row = [0.0f64; 12];
    for i in 0..n {
        for s in row.iter_mut().take(4) {
            *s = f64::from(u8::from(rng.random_bool(0.5)));
        }
        for z in row.iter_mut().take(9).skip(4) {
            *z = rng.sample::<f64, _>(StandardNormal);
        }
        for (s, z) in SYNTHETIC_LINKS {
            row[z] = cfg.c * (2.0 * row[s] - 1.0) + noise_scale * row[z];
        }
        for b in row.iter_mut().skip(9) {
            *b = f64::from(u8::from(rng.random_bool(0.5)));
        }
        let p1 = synthetic_p1(&row);
        let p0 = synthetic_p0(&row);
        let ti = u8::from(rng.random_bool(0.5));
        let y1 = f64::from(u8::from(rng.random_bool(p1)));
        let y0 = f64::from(u8::from(rng.random_bool(p0)));
        for (j, v) in row.iter().enumerate() {
            x[[i, j]] = *v;
        }
        t.push(ti);
        y.push(if ti == 1 { y1 } else { y0 });
        po.y0.push(y0);
        po.y1.push(y1);
        po.p0.push(p0);
        po.p1.push(p1);
    }
    ExperimentDataset::new(synthetic_schema(), x, t, y, Some(po), 0.5)
}

/// Configuration of the college admission simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollegeConfig {
    pub n: usize,
    pub minority_fraction: f64,
    /// Mean preparedness advantage of the majority group.
    pub prep_gap: f64,
    /// Standard deviation of test-score noise around preparedness.
    pub score_noise: f64,
    pub grad_slope: f64,
    pub grad_intercept: f64,
    /// Maximum fraction of applicants that may be admitted.
    pub budget: f64,
    pub seed: u64,
}

impl Default for CollegeConfig {
    fn default() -> Self {
        CollegeConfig {
            n: 100_000,
            minority_fraction: 0.3,
            prep_gap: 0.8,
            score_noise: 0.5,
            grad_slope: 1.5,
            grad_intercept: 0.0,
            budget: 0.4,
            seed: 0,
        }
    }
}

/// Log-odds penalty on graduating without admission.
const NOT_ADMITTED_PENALTY: f64 = 4.0;

impl CollegeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if !(self.minority_fraction > 0.0 && self.minority_fraction < 1.0) {
            return Err(Error::InvalidConfig("minority_fraction must lie in (0, 1)".into()));
        }
        if !(self.score_noise > 0.0) {
            return Err(Error::InvalidConfig("score_noise must be positive".into()));
        }
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            return Err(Error::InvalidConfig("budget must lie in (0, 1]".into()));
        }
        if !self.prep_gap.is_finite() || !self.grad_slope.is_finite() || !self.grad_intercept.is_finite() {
            return Err(Error::InvalidConfig("college parameters must be finite".into()));
        }
        Ok(())
    }
}

pub fn college_schema() -> FeatureSchema {
    FeatureSchema::new(
        vec!["minority".into(), "test_score".into()],
        vec![FeatureKind::Binary, FeatureKind::Continuous],
        vec![true, false],
        0,
    )
    .expect("static schema is valid")
}

/// Applicants with `minority` (1 = minority group) and `test_score`; the
/// treatment is admission and the outcome is graduation.
pub fn generate_college(cfg: &CollegeConfig) -> Result<ExperimentDataset> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = rng_from_seed(cfg.seed);
    let mut x = Array2::<f64>::zeros((n, 2));
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut po = PotentialOutcomes {
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        p0: Vec::with_capacity(n),
        p1: Vec::with_capacity(n),
    };
    for i in 0..n {
        let minority = f64::from(u8::from(rng.random_bool(cfg.minority_fraction)));
        let prep = rng.sample::<f64, _>(StandardNormal) + cfg.prep_gap * (1.0 - minority);
        let score = prep + cfg.score_noise * rng.sample::<f64, _>(StandardNormal);
        let logit1 = cfg.grad_slope * prep + cfg.grad_intercept;
        let p1 = sigmoid(logit1);
        let p0 = sigmoid(logit1 - NOT_ADMITTED_PENALTY);
        let ti = u8::from(rng.random_bool(0.5));
        let y1 = f64::from(u8::from(rng.random_bool(p1)));
        let y0 = f64::from(u8::from(rng.random_bool(p0)));
        x[[i, 0]] = minority;
        x[[i, 1]] = score;
        t.push(ti);
        y.push(if ti == 1 { y1 } else { y0 });
        po.y0.push(y0);
        po.y1.push(y1);
        po.p0.push(p0);
        po.p1.push(p1);
    }
    ExperimentDataset::new(college_schema(), x, t, y, Some(po), 0.5)
}

/// Reads a headered CSV (feature columns, then `T`, `Y`) with a JSON schema sidecar.
pub fn load_csv(path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<ExperimentDataset> {
    let schema = FeatureSchema::from_json(&std::fs::read_to_string(schema_path)?)?;
    let data = std::fs::read(path.as_ref())?;
    parse_csv(&data, schema, &path.as_ref().display().to_string())
}

/// Parses CSV bytes against a schema. `origin` is used in error messages.
pub fn parse_csv(data: &[u8], schema: FeatureSchema, origin: &str) -> Result<ExperimentDataset> {
    if data.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::EmptyFile(origin.to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(data);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let lookup = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { column: name.to_string() })
    };
    let feature_cols = schema
        .names()
        .iter()
        .map(|n| lookup(n))
        .collect::<Result<Vec<_>>>()?;
    let t_col = lookup("T")?;
    let y_col = lookup("Y")?;

    let d = schema.len();
    let mut values = Vec::new();
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::ColumnCount {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        for (j, &col) in feature_cols.iter().enumerate() {
            let cell = rec[col].trim();
            values.push(parse_feature(cell, schema.kinds()[j], row, &schema.names()[j])?);
        }
        let tcell = rec[t_col].trim();
        match tcell {
            "0" => t.push(0),
            "1" => t.push(1),
            _ => {
                return Err(Error::InvalidTreatment {
                    row,
                    value: tcell.to_string(),
                })
            }
        }
        let ycell = rec[y_col].trim();
        let yv: f64 = ycell
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::TypeMismatch {
                row,
                column: "Y".into(),
                value: ycell.to_string(),
                expected: "real".into(),
            })?;
        y.push(yv);
    }
    if t.is_empty() {
        return Err(Error::EmptyFile(origin.to_string()));
    }
    let n = t.len();
    let x = Array2::from_shape_vec((n, d), values).expect("row-major fill");
    ExperimentDataset::new(schema, x, t, y, None, 0.5)
}

fn parse_feature(cell: &str, kind: FeatureKind, row: usize, column: &str) -> Result<f64> {
    let mismatch = |expected: &str| Error::TypeMismatch {
        row,
        column: column.to_string(),
        value: cell.to_string(),
        expected: expected.to_string(),
    };
    let v: f64 = cell.parse().map_err(|_| mismatch("number"))?;
    if !v.is_finite() {
        return Err(mismatch("finite number"));
    }
    match kind {
        FeatureKind::Continuous => Ok(v),
        FeatureKind::Binary if v == 0.0 || v == 1.0 => Ok(v),
        FeatureKind::Binary => Err(mismatch("binary (0 or 1)")),
        FeatureKind::Categorical { cardinality } => {
            if v.fract() == 0.0 && v >= 0.0 && (v as usize) < cardinality {
                Ok(v)
            } else {
                Err(mismatch(&format!("category in 0..{cardinality}")))
            }
        }
    }
}

/// Stratified (on T), seed-deterministic partition into train/audit/test.
/// Rows keep their original relative order inside each part.
pub fn split(
    ds: &ExperimentDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(ExperimentDataset, ExperimentDataset, ExperimentDataset)> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0)
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidConfig(format!(
            "split fractions {fractions:?} must be nonnegative and sum to 1"
        )));
    }
    let n = ds.n();
    let sizes = apportion(n, &fractions);
    let treated = ds.arm_indices(1);
    let control = ds.arm_indices(0);
    let share: Vec<f64> = sizes.iter().map(|&s| s as f64 / n.max(1) as f64).collect();
    let treated_sizes = apportion(treated.len(), &share);
    let control_sizes: Vec<usize> = sizes.iter().zip(&treated_sizes).map(|(s, t)| s - t).collect();

    let mut rng = rng_from_seed(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (mut arm, arm_sizes) in [(treated, treated_sizes), (control, control_sizes)] {
        arm.shuffle(&mut rng);
        let mut start = 0;
        for (k, &len) in arm_sizes.iter().enumerate() {
            parts[k].extend_from_slice(&arm[start..start + len]);
            start += len;
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok((ds.subset(&parts[0]), ds.subset(&parts[1]), ds.subset(&parts[2])))
}

/// Largest-remainder apportionment of `total` items by `weights` (summing to 1).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let wsum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / wsum * total as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if weights[k] > 0.0 {
            sizes[k] += 1;
            rest -= 1;
        }
    }
    sizes
}
