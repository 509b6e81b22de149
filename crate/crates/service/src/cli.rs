//! Command-line front end. Every subcommand writes its artifact as
//! canonical JSON plus a plot-ready CSV into `--out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use fairaudit::dataset::{load_csv, ExperimentDataset};
use fairaudit::fairness::{Metric, ScoreSource};
use fairaudit::improve::{AdjustedScore, CollegeStudy, RemovalRow};
use fairaudit::interactions::Ranking;
use fairaudit::models::{ModelSpec, TLearner};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::ops::{
    self, canonical_json, sha256_hex, AuditOutput, DatasetSource, DatasetSummary, EvaluateOptions, InteractionsConfig,
    ManifoldPage, PolicySpec, ResolvedPolicy, ScoreSpec, Surrogate, SurrogateShapes, SweepConfig,
};

#[derive(Debug, Parser)]
#[command(name = "fairaudit", version, about = "Fairness audits of treatment policies learned from randomized experiments")]
pub struct Cli {
    /// Seed; overrides any seed in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration of the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a randomized experiment (synthetic SCM or college admissions).
    Generate,
    /// Fit a T-learner on a dataset.
    Fit {
        /// Dataset directory written by `generate`, or a generator config.
        #[arg(long)]
        data: PathBuf,
    },
    /// Rank pairwise feature interactions of a fitted model.
    Interactions {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Distill a fitted model into an additive surrogate plus an audit model.
    Distill {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate one policy with a mock experiment.
    Audit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Sweep per-group thresholds into a policy manifold.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Attenuate one surrogate shape step by step and audit each step.
    RemovalCurve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        surrogate: PathBuf,
    },
    /// Enumerate admission policies of the college simulation.
    College,
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

/// A file written by a subcommand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Written {
    pub path: PathBuf,
    pub checksum: String,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}  {}", f.checksum, f.path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(2)
        }
    }
}

pub fn run(cli: &Cli) -> ServiceResult<Vec<Written>> {
    let mut out = Output::new(&cli.out)?;
    match &cli.command {
        Command::Generate => {
            let mut source: DatasetSource = config_or_default(cli)?;
            if let Some(seed) = cli.seed {
                source = source.with_seed(seed);
            }
            let ds = ops::generate(&source)?;
            out.bytes("dataset.csv", ds.to_csv_bytes())?;
            out.bytes("schema.json", ds.schema().to_json().into_bytes())?;
            out.json("dataset.json", &ops::summarize(&ds, Some(source)))?;
        }
        Command::Fit { data } => {
            let cfg: FitConfig = config_or_default(cli)?;
            let seed = cli.seed.or(cfg.seed).unwrap_or(0);
            let ds = load_data(data)?;
            let (tl, bytes) = ops::fit(&ds, &cfg.model, seed)?;
            let summary = ops::model_summary(&tl, &bytes, &cfg.model, seed, &ds);
            out.bytes("model.json", bytes)?;
            out.json("fit.json", &summary)?;
        }
        Command::Interactions { data, model } => {
            let cfg: Seeded<InteractionsConfig> = config_or_default(cli)?;
            let ds = load_data(data)?;
            let tl = load_model(model, &ds)?;
            let ranking = ops::interactions(&ds, &tl, &cfg.inner, cli.seed.or(cfg.seed).unwrap_or(0))?;
            out.json("interactions.json", &ranking)?;
            out.bytes("interactions.csv", interactions_csv(&ranking))?;
        }
        Command::Distill { data, model } => {
            let cfg: Seeded<ops::DistillRequestConfig> = config_or_default(cli)?;
            let ds = load_data(data)?;
            let tl = Arc::new(load_model(model, &ds)?);
            let s = ops::distill_model(&ds, &tl, &cfg.inner, cli.seed.or(cfg.seed).unwrap_or(0))?;
            let shapes = ops::surrogate_shapes(&s, &ds)?;
            out.json("surrogate.json", &s)?;
            out.json("distill.json", &ops::surrogate_summary(&s))?;
            out.json("shapes.json", &shapes)?;
            out.bytes("shapes.csv", shapes_csv(&shapes))?;
        }
        Command::Audit { data, model, surrogate } => {
            let cfg: AuditConfig = config_or_default(cli)?;
            let ds = load_data(data)?;
            let policy = resolve(&cfg.policy.score, model.as_deref(), surrogate.as_deref(), &ds)?;
            let output = ops::audit(&ds, &policy, &cfg.policy, &cfg.options)?;
            out.json("report.json", &output)?;
            out.bytes("report.csv", report_csv(&output))?;
        }
        Command::Sweep { data, model, surrogate } => {
            let cfg: SweepCli = config_or_default(cli)?;
            let ds = load_data(data)?;
            let source = match resolve(&cfg.score, model.as_deref(), surrogate.as_deref(), &ds)? {
                ResolvedPolicy::Scored(s) => s,
                _ => return Err(ServiceError::BadRequest("a sweep needs a scored policy".into())),
            };
            let first = ops::sweep(&ds, &source, &SweepConfig { page: 0, ..cfg.sweep.clone() })?;
            let mut pages = vec![first];
            for page in 1..pages[0].pages {
                pages.push(ops::sweep(&ds, &source, &SweepConfig { page, ..cfg.sweep.clone() })?);
            }
            if pages.len() == 1 {
                out.json("manifold.json", &pages[0])?;
            } else {
                for p in &pages {
                    out.json(&format!("manifold-{}.json", p.page), p)?;
                }
            }
            out.bytes("manifold.csv", manifold_csv(&pages))?;
        }
        Command::RemovalCurve { data, model, surrogate } => {
            let cfg: ops::RemovalConfig = required_config(cli)?;
            let ds = load_data(data)?;
            let tl = Arc::new(load_model(model, &ds)?);
            let s = Surrogate::from_json(&fs::read(surrogate)?)?;
            let rows = ops::removal_curve(&ds, &tl, &s, &cfg)?;
            out.json("removal.json", &rows)?;
            out.bytes("removal.csv", removal_csv(&rows))?;
        }
        Command::College => {
            let mut req: ops::CollegeRequest = config_or_default(cli)?;
            if let Some(seed) = cli.seed {
                req.college.seed = seed;
            }
            let study = ops::college(&req)?;
            out.json("college.json", &study)?;
            out.bytes("college.csv", college_csv(&study))?;
        }
        Command::Serve { addr } => {
            serve(addr)?;
        }
    }
    Ok(out.written)
}

fn serve(addr: &str) -> ServiceResult<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, crate::http::router(crate::state::AppState::new()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

/// A config section plus an optional seed, which `--seed` overrides.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct Seeded<T: Default> {
    #[serde(flatten)]
    inner: T,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct FitConfig {
    #[serde(default = "ops::default_model_spec")]
    model: ModelSpec,
    #[serde(default)]
    seed: Option<u64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            model: ops::default_model_spec(),
            seed: None,
        }
    }
}

fn ite_score() -> ScoreSpec {
    ScoreSpec::Ite { model_id: None }
}

fn default_policy() -> PolicySpec {
    PolicySpec {
        score: ite_score(),
        thresholds: None,
        treat_fraction: None,
    }
}

#[derive(Debug, Deserialize)]
struct AuditConfig {
    #[serde(default = "default_policy")]
    policy: PolicySpec,
    #[serde(flatten)]
    options: EvaluateOptions,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            policy: default_policy(),
            options: EvaluateOptions::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct SweepCli {
    #[serde(default = "ite_score")]
    score: ScoreSpec,
    #[serde(flatten)]
    sweep: SweepConfig,
}

impl Default for SweepCli {
    fn default() -> Self {
        SweepCli {
            score: ite_score(),
            sweep: SweepConfig::default(),
        }
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> ServiceResult<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", path.display())))
}

fn config_or_default<T: DeserializeOwned + Default>(cli: &Cli) -> ServiceResult<T> {
    match &cli.config {
        Some(p) => read_config(p),
        None => Ok(T::default()),
    }
}

fn required_config<T: DeserializeOwned>(cli: &Cli) -> ServiceResult<T> {
    match &cli.config {
        Some(p) => read_config(p),
        None => Err(fairaudit::Error::InvalidConfig("this subcommand needs --config".into()).into()),
    }
}

/// Loads `--data`: a generator config (`.json`), a directory written by
/// `generate`, or a CSV file with `schema.json` beside it. Generated
/// directories are re-simulated from their recorded source so the potential
/// outcomes are available; the checksum guards against stale files.
pub fn load_data(path: &Path) -> ServiceResult<ExperimentDataset> {
    if path.is_dir() {
        let summary_path = path.join("dataset.json");
        if summary_path.exists() {
            let summary: DatasetSummary = read_config(&summary_path)?;
            if let Some(source) = summary.source {
                let ds = ops::generate(&source)?;
                if ds.checksum() != summary.checksum {
                    return Err(fairaudit::Error::InvalidConfig(format!(
                        "{} does not match its recorded checksum",
                        path.display()
                    ))
                    .into());
                }
                return Ok(ds);
            }
        }
        return Ok(load_csv(path.join("dataset.csv"), path.join("schema.json"))?);
    }
    if path.extension().is_some_and(|e| e == "json") {
        let source: DatasetSource = read_config(path)?;
        return ops::generate(&source);
    }
    let schema = path.with_file_name("schema.json");
    Ok(load_csv(path, schema)?)
}

pub fn load_model(path: &Path, ds: &ExperimentDataset) -> ServiceResult<TLearner> {
    let tl = TLearner::from_json(&fs::read_to_string(path)?)?;
    tl.check_schema(ds.schema())?;
    Ok(tl)
}

fn resolve(
    spec: &ScoreSpec,
    model: Option<&Path>,
    surrogate: Option<&Path>,
    ds: &ExperimentDataset,
) -> ServiceResult<ResolvedPolicy> {
    Ok(match spec {
        ScoreSpec::TreatAll => ResolvedPolicy::TreatAll,
        ScoreSpec::TreatNone => ResolvedPolicy::TreatNone,
        ScoreSpec::Constant { value } => ResolvedPolicy::Scored(ScoreSource::Constant(*value)),
        ScoreSpec::Ite { .. } => {
            let tl = load_model(need(model, "model")?, ds)?;
            ResolvedPolicy::Scored(ScoreSource::Ite(Arc::new(tl)))
        }
        ScoreSpec::Adjusted { adjusted_id, adjustments } => {
            if adjusted_id.is_some() {
                return Err(ServiceError::BadRequest("adjusted_id only exists inside the service".into()));
            }
            let tl = Arc::new(load_model(need(model, "model")?, ds)?);
            let s = Surrogate::from_json(&fs::read(need(surrogate, "surrogate")?)?)?;
            let score = AdjustedScore::new(ops::teacher(&tl, s.target), s.student, s.audit, adjustments.clone())?;
            ResolvedPolicy::Scored(ScoreSource::Adjusted(Arc::new(score)))
        }
    })
}

fn need<'a>(p: Option<&'a Path>, flag: &str) -> ServiceResult<&'a Path> {
    p.ok_or_else(|| fairaudit::Error::InvalidConfig(format!("this score needs --{flag}")).into())
}

struct Output {
    dir: PathBuf,
    written: Vec<Written>,
}

impl Output {
    fn new(dir: &Path) -> ServiceResult<Output> {
        fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn bytes(&mut self, name: &str, bytes: Vec<u8>) -> ServiceResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes)?;
        self.written.push(Written {
            path,
            checksum: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> ServiceResult<()> {
        self.bytes(name, canonical_json(value))
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric(m: &Metric) -> String {
    cell(m.value())
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("flush")
}

pub fn interactions_csv(r: &Ranking) -> Vec<u8> {
    write_csv(
        &["rank", "feature_i", "feature_j", "name_i", "name_j", "score", "draws", "undefined"],
        r.scores.iter().enumerate().map(|(k, s)| {
            vec![
                (k + 1).to_string(),
                s.pair.0.to_string(),
                s.pair.1.to_string(),
                s.names.0.clone(),
                s.names.1.clone(),
                s.score.to_string(),
                s.draws.to_string(),
                s.undefined.to_string(),
            ]
        }),
    )
}

pub fn shapes_csv(s: &SurrogateShapes) -> Vec<u8> {
    let mut rows = Vec::new();
    for c in &s.comparison {
        let share = s.attribution.share(c.shape).map(|v| v.to_string()).unwrap_or_default();
        match c.knots.as_slice() {
            [k] => {
                for (idx, x) in k.iter().enumerate() {
                    rows.push(vec![
                        c.label.clone(),
                        x.to_string(),
                        String::new(),
                        c.distilled[idx].to_string(),
                        c.audit[idx].to_string(),
                        share.clone(),
                    ]);
                }
            }
            [ki, kj] => {
                for (a, xi) in ki.iter().enumerate() {
                    for (b, xj) in kj.iter().enumerate() {
                        let idx = a * kj.len() + b;
                        rows.push(vec![
                            c.label.clone(),
                            xi.to_string(),
                            xj.to_string(),
                            c.distilled[idx].to_string(),
                            c.audit[idx].to_string(),
                            share.clone(),
                        ]);
                    }
                }
            }
            _ => {}
        }
    }
    write_csv(&["shape", "x_i", "x_j", "distilled", "audit", "variance_share"], rows)
}

pub fn report_csv(o: &AuditOutput) -> Vec<u8> {
    let r = &o.report;
    let econ = r.econ;
    let rows = [
        ("threshold_0", Some(o.thresholds[0])),
        ("threshold_1", Some(o.thresholds[1])),
        ("treat_rate_0", Some(r.result.treat_rate[0])),
        ("treat_rate_1", Some(r.result.treat_rate[1])),
        ("outcome_mean_0", r.result.outcome_mean[0].value()),
        ("outcome_mean_1", r.result.outcome_mean[1].value()),
        ("tf", r.tf.value()),
        ("of", r.of.value()),
        ("nwo", r.nwo.value()),
        ("benchmark_of", r.benchmark_of.value()),
        ("econ_mean", econ.map(|e| e.mean)),
        ("econ_se", econ.map(|e| e.se)),
        ("econ_ci_low", econ.map(|e| e.ci_low)),
        ("econ_ci_high", econ.map(|e| e.ci_high)),
    ];
    write_csv(&["metric", "value"], rows.iter().map(|(k, v)| vec![k.to_string(), cell(*v)]))
}

pub fn manifold_csv(pages: &[ManifoldPage]) -> Vec<u8> {
    write_csv(
        &["threshold_0", "threshold_1", "treat_rate_0", "treat_rate_1", "tf", "of", "econ_mean", "econ_se"],
        pages.iter().flat_map(|p| &p.manifold.entries).map(|e| {
            vec![
                e.thresholds[0].to_string(),
                e.thresholds[1].to_string(),
                e.treat_rate[0].to_string(),
                e.treat_rate[1].to_string(),
                metric(&e.tf),
                metric(&e.of),
                cell(e.econ.map(|c| c.mean)),
                cell(e.econ.map(|c| c.se)),
            ]
        }),
    )
}

pub fn removal_csv(rows: &[RemovalRow]) -> Vec<u8> {
    write_csv(
        &["alpha", "threshold", "treat_rate_0", "treat_rate_1", "tf", "of", "nwo", "econ_mean", "econ_se"],
        rows.iter().map(|r| {
            vec![
                r.alpha.to_string(),
                r.threshold.to_string(),
                r.treat_rate[0].to_string(),
                r.treat_rate[1].to_string(),
                metric(&r.tf),
                metric(&r.of),
                metric(&r.nwo),
                cell(r.econ.map(|c| c.mean)),
                cell(r.econ.map(|c| c.se)),
            ]
        }),
    )
}

pub fn college_csv(s: &CollegeStudy) -> Vec<u8> {
    write_csv(
        &[
            "threshold_0",
            "threshold_1",
            "admitted_0",
            "admitted_1",
            "graduates",
            "minority_admits",
            "feasible",
            "frontier",
            "treatment_parity_gap",
            "predictive_parity_gap",
            "nwo",
        ],
        s.policies.iter().enumerate().map(|(i, p)| {
            vec![
                p.thresholds[0].to_string(),
                p.thresholds[1].to_string(),
                p.admitted[0].to_string(),
                p.admitted[1].to_string(),
                p.graduates.to_string(),
                p.minority_admits.to_string(),
                p.feasible.to_string(),
                s.frontier.binary_search(&i).is_ok().to_string(),
                p.treatment_parity_gap.to_string(),
                metric(&p.predictive_parity_gap),
                metric(&p.nwo),
            ]
        }),
    )
}
