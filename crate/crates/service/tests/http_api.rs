use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use fairaudit_service::cli::{run, Cli, Command};
use fairaudit_service::http::router;
use fairaudit_service::ops;
use fairaudit_service::state::AppState;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap()
    }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>, key: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(k) = key {
        req = req.header("idempotency-key", k);
    }
    let body = match body {
        Some(v) => Body::from(serde_json::to_vec(&v).unwrap()),
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, bytes }
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, "POST", uri, Some(body), None).await
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, "GET", uri, None, None).await
}

fn small_synthetic(seed: u64) -> Value {
    json!({"kind": "synthetic", "config": {"n": 3000, "c": 0.5, "seed": seed}})
}

async fn generate(app: &Router, seed: u64) -> u64 {
    let r = post(app, "/datasets/generate", small_synthetic(seed)).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.bytes));
    r.json()["id"].as_u64().unwrap()
}

async fn wait_job(app: &Router, job: u64) -> Value {
    for _ in 0..600 {
        let r = get(app, &format!("/jobs/{job}")).await;
        assert_eq!(r.status, StatusCode::OK);
        let v = r.json();
        if v["status"] != "running" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {job} never finished");
}

async fn fit_linear(app: &Router, dataset: u64, seed: u64) -> u64 {
    let r = post(
        app,
        "/models/fit",
        json!({"dataset_id": dataset, "model": {"kind": "linear"}, "seed": seed}),
    )
    .await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let job = r.json();
    let done = wait_job(app, job["id"].as_u64().unwrap()).await;
    assert_eq!(done["status"], "succeeded", "{done}");
    done["model_id"].as_u64().unwrap()
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_json(dir: &std::path::Path, name: &str, v: Value) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
    p
}

fn cli(command: Command, config: Option<std::path::PathBuf>, seed: Option<u64>, out: &std::path::Path) {
    run(&Cli {
        seed,
        config,
        out: out.to_path_buf(),
        command,
    })
    .unwrap();
}

fn file_sha(path: std::path::PathBuf) -> String {
    sha(&std::fs::read(path).unwrap())
}

#[tokio::test]
async fn envelope_checksum_covers_the_result() {
    let app = router(AppState::new());
    let r = post(&app, "/datasets/generate", small_synthetic(1)).await;
    let v = r.json();
    let source: ops::DatasetSource = serde_json::from_value(small_synthetic(1)).unwrap();
    let summary = ops::summarize(&ops::generate(&source).unwrap(), Some(source));
    assert_eq!(v["checksum"].as_str().unwrap(), sha(&ops::canonical_json(&summary)));
    assert_eq!(v["reproduce"]["command"], "generate");
    assert_eq!(v["result"]["n"], 3000);

    let list = get(&app, "/datasets").await.json();
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["id"], v["id"]);
}

#[tokio::test]
async fn http_and_cli_agree_on_every_artifact() {
    let app = router(AppState::new());
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // generate
    let r = post(&app, "/datasets/generate", small_synthetic(7)).await;
    let env = r.json();
    let dataset = env["id"].as_u64().unwrap();
    let gen_cfg = write_json(dir, "gen.json", small_synthetic(0));
    cli(Command::Generate, Some(gen_cfg), Some(7), &dir.join("d"));
    assert_eq!(env["checksum"].as_str().unwrap(), file_sha(dir.join("d/dataset.json")));

    // fit
    let model = fit_linear(&app, dataset, 3).await;
    let env = get(&app, &format!("/models/{model}")).await.json();
    let fit_cfg = write_json(dir, "fit.json", json!({"model": {"kind": "linear"}, "seed": 3}));
    cli(Command::Fit { data: dir.join("d") }, Some(fit_cfg), None, &dir.join("m"));
    assert_eq!(env["checksum"].as_str().unwrap(), file_sha(dir.join("m/fit.json")));

    // evaluate
    let opts = json!({"group_feature": "x3"});
    let mut body = json!({"dataset_id": dataset, "policy": {"score": {"kind": "ite", "model_id": model}}});
    body["group_feature"] = opts["group_feature"].clone();
    let env = post(&app, "/evaluate", body).await.json();
    let audit_cfg = write_json(dir, "audit.json", json!({"group_feature": "x3"}));
    cli(
        Command::Audit {
            data: dir.join("d"),
            model: Some(dir.join("m/model.json")),
            surrogate: None,
        },
        Some(audit_cfg),
        None,
        &dir.join("a"),
    );
    assert_eq!(env["checksum"].as_str().unwrap(), file_sha(dir.join("a/report.json")));

    // manifold
    let env = post(
        &app,
        "/manifold",
        json!({"dataset_id": dataset, "score": {"kind": "ite", "model_id": model}, "levels": 9}),
    )
    .await
    .json();
    let sweep_cfg = write_json(dir, "sweep.json", json!({"levels": 9}));
    cli(
        Command::Sweep {
            data: dir.join("d"),
            model: Some(dir.join("m/model.json")),
            surrogate: None,
        },
        Some(sweep_cfg),
        None,
        &dir.join("w"),
    );
    assert_eq!(env["checksum"].as_str().unwrap(), file_sha(dir.join("w/manifold.json")));
    assert_eq!(env["result"]["manifold"]["entries"].as_array().unwrap().len(), 81);
}

#[tokio::test]
async fn treat_everyone_has_full_treatment_fairness() {
    let app = router(AppState::new());
    let dataset = generate(&app, 2).await;
    let r = post(&app, "/evaluate", json!({"dataset_id": dataset, "policy": {"score": {"kind": "treat_all"}}})).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_eq!(v["result"]["report"]["tf"]["value"].as_f64(), Some(100.0), "{v}");
    assert_eq!(v["result"]["report"]["result"]["treat_rate"], json!([1.0, 1.0]));
}

#[tokio::test]
async fn manifold_is_cached_byte_for_byte() {
    let app = router(AppState::new());
    let dataset = generate(&app, 4).await;
    let model = fit_linear(&app, dataset, 0).await;
    let body = json!({"dataset_id": dataset, "score": {"kind": "ite", "model_id": model}, "levels": 7});
    let a = post(&app, "/manifold", body.clone()).await;
    let b = post(&app, "/manifold", body).await;
    assert_eq!(a.status, StatusCode::OK);
    assert_eq!(a.bytes, b.bytes);

    // a fresh service computes the same bytes
    let app2 = router(AppState::new());
    let dataset2 = generate(&app2, 4).await;
    let model2 = fit_linear(&app2, dataset2, 0).await;
    assert_eq!((dataset, model), (dataset2, model2));
    let c = post(
        &app2,
        "/manifold",
        json!({"dataset_id": dataset2, "score": {"kind": "ite", "model_id": model2}, "levels": 7}),
    )
    .await;
    assert_eq!(a.bytes, c.bytes);
}

#[tokio::test]
async fn manifold_pages_respect_the_cap() {
    let app = router(AppState::new());
    let dataset = generate(&app, 5).await;
    let body = |levels: usize, page: usize| {
        json!({"dataset_id": dataset, "score": {"kind": "constant", "value": 0.0}, "levels": levels, "page": page})
    };
    let v = post(&app, "/manifold", body(150, 0)).await.json();
    let page = &v["result"];
    assert_eq!(page["total_points"], 150 * 150);
    let pages = page["pages"].as_u64().unwrap();
    assert!(pages >= 3);
    let mut seen = 0;
    for p in 0..pages {
        let v = post(&app, "/manifold", body(150, p as usize)).await.json();
        let n = v["result"]["manifold"]["entries"].as_array().unwrap().len();
        assert!(n <= 10_000);
        seen += n;
    }
    assert_eq!(seen, 150 * 150);

    let r = post(&app, "/manifold", body(150, pages as usize)).await;
    assert!(r.status.is_client_error());
    let r = post(&app, "/manifold", body(20_000, 0)).await;
    assert_eq!(r.status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(r.json()["code"], "too_large");
}

#[tokio::test]
async fn idempotency_key_replays_and_rejects_conflicts() {
    let app = router(AppState::new());
    let a = send(&app, "POST", "/datasets/generate", Some(small_synthetic(9)), Some("k1")).await;
    let b = send(&app, "POST", "/datasets/generate", Some(small_synthetic(9)), Some("k1")).await;
    assert_eq!(a.status, StatusCode::CREATED);
    assert_eq!(a.status, b.status);
    assert_eq!(a.bytes, b.bytes);
    assert_eq!(get(&app, "/datasets").await.json().as_array().unwrap().len(), 1);

    let c = send(&app, "POST", "/datasets/generate", Some(small_synthetic(10)), Some("k1")).await;
    assert_eq!(c.status, StatusCode::CONFLICT);
    assert_eq!(c.json()["code"], "idempotency_conflict");

    // without a key every call creates a new artifact
    let d = post(&app, "/datasets/generate", small_synthetic(9)).await;
    assert_ne!(d.json()["id"], a.json()["id"]);
    assert_eq!(d.json()["checksum"], a.json()["checksum"]);

    // failures are not recorded, so a corrected retry can reuse the key
    let bad = send(&app, "POST", "/datasets/generate", Some(json!({"kind": "nope"})), Some("k2")).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    let ok = send(&app, "POST", "/datasets/generate", Some(small_synthetic(1)), Some("k2")).await;
    assert_eq!(ok.status, StatusCode::CREATED);
}

#[tokio::test]
async fn errors_have_codes_and_statuses() {
    let app = router(AppState::new());
    let check = |r: Reply, status: StatusCode, code: &str| {
        assert_eq!(r.status, status, "{}", String::from_utf8_lossy(&r.bytes));
        let v = r.json();
        assert_eq!(v["code"], code);
        assert!(!v["message"].as_str().unwrap().is_empty());
    };
    check(get(&app, "/nowhere").await, StatusCode::NOT_FOUND, "not_found");
    check(get(&app, "/models/77").await, StatusCode::NOT_FOUND, "not_found");
    check(get(&app, "/jobs/77").await, StatusCode::NOT_FOUND, "not_found");
    check(get(&app, "/models/abc").await, StatusCode::BAD_REQUEST, "malformed_request");

    let raw = Request::builder()
        .method("POST")
        .uri("/evaluate")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(raw).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    check(
        post(&app, "/evaluate", json!({"dataset_id": 5, "policy": {"score": {"kind": "treat_all"}}})).await,
        StatusCode::NOT_FOUND,
        "not_found",
    );
    check(
        post(&app, "/datasets/generate", json!({"kind": "synthetic", "config": {"n": 3000, "c": 1.5}})).await,
        StatusCode::UNPROCESSABLE_ENTITY,
        "invalid_config",
    );

    let schema = json!({"features": [{"name": "a", "kind": "binary", "sensitive": true}], "group_feature": "a"});
    let csv = "a,T,Y\n0,0,1\n1,1,0\n0,2,1\n";
    check(
        post(&app, "/datasets/upload", json!({"schema": schema, "csv": csv})).await,
        StatusCode::UNPROCESSABLE_ENTITY,
        "invalid_treatment",
    );

    let dataset = generate(&app, 3).await;
    check(
        post(&app, "/evaluate", json!({"dataset_id": dataset, "policy": {"score": {"kind": "ite"}}})).await,
        StatusCode::BAD_REQUEST,
        "malformed_request",
    );
    check(
        post(
            &app,
            "/evaluate",
            json!({"dataset_id": dataset, "policy": {"score": {"kind": "treat_all"}}, "group_feature": "zzz"}),
        )
        .await,
        StatusCode::UNPROCESSABLE_ENTITY,
        "invalid_schema",
    );
}

#[tokio::test]
async fn upload_accepts_a_small_table() {
    let app = router(AppState::new());
    let schema = json!({
        "features": [{"name": "a", "kind": "binary", "sensitive": true}, {"name": "b", "kind": "continuous"}],
        "group_feature": "a"
    });
    let csv = "b,a,T,Y\n0.5,0,0,1\n0.1,1,1,0\n-0.2,0,1,1\n0.9,1,0,0\n";
    let r = post(&app, "/datasets/upload", json!({"schema": schema, "csv": csv})).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.bytes));
    let v = r.json();
    assert_eq!(v["result"]["n"], 4);
    assert_eq!(v["result"]["names"], json!(["a", "b"]));
    assert_eq!(v["result"]["treated_fraction"], 0.5);
}

#[tokio::test]
async fn failed_fit_is_reported_on_the_job() {
    let app = router(AppState::new());
    let dataset = generate(&app, 6).await;
    let r = post(
        &app,
        "/models/fit",
        json!({"dataset_id": dataset, "model": {"kind": "gam", "pairs": {"mode": "fixed", "pairs": [[3, 300]]}}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let done = wait_job(&app, r.json()["id"].as_u64().unwrap()).await;
    assert_eq!(done["status"], "failed");
    assert_eq!(done["error"]["code"], "invalid_pair");
    assert!(done.get("model_id").is_none());
}

#[tokio::test]
async fn distill_adjust_and_audit_the_adjusted_policy() {
    let app = router(AppState::new());
    let dataset = generate(&app, 8).await;
    let r = post(
        &app,
        "/models/fit",
        json!({"dataset_id": dataset, "model": {"kind": "gam", "pairs": {"mode": "fixed", "pairs": [[5, 6]]}}}),
    )
    .await;
    let done = wait_job(&app, r.json()["id"].as_u64().unwrap()).await;
    let model = done["model_id"].as_u64().unwrap();

    // no surrogate yet
    let r = post(&app, "/adjust", json!({"model_id": model, "adjustments": []})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let r = post(
        &app,
        &format!("/models/{model}/distill"),
        json!({"seed": 1, "target": "arm1", "distill": {"rank": {"draws": 10, "k": 1}}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.bytes));
    let v = r.json();
    let surrogate = v["id"].as_u64().unwrap();
    assert!(v["result"]["fidelity"].as_f64().unwrap() > 0.9, "{v}");

    let shapes = get(&app, &format!("/models/{model}/shapes")).await;
    assert_eq!(shapes.status, StatusCode::OK);
    let s = shapes.json();
    assert_eq!(s["result"]["arms"].as_array().unwrap().len(), 2);
    assert_eq!(s["result"]["surrogates"][0]["surrogate_id"].as_u64(), Some(surrogate));

    let inter = get(&app, &format!("/models/{model}/interactions?M=10&K=3&seed=2")).await;
    assert_eq!(inter.status, StatusCode::OK);
    assert_eq!(inter.json()["result"]["k"], 3);

    let r = post(
        &app,
        "/adjust",
        json!({"model_id": model, "adjustments": [{"shape": {"one": 3}, "alpha": 1.0}]}),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.bytes));
    let v = r.json();
    assert_eq!(v["result"]["surrogate_id"].as_u64(), Some(surrogate));
    let adjusted = v["id"].as_u64().unwrap();

    let r = post(
        &app,
        "/evaluate",
        json!({"dataset_id": dataset, "policy": {"score": {"kind": "adjusted", "adjusted_id": adjusted}}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
    let tf = r.json()["result"]["report"]["tf"]["value"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&tf));
}
