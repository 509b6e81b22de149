use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairaudit"))
}

fn ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Runs the whole offline pipeline into `root`.
fn pipeline(root: &Path, cfg: &Path) {
    let d = root.join("d");
    let m = root.join("m/model.json");
    let s = root.join("s/surrogate.json");
    ok(bin()
        .args(["generate", "--seed", "7", "--config"])
        .arg(cfg.join("gen.json"))
        .arg("--out")
        .arg(&d));
    ok(bin()
        .args(["fit", "--seed", "1", "--config"])
        .arg(cfg.join("fit.json"))
        .arg("--data")
        .arg(&d)
        .arg("--out")
        .arg(root.join("m")));
    ok(bin()
        .args(["interactions", "--seed", "2", "--config"])
        .arg(cfg.join("inter.json"))
        .arg("--data")
        .arg(&d)
        .arg("--model")
        .arg(&m)
        .arg("--out")
        .arg(root.join("i")));
    ok(bin()
        .args(["distill", "--seed", "3", "--config"])
        .arg(cfg.join("distill.json"))
        .arg("--data")
        .arg(&d)
        .arg("--model")
        .arg(&m)
        .arg("--out")
        .arg(root.join("s")));
    ok(bin()
        .args(["audit", "--config"])
        .arg(cfg.join("audit.json"))
        .arg("--data")
        .arg(&d)
        .arg("--model")
        .arg(&m)
        .arg("--surrogate")
        .arg(&s)
        .arg("--out")
        .arg(root.join("a")));
    ok(bin()
        .args(["sweep", "--config"])
        .arg(cfg.join("sweep.json"))
        .arg("--data")
        .arg(&d)
        .arg("--model")
        .arg(&m)
        .arg("--out")
        .arg(root.join("w")));
    ok(bin()
        .args(["removal-curve", "--config"])
        .arg(cfg.join("removal.json"))
        .arg("--data")
        .arg(&d)
        .arg("--model")
        .arg(&m)
        .arg("--surrogate")
        .arg(&s)
        .arg("--out")
        .arg(root.join("r")));
    ok(bin()
        .args(["college", "--seed", "5", "--config"])
        .arg(cfg.join("college.json"))
        .arg("--out")
        .arg(root.join("c")));
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg");
    fs::create_dir(&cfg).unwrap();
    write(&cfg, "gen.json", r#"{"kind":"synthetic","config":{"n":3000,"c":0.5}}"#);
    write(&cfg, "fit.json", r#"{"model":{"kind":"gam","pairs":{"mode":"fixed","pairs":[[5,6]]}}}"#);
    write(&cfg, "inter.json", r#"{"draws":10,"k":3}"#);
    write(&cfg, "distill.json", r#"{"target":"ite","distill":{"rank":{"draws":10,"k":2}}}"#);
    write(
        &cfg,
        "audit.json",
        r#"{"policy":{"score":{"kind":"adjusted","adjustments":[{"shape":{"one":3},"alpha":0.5}]}},"group_feature":"x4"}"#,
    );
    write(&cfg, "sweep.json", r#"{"levels":6}"#);
    write(&cfg, "removal.json", r#"{"shape":"x4","alphas":[0.0,0.5,1.0]}"#);
    write(&cfg, "college.json", r#"{"college":{"n":4000},"levels":6}"#);

    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    pipeline(&a, &cfg);
    pipeline(&b, &cfg);
    let fa = files(&a);
    let fb = files(&b);
    assert_eq!(fa.len(), 19);
    assert_eq!(fa.len(), fb.len());
    for ((pa, ba), (pb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(pa, pb);
        assert!(ba == bb, "{} differs between runs", pa.display());
    }

    let removal = fs::read_to_string(a.join("r/removal.csv")).unwrap();
    assert_eq!(removal.lines().count(), 4);
    assert!(removal.starts_with("alpha,threshold,"));
    let manifold = fs::read_to_string(a.join("w/manifold.csv")).unwrap();
    assert_eq!(manifold.lines().count(), 1 + 36);
}

#[test]
fn stdout_lists_checksums_of_written_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "gen.json", r#"{"kind":"college","config":{"n":2000}}"#);
    let out = ok(bin().arg("generate").arg("--config").arg(&cfg).arg("--out").arg(tmp.path().join("d")));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    for l in lines {
        let (sum, path) = l.split_once("  ").unwrap();
        assert_eq!(sum.len(), 64);
        let bytes = fs::read(path).unwrap();
        use sha2::Digest;
        assert_eq!(sum, hex::encode(sha2::Sha256::digest(&bytes)));
    }
}

#[test]
fn failures_exit_with_a_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["fit", "--data"])
        .arg(tmp.path().join("missing.csv"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error["));

    let out = bin()
        .arg("removal-curve")
        .args(["--data", "x", "--model", "y", "--surrogate", "z"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn csv_directory_round_trips_through_load() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = write(tmp.path(), "gen.json", r#"{"kind":"synthetic","config":{"n":500}}"#);
    let d = tmp.path().join("d");
    ok(bin().arg("generate").arg("--config").arg(&gen).arg("--out").arg(&d));
    // without the summary the directory is read as CSV
    fs::remove_file(d.join("dataset.json")).unwrap();
    let ds = fairaudit_service::cli::load_data(&d).unwrap();
    assert_eq!(ds.n(), 500);
    let regenerated = fairaudit_service::cli::load_data(&gen).unwrap();
    assert_eq!(ds.x(), regenerated.x());
    assert_eq!(ds.y(), regenerated.y());
    assert_eq!(ds.t(), regenerated.t());
}
