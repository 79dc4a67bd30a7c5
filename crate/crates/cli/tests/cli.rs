use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eiv_tls::harness::{read_rows, write_rows};
use eiv_tls::io::{load_instance, read_matrix, write_matrix};
use eiv_tls::solvers::estimate_rank;
use eiv_tls::Matrix;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eiv-tls"));
    cmd.env("EIV_TLS_THREADS", "2");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_pair(dir: &Path, a: &Matrix, b: &Matrix) -> (PathBuf, PathBuf) {
    let pa = dir.join("a.csv");
    let pb = dir.join("b.csv");
    write_matrix(&pa, a).unwrap();
    write_matrix(&pb, b).unwrap();
    (pa, pb)
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const SMALL_CONFIG: &str = r#"{
  "n": 4, "ell": 1, "k": 1, "r": 3, "sigma": 0.1, "noise": "gaussian",
  "seed": 11, "m_schedule": [60, 600], "replicates": 4
}"#;

#[test]
fn solve_tls_on_noiseless_system() {
    let dir = tempfile::tempdir().unwrap();
    let a = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let b = Matrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
    let (pa, pb) = write_pair(dir.path(), &a, &b);
    let out = dir.path().join("sol");
    let res = run(&["solve", "--a", path_str(&pa), "--b", path_str(&pb), "--method", "tls", "--out", path_str(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let x = read_matrix(dir.path().join("sol_x.csv")).unwrap();
    assert!((x - Matrix::from_row_slice(2, 1, &[1.0, 1.0])).norm() <= 1e-8);
    assert_eq!(fs::read_to_string(dir.path().join("sol_w.csv")).unwrap(), "");
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sol_diag.json")).unwrap()).unwrap();
    assert_eq!(diag["eigenvalues"].as_array().unwrap().len(), 3);
}

#[test]
fn ctls_at_full_rank_matches_tls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &SMALL_CONFIG.replace("\"k\": 1", "\"k\": 0"));
    let prefix = dir.path().join("inst");
    let res = run(&["generate", "--config", path_str(&cfg), "--m", "80", "--out", path_str(&prefix)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let a = dir.path().join("inst_a.csv");
    let b = dir.path().join("inst_b.csv");
    let tls = dir.path().join("tls");
    let ctls = dir.path().join("ctls");
    let common = ["solve", "--a", path_str(&a), "--b", path_str(&b)];
    let r1 = bin().args(common).args(["--method", "tls", "--out", path_str(&tls)]).output().unwrap();
    let r2 = bin()
        .args(common)
        .args(["--k", "0", "--rank", "4", "--method", "ctls", "--out", path_str(&ctls)])
        .output()
        .unwrap();
    assert!(r1.status.success() && r2.status.success());
    let x1 = read_matrix(dir.path().join("tls_x.csv")).unwrap();
    let x2 = read_matrix(dir.path().join("ctls_x.csv")).unwrap();
    assert!((x1 - x2).norm() <= 1e-10);
}

#[test]
fn inconsistent_exact_row_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let a = Matrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.2, 0.3, 1.0, 2.0, -1.0]);
    let b = Matrix::from_row_slice(4, 1, &[1.0, 0.5, 0.1, 0.3]);
    let (pa, pb) = write_pair(dir.path(), &a, &b);
    let out = dir.path().join("sol");
    let res = run(&["solve", "--a", path_str(&pa), "--b", path_str(&pb), "--k", "1", "--rank", "2", "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("InconsistentExactRows"));
}

#[test]
fn malformed_matrix_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let pa = dir.path().join("a.csv");
    fs::write(&pa, "1,2\n3\n").unwrap();
    let pb = dir.path().join("b.csv");
    fs::write(&pb, "1\n2\n").unwrap();
    let out = dir.path().join("sol");
    let res = run(&["solve", "--a", path_str(&pa), "--b", path_str(&pb), "--out", path_str(&out)]);
    assert_eq!(res.status.code(), Some(1));
    let res = run(&["solve", "--a", path_str(&pa)]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn auto_rank_diag_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.toml",
        "n = 6\nell = 2\nk = 2\nr = 4\nr_inf = 3\nsigma = 0.1\nseed = 3\nm_schedule = [10000]\nreplicates = 1\n",
    );
    let prefix = dir.path().join("inst");
    assert!(run(&["generate", "--config", path_str(&cfg), "--out", path_str(&prefix)]).status.success());
    let out = dir.path().join("sol");
    let res = run(&[
        "solve",
        "--a",
        path_str(&dir.path().join("inst_a.csv")),
        "--b",
        path_str(&dir.path().join("inst_b.csv")),
        "--k",
        "2",
        "--rank",
        "auto",
        "--out",
        path_str(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sol_diag.json")).unwrap()).unwrap();
    let eig: Vec<f64> = serde_json::from_value(diag["eigenvalues"].clone()).unwrap();
    let inst = load_instance(&prefix).unwrap();
    let expected = estimate_rank(&eig, 2, 2, inst.m()).unwrap();
    assert_eq!(diag["rank_decision"]["rank"], expected.rank);
    assert_eq!(expected.rank, 3);
    assert_eq!(diag["rank_decision"]["cluster"].as_array().unwrap().len(), 5);
}

#[test]
fn simulate_replays_byte_for_byte_and_report_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", SMALL_CONFIG);
    let p1 = dir.path().join("run1");
    let p2 = dir.path().join("run2");
    let r1 = run(&["simulate", "--config", path_str(&cfg), "--out", path_str(&p1)]);
    let r2 = bin()
        .env("EIV_TLS_THREADS", "1")
        .args(["simulate", "--config", path_str(&cfg), "--out", path_str(&p2)])
        .output()
        .unwrap();
    assert!(r1.status.success(), "{}", String::from_utf8_lossy(&r1.stderr));
    assert!(r2.status.success());
    assert_eq!(r1.stdout, r2.stdout);
    let read = |p: &Path, s: &str| fs::read(with(p, s)).unwrap();
    assert_eq!(read(&p1, "_rows.csv"), read(&p2, "_rows.csv"));
    assert_eq!(read(&p1, "_summary.json"), read(&p2, "_summary.json"));

    let report = run(&["report", "--rows", path_str(&with(&p1, "_rows.csv")), "--format", "json"]);
    assert!(report.status.success());
    assert_eq!(report.stdout, read(&p1, "_summary.json"));
    let md = run(&["report", "--rows", path_str(&with(&p1, "_rows.csv"))]);
    assert_eq!(md.stdout, r1.stdout);
}

fn with(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", prefix.display()))
}

#[test]
fn noiseless_simulation_summary_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &SMALL_CONFIG.replace("\"sigma\": 0.1", "\"sigma\": 0.0"));
    let prefix = dir.path().join("exact");
    let res = run(&["simulate", "--config", path_str(&cfg), "--out", path_str(&prefix)]);
    assert!(res.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(with(&prefix, "_summary.json")).unwrap()).unwrap();
    for group in summary["groups"].as_array().unwrap() {
        assert!(group["metrics"]["sin_max"]["q3"].as_f64().unwrap() <= 1e-8);
    }
}

#[test]
fn invalid_config_reports_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &SMALL_CONFIG.replace("[60, 600]", "[600, 60]"));
    let res = run(&["simulate", "--config", path_str(&cfg)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("m_schedule"));
}

#[test]
fn report_rejects_empty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.csv");
    fs::write(&rows, "").unwrap();
    assert_eq!(run(&["report", "--rows", path_str(&rows)]).status.code(), Some(1));
}

#[test]
fn report_surfaces_excluded_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", SMALL_CONFIG);
    let prefix = dir.path().join("run");
    assert!(run(&["simulate", "--config", path_str(&cfg), "--out", path_str(&prefix)]).status.success());
    let mut rows = read_rows(with(&prefix, "_rows.csv")).unwrap();
    for row in rows.iter_mut().take(2) {
        row.status = "NotGeneric".into();
    }
    let edited = dir.path().join("edited.csv");
    write_rows(&edited, &rows).unwrap();
    let res = run(&["report", "--rows", path_str(&edited), "--format", "json"]);
    let summary: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let first = &summary["groups"][0];
    assert_eq!(first["excluded"], 2);
    assert_eq!(first["excluded_by_status"]["NotGeneric"], 2);
    assert_eq!(first["metrics"]["sin_max"]["count"], 2);
}
