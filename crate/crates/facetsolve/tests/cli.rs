use std::path::Path;
use std::process::{Command, Output};

use facetsolve_core::Report;

const BASE: &str = r#"{
  "dim": 1,
  "n": 128,
  "p": 3,
  "beta": 0.1,
  "eps": {"start": 0.1, "end": 1e-4},
  "verify": {"samples": 300, "perturbations": 20},
  "sweep": {"eps": [1e-1, 1e-3], "amplitude": [1, 10]}
}
"#;

fn facetsolve(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facetsolve"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, config: &str, dir: &Path, out: &str) -> Output {
    std::fs::write(dir.join(format!("{out}.json")), config).unwrap();
    facetsolve(&[cmd, "--config", &format!("{out}.json"), "--out", out], dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_report(path: &Path) -> Report {
    Report::parse(&std::fs::read_to_string(path).unwrap())
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn solve_writes_fields_with_hash_headers() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", BASE, dir.path(), "s");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("s");
    let first = |f: &str| std::fs::read_to_string(out.join(f)).unwrap().lines().next().unwrap().to_string();
    let hash = first("u.csv");
    assert!(hash.starts_with("# config_hash="));
    for f in ["cells.csv", "levels.csv", "summary.txt", "diagnostics.txt"] {
        assert_eq!(first(f), hash, "{f}");
    }
    let s = read_report(&out.join("summary.txt"));
    assert_eq!(s.get_flag("converged"), Some(true));
    assert_eq!(s.get_num("eps_final"), Some(1e-4));
    assert!(s.get_num("oracle_grad_error").unwrap() < 1e-2);
    assert_eq!(data_rows(&out.join("u.csv")).len(), 129);
    assert_eq!(data_rows(&out.join("levels.csv")).len(), 4);
}

#[test]
fn invalid_p_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", &BASE.replace("\"p\": 3", "\"p\": 0.5"), dir.path(), "bad");
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("line 4") && e.contains("p > 1"), "{e}");
    assert!(!dir.path().join("bad").exists());
}

#[test]
fn malformed_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", &BASE.replace("\"beta\": 0.1,", "\"beta\": 0.1"), dir.path(), "bad");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));
}

#[test]
fn iteration_cap_is_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE.replace("\"beta\": 0.1,", "\"beta\": 0.1,\n  \"solver\": {\"max_iters\": 1},");
    let o = run("solve", &cfg, dir.path(), "cap");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let out = dir.path().join("cap");
    assert!(out.join("u.csv").exists());
    assert_eq!(read_report(&out.join("summary.txt")).get_flag("converged"), Some(false));
}

#[test]
fn verify_passes_on_default_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("verify", BASE, dir.path(), "v");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = read_report(&dir.path().join("v").join("verify.txt"));
    assert!(r.passed());
    assert_eq!(r.get("failed").map(|v| v.to_string()), Some(String::new()));
}

#[test]
fn injected_z_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE.replace("\"samples\": 300", "\"samples\": 300, \"inject_z_scale\": 1.5");
    let o = run("verify", &cfg, dir.path(), "z");
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("z.bound"), "{}", stderr(&o));
}

#[test]
fn empty_sweep_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE.replace("\"amplitude\": [1, 10]", "\"amplitude\": []");
    let o = run("verify", &cfg, dir.path(), "e");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 8"), "{}", stderr(&o));
}

#[test]
fn sweep_is_cartesian_deduplicated_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE.replace(
        "\"sweep\": {\"eps\": [1e-1, 1e-3], \"amplitude\": [1, 10]}",
        "\"sweep\": {\"eps\": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5], \"amplitude\": [1, 10, 100, 10]}",
    );
    let o = run("sweep", &cfg, dir.path(), "a");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("duplicate"), "{}", stderr(&o));
    let a = std::fs::read(dir.path().join("a").join("sweep.csv")).unwrap();
    let rows = data_rows(&dir.path().join("a").join("sweep.csv"));
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r[3] == "true" && r[12].is_empty()));

    std::fs::write(dir.path().join("b.json"), &cfg).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_facetsolve"))
        .args(["sweep", "--config", "b.json", "--out", "b"])
        .current_dir(dir.path())
        .env("FACETSOLVE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let b = std::fs::read(dir.path().join("b").join("sweep.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn grid_sweep_oracle_error_tracks_eps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE.replace(
        "\"sweep\": {\"eps\": [1e-1, 1e-3], \"amplitude\": [1, 10]}",
        "\"sweep\": {\"eps\": [1e-4, 1e-6], \"amplitude\": [1], \"n\": [256, 512, 1024]}",
    );
    let o = run("sweep", &cfg, dir.path(), "g");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("g").join("sweep.csv"));
    let err: Vec<f64> = rows.iter().map(|r| r[11].parse().unwrap()).collect();
    assert_eq!(err.len(), 6);
    for pair in err.chunks(2) {
        assert!(pair[0] < 2e-3 && pair[1] < 2e-2 * pair[0], "{err:?}");
    }
}

#[test]
fn seed_override_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), BASE).unwrap();
    let a = facetsolve(&["solve", "--config", "c.json", "--out", "a"], dir.path());
    let b = facetsolve(&["solve", "--config", "c.json", "--out", "b", "--seed", "9"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let head = |d: &str| std::fs::read_to_string(dir.path().join(d).join("u.csv")).unwrap();
    let (ha, hb) = (head("a"), head("b"));
    assert_ne!(ha.lines().next(), hb.lines().next());
    assert_eq!(ha.lines().skip(1).collect::<Vec<_>>(), hb.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn report_writes_monitor_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BASE.replace("\"dim\": 1", "\"dim\": 2").replace("\"n\": 128", "\"n\": 32");
    let cfg = cfg.replace("\"beta\": 0.1,", "\"beta\": 0.1,\n  \"source\": {\"kind\": \"sine_product\", \"amplitude\": 20},");
    let o = run("report", &cfg, dir.path(), "r");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("r");
    assert!(!data_rows(&out.join("moser.csv")).is_empty());
    assert_eq!(data_rows(&out.join("degiorgi.csv")).len(), 18);
    assert!(read_report(&out.join("diagnostics.txt")).passed());
}

#[test]
fn csv_source_is_read_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("x,f\n");
    for i in 0..=16 {
        text.push_str(&format!("{},{}\n", i as f64 / 16.0, 2.0));
    }
    std::fs::write(dir.path().join("f.csv"), text).unwrap();
    let cfg = BASE
        .replace("\"n\": 128", "\"n\": 16")
        .replace("\"beta\": 0.1,", "\"beta\": 0.1,\n  \"source\": {\"kind\": \"csv\", \"path\": \"f.csv\"},");
    let o = run("solve", &cfg, dir.path(), "c");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run("solve", &cfg.replace("f.csv", "missing.csv"), dir.path(), "m");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.csv"), "{}", stderr(&o));
}
