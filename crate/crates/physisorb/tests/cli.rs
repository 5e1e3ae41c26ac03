use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_physisorb");

fn small_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("case.toml");
    fs::write(&path, format!("n_eps = 64\nn_zeta = 128\ntol = 1e-8\n{extra}")).unwrap();
    path
}

fn physisorb(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

#[test]
fn invalid_configuration_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "sigma = -1.0\n").unwrap();
    let o = physisorb(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("sigma"));

    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = physisorb(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("no_such_key"));

    let o = physisorb(&["compare-bc", "--preset", "ix"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unconverged_run_exits_with_code_3_and_keeps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = small_config(dir.path(), "");
    let o = physisorb(&[
        "run",
        "--preset",
        "iii",
        "--config",
        cfg.to_str().unwrap(),
        "--kmax",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    assert!(out.join("moments.csv").exists());
    assert!(out.join("increments.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], false);
    assert_eq!(report["iterations"], 20);
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "cuts = [1.05]\n");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = physisorb(&[
            "run",
            "--preset",
            "iii",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in [
        "moments.csv",
        "increments.csv",
        "cuts/zeta_1.05.csv",
        "bc/alpha.csv",
        "bc/outgoing.csv",
    ] {
        let x = fs::read(a.join(file)).unwrap();
        assert!(!x.is_empty(), "{file}");
        assert_eq!(x, fs::read(b.join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn requested_probe_gets_its_own_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = small_config(dir.path(), "");
    let o = physisorb(&[
        "run",
        "--preset",
        "i",
        "--config",
        cfg.to_str().unwrap(),
        "--probe",
        "1.122",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = fs::read_to_string(out.join("increments.csv")).unwrap();
    let header = csv.lines().find(|l| l.starts_with("k,")).unwrap();
    let probes: Vec<f64> = header
        .split(',')
        .filter_map(|c| c.strip_prefix("n_at_"))
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(probes.iter().any(|z| (z - 1.122).abs() < 1e-12), "{header}");
}

#[test]
fn compare_bc_prints_the_distance_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = physisorb(&["compare-bc", "--preset", "iii", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let s = text(&o);
    assert!(s.contains("beta ="), "{s}");
    assert!(s.lines().count() >= 3, "{s}");
}
