use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracsheet")).args(args).arg("--out").arg(out).arg("--quiet").output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn zero_paths_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--paths", "0", "--grid", "9"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(csv.trim_end(), "path_id,i,j,s,t,W,B_lo,B_hi");
}

#[test]
fn unordered_pairs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let same = ["simulate", "--set", "hi_alpha=0.3", "--set", "hi_beta=0.3"];
    let out = run(dir.path(), &same);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('≺'));

    let out = run(dir.path(), &["bounds", "--set", "a=0.1", "--set", "a_prime=0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(dir.path(), &["solve", "--set", "colour=red"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["simulate", "--set", "grid=many"]).status.code(), Some(2));
}

#[test]
fn missing_config_file_and_unwritable_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--config", "/nonexistent/run.conf"]);
    assert_eq!(out.status.code(), Some(2));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = run(&blocker.join("sub"), &["simulate", "--paths", "2", "--grid", "5"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# small run\ngrid = 5\npaths = 3\ncsv_paths = 3\n").unwrap();
    let conf = conf.to_str().unwrap();
    let out = run(dir.path(), &["simulate", "--config", conf]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 25);
}

#[test]
fn shallow_bounds_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["bounds", "--set", "depth=0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("bounds.json"))["status"], "pass");
}

#[test]
fn zero_drift_solution_is_the_noise() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--paths", "1", "--grid", "9", "--set", "drift=zero", "--set", "x0=0.25"];
    let out = run(dir.path(), &args);
    assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[4] - 0.25 - v[5] - v[6]).abs() < 1e-14, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 81);
}

#[test]
fn zero_drift_density_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["girsanov-check", "--paths", "20", "--grid", "9", "--set", "drift=zero"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("girsanov.json"));
    assert_eq!(report["status"], "pass");
    assert_eq!(report["expected_density"]["mean"], 1.0);
    assert_eq!(report["defect"], 0.0);
}

#[test]
fn help_lists_subcommands() {
    let out = Command::new(env!("CARGO_BIN_EXE_fracsheet")).arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["simulate", "girsanov-check", "bounds", "solve"] {
        assert!(text.contains(sub));
    }
}
