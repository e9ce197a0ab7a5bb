use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dnls_core::harness::parse_config;

fn dnls(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnls")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
name = "small"
[grid]
lengths = [1.0]
counts = [24]
[equation]
m = 0.5
ray_re = 1.0
[initial]
kind = "sine"
amplitude = 1.0
[time]
dt = 0.002
steps = 40
[output]
dir = "run"
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn presets_list_and_show() {
    let dir = tempfile::tempdir().unwrap();
    let o = dnls(&["presets"], dir.path());
    assert_eq!(code(&o), 0);
    for name in ["mass-identity-1d", "extinction-1d", "decay-2d", "decay-3d", "contraction-pair", "smallness-1d"] {
        assert!(stdout(&o).contains(name), "{name} missing");
    }
    let o = dnls(&["presets", "--show", "extinction-1d"], dir.path());
    assert_eq!(code(&o), 0);
    let cfg = parse_config(&stdout(&o)).unwrap();
    assert_eq!(cfg.name, "extinction-1d");
    assert_eq!(code(&dnls(&["presets", "--show", "nope"], dir.path())), 1);
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{SMALL}[checks]\nlist = [\"mass_identity\", \"apriori\"]\n"));
    let o = dnls(&["run", &cfg], dir.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS mass_identity"));
    assert!(stdout(&o).contains("InD"));
    for f in ["ledger.csv", "report.json", "summary.txt", "envelope.csv"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let o = dnls(&["run", &cfg, "--out", "elsewhere", "--json"], dir.path());
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["exit_code"], 0);
    assert!(dir.path().join("elsewhere/ledger.csv").exists());
}

#[test]
fn ledgers_are_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("kind = \"sine\"", "kind = \"random\"")
        .replace("name = \"small\"", "name = \"small\"\nseed = 99");
    let cfg = write_config(dir.path(), "c.toml", &text);
    assert_eq!(code(&dnls(&["run", &cfg, "--out", "a"], dir.path())), 0);
    assert_eq!(code(&dnls(&["run", &cfg, "--out", "b"], dir.path())), 0);
    let a = fs::read(dir.path().join("a/ledger.csv")).unwrap();
    let b = fs::read(dir.path().join("b/ledger.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let bad_a = write_config(dir.path(), "bad_a.toml", &SMALL.replace("ray_re = 1.0", "a_re = 1.0\na_im = -1.0"));
    let o = dnls(&["run", &bad_a], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("outside C(m)"), "{}", stderr(&o));

    let missing = write_config(dir.path(), "missing.toml", &SMALL.replace("dt = 0.002", ""));
    let o = dnls(&["run", &missing], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("time.dt"));

    assert_eq!(code(&dnls(&["run", "does-not-exist.toml"], dir.path())), 1);
    assert_eq!(code(&dnls(&["run", "--preset", "nope"], dir.path())), 1);
    assert_eq!(code(&dnls(&["frobnicate"], dir.path())), 1);

    let solver = write_config(dir.path(), "solver.toml", &format!("{SMALL}[solver]\ntol = 1e-300\nmax_iter = 2\n"));
    let o = dnls(&["run", &solver], dir.path());
    assert_eq!(code(&o), 2, "{}", stdout(&o));

    let check = write_config(dir.path(), "check.toml", &format!("{SMALL}[checks]\nlist = [\"extinction\"]\n"));
    let o = dnls(&["run", &check], dir.path());
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("FAIL extinction"));
}

#[test]
fn check_coefficient_classifies() {
    let dir = tempfile::tempdir().unwrap();
    let o = dnls(&["check-coefficient", "--m", "0.5", "--re", "1.0"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("D(m)"));
    let o = dnls(&["check-coefficient", "--m", "0.5", "--re", "1.0", "--im", "2.0", "--json"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["classification"], "InCOnly");
    assert_eq!(code(&dnls(&["check-coefficient", "--m", "0.5", "--re", "1.0", "--im", "0.1"], dir.path())), 3);
    assert_eq!(code(&dnls(&["check-coefficient", "--m", "1.5", "--re", "1.0"], dir.path())), 1);
}

#[test]
fn envelope_calculator_and_ledger_modes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dnls(&["envelope", "--y0", "1", "--alpha", "1", "--delta", "0.75", "--points", "5"], dir.path());
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("t,y_env,y_floor,y_ledger"));
    assert_eq!(lines.count(), 5);
    // y0^{1-δ} / (2α(1-δ)) = 2
    assert!(stderr(&o).contains("extinction time 2"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "c.toml", SMALL);
    assert_eq!(code(&dnls(&["run", &cfg], dir.path())), 0);
    let o = dnls(&["envelope", "run/ledger.csv", "--config", &cfg, "--out", "env.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let env = fs::read_to_string(dir.path().join("env.csv")).unwrap();
    assert!(env.starts_with("t,y_env,y_floor,y_ledger"));
    assert_eq!(env.lines().count(), 42);
    assert_eq!(code(&dnls(&["envelope"], dir.path())), 1);
}

#[test]
fn sweep_writes_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &format!("{SMALL}[checks]\nlist = [\"mass_identity\"]\n"));
    let o = dnls(&["sweep", &cfg, "--m", "0.4,0.6", "--dt", "0.002,0.001", "--out", "sw"], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert!(csv.starts_with("point,m,re,dt,n,exit_code,t_num,fitted_rate,max_identity_residual,order"));
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("sw/point_003/report.json").exists());

    let o = dnls(&["sweep", &cfg, "--m", "0.5,2.0", "--out", "sw2"], dir.path());
    assert_eq!(code(&o), 1);
    let csv = fs::read_to_string(dir.path().join("sw2/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
