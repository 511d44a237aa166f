use std::path::Path;
use std::process::{Command, Output};

use qmep::format::InstrumentFile;
use qmep::instrument::{bernoulli, sum};
use qmep::operator::Tolerances;
use serde_json::Value;

const BERNOULLI: &str = "builtin:bernoulli(0.7)";

fn qmep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmep"))
        .args(args)
        .env_remove("QMEP_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn diagnostic(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn validate_reports_bernoulli() {
    let o = qmep(&["validate", BERNOULLI]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["validation"]["valid"], true);
    assert_eq!(v["reversal"]["passed"], true);
}

#[test]
fn invalid_instrument_file_fails_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"dim": 1, "alphabet": ["a"], "kraus": {"a": [[[0.5]]]}}"#).unwrap();
    let o = qmep(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["validation"]["valid"], false);
    assert_eq!(diagnostic(&o)["error"], "failed");
}

#[test]
fn pressure_brackets_half() {
    let o = qmep(&["pressure", BERNOULLI, "--alpha", "0.5", "--T", "1..8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 8);
    let last = &rows[7];
    assert_eq!(last[1], "8");
    let (up, lo): (f64, f64) = (last[3].parse().unwrap(), last[4].parse().unwrap());
    let e = (2.0 * 0.21f64.sqrt()).ln();
    assert!(lo <= e + 1e-12 && e <= up + 1e-12, "[{lo}, {up}] vs {e}");
}

#[test]
fn hypotest_stein_column_trends_to_minus_ep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qmep(&["hypotest", BERNOULLI, "--epsilon", "0.2", "--T", "1..14", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stein = csv_rows(&std::fs::read_to_string(dir.path().join("stein.csv")).unwrap());
    let rates: Vec<f64> = stein.iter().map(|r| r[2].parse().unwrap()).collect();
    let ep = 0.338_919_144_154_881_4;
    assert!((rates[13] + ep).abs() < 0.08);
    assert!((rates[13] + ep).abs() < (rates[0] + ep).abs());
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("hypotest.json")).unwrap()).unwrap();
    for key in ["cT", "chernoff", "stein", "hoeffding"] {
        assert!(!report[key].is_null(), "{key}");
    }
    assert!(dir.path().join("hoeffding.csv").exists());
}

#[test]
fn usage_errors_exit_two() {
    let o = qmep(&["pressure", "no-such-file.json", "--T", "1..4"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(diagnostic(&o)["error"], "usage");
    assert_eq!(qmep(&["pressure", BERNOULLI, "--T", "5..2"]).status.code(), Some(2));
    assert_eq!(qmep(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(qmep(&["validate", "builtin:nope(1)"]).status.code(), Some(2));
    assert_eq!(qmep(&["hypotest", BERNOULLI, "--epsilon", "1.5", "--T", "1..3"]).status.code(), Some(2));
}

#[test]
fn cap_errors_exit_one_with_diagnostic() {
    let o = qmep(&["ep", BERNOULLI, "--T", "1..12", "--cap", "1000"]);
    assert_eq!(o.status.code(), Some(1));
    let d = diagnostic(&o);
    assert_eq!(d["error"], "cap_exceeded");
    assert_eq!(d["cap"], 1000);
}

#[test]
fn sample_streams_json_lines() {
    let o = qmep(&["sample", BERNOULLI, "--T", "6", "--n", "5", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0]["word"].as_array().unwrap().len(), 6);
    assert_eq!(stdout(&o), stdout(&qmep(&["sample", BERNOULLI, "--T", "6", "--n", "5", "--seed", "9"])));
}

#[test]
fn reverse_emits_a_readable_instrument() {
    let o = qmep(&["reverse", BERNOULLI]);
    assert_eq!(o.status.code(), Some(0));
    let f = InstrumentFile::from_json(&stdout(&o)).unwrap();
    let p = f.process(&Tolerances::default()).unwrap();
    let a = p.instrument().map(0).kraus()[0][(0, 0)].norm_sqr();
    assert!((a - 0.3).abs() < 1e-12);
}

#[test]
fn certificates_feed_pressure() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle.json");
    let o = qmep(&["assumptions", "builtin:cycle(3, 0.8)"]);
    assert_eq!(o.status.code(), Some(0));
    std::fs::write(&bundle, &o.stdout).unwrap();
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["d"]["status"], "refuted");
    let with = qmep(&["pressure", "builtin:cycle(3, 0.8)", "--T", "1..4", "--certificates", bundle.to_str().unwrap()]);
    let without = qmep(&["pressure", "builtin:cycle(3, 0.8)", "--T", "1..4"]);
    assert_eq!(with.status.code(), Some(0));
    assert_eq!(stdout(&with), stdout(&without));
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_rejects_over_cap_config_upfront() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "version = 1\ncap = 4096\n[instrument]\nsource = \"builtin:bernoulli(0.7)\"\n[tasks.hypotest]\nepsilon = 0.2\nt_max = 14\n",
    );
    let out = dir.path().join("out");
    let o = qmep(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(diagnostic(&o)["message"].as_str().unwrap().contains("hypotest"));
    assert!(!out.exists());
}

#[test]
fn run_records_task_failures_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    // A disjoint sum has no certified gluing constant, so the rate function
    // cannot be built and the ldp task fails; ep must still run.
    let (p1, p2) = (bernoulli(0.7).unwrap(), bernoulli(0.4).unwrap());
    let joined = sum(&p1, &p2, 0.5, &["a", "b"]).unwrap();
    std::fs::write(dir.path().join("sum.json"), InstrumentFile::from_process(&joined).to_json().unwrap()).unwrap();
    let cfg = write_config(
        dir.path(),
        "version = 1\n[instrument]\nsource = \"sum.json\"\nrho = \"explicit\"\n[tasks.ldp]\ninterval = [-0.1, 0.1]\nt_max = 4\n[tasks.ep]\nt_max = 4\n",
    );
    let out = dir.path().join("out");
    let o = qmep(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let tasks = manifest["tasks"].as_array().unwrap();
    let find = |name: &str| tasks.iter().find(|t| t["name"] == name).unwrap();
    assert_eq!(find("ep")["status"], "ok");
    assert_eq!(find("ldp")["status"], "failed");
    assert_eq!(find("ldp")["error"]["error"], "uncertified_curve");
    assert!(out.join("ep.csv").exists());
}

#[test]
fn disk_cache_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_qmep"))
            .args(["pressure", BERNOULLI, "--T", "1..10"])
            .args(["--out", dir.path().join(out).to_str().unwrap()])
            .env("QMEP_CACHE_DIR", &cache)
            .env("QMEP_WORKERS", "2")
            .status()
            .unwrap()
    };
    assert!(run("a").success());
    assert!(cache.read_dir().unwrap().next().is_some());
    assert!(run("b").success());
    for f in ["pressure.csv", "pressure.json"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap());
    }
}
