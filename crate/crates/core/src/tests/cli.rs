use std::fs;
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use super::support::config_path;
use crate::cli::{run, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK};

fn go(cfg: &Path, out: &Path, rest: &[&str]) -> u8 {
    let mut args: Vec<String> = vec!["rendezvous".into(), "--config".into(), cfg.display().to_string(), "--out".into(), out.display().to_string()];
    args.extend(rest.iter().map(|s| s.to_string()));
    run(args)
}

/// Case 1 with textual edits applied, written next to the outputs.
fn edited(dir: &Path, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = fs::read_to_string(config_path("case1.toml")).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir.join("edited.toml");
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn design_writes_outputs_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(go(&config_path("case1.toml"), &a, &["design", "--impulses", "2"]), EXIT_OK);
    assert_eq!(go(&config_path("case1.toml"), &b, &["design", "--impulses", "2"]), EXIT_OK);
    for f in ["design_result.json", "impulses.json", "trajectory.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let doc = json(&a.join("design_result.json"));
    assert_eq!(doc["feasible"], true);
    assert_eq!(doc["times_s"][1], 7200.0);
    let imp = json(&a.join("impulses.json"));
    assert_eq!(imp.as_array().unwrap().len(), 2);
    let rows = csv_rows(&a.join("trajectory.csv"));
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[0][1], "0");
    assert_eq!(rows.last().unwrap()[0], "7200");
}

#[test]
fn design_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(dir.path(), &[("j_max_mps = 30.0", "j_max_mps = 0.0")]);
    assert_eq!(go(&cfg, dir.path(), &["design", "--impulses", "2"]), EXIT_INFEASIBLE);
    assert_eq!(json(&dir.path().join("design_result.json"))["feasible"], false);
    let cfg = edited(dir.path(), &[("j_max_mps = 30.0", "j_max_mps = 30.0\njmax = 1.0")]);
    assert_eq!(go(&cfg, dir.path(), &["design", "--impulses", "2"]), EXIT_ERROR);
    assert_eq!(go(&dir.path().join("missing.toml"), dir.path(), &["design", "--impulses", "2"]), EXIT_ERROR);
}

#[test]
fn covariance_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("case1.toml");
    assert_eq!(go(&cfg, dir.path(), &["covariance", "--t-end", "0", "--step", "10"]), EXIT_OK);
    let rows = csv_rows(&dir.path().join("covariance.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1..], ["300".to_string(), "3".to_string()]);

    assert_eq!(go(&cfg, dir.path(), &["covariance", "--t-end", "7200", "--step", "60", "--normalized"]), EXIT_OK);
    let rows = csv_rows(&dir.path().join("covariance.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], "7200");
    for k in [3, 4] {
        let v: f64 = last[k].parse().unwrap();
        assert!((v - 1.0).abs() < 0.01, "column {k}: {v}");
    }
    let ss = json(&dir.path().join("steady_state.json"));
    let tr = ss["trace_pr_m2"].as_f64().unwrap();
    assert!(tr > 0.0 && tr < 300.0);
    assert!(ss["are_residual_norm"].as_f64().unwrap() <= 1e-9 * ss["are_scale"].as_f64().unwrap());
}

#[test]
fn contour_ranges() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("case1.toml");
    assert_eq!(go(&cfg, dir.path(), &["contours", "--plane", "t1-dt12", "--t1", "10:0:1", "--dt12", "100:200:50"]), EXIT_ERROR);
    assert_eq!(go(&cfg, dir.path(), &["contours", "--plane", "t1-dt12", "--t1", "0:1000:500", "--dt12", "1000:6000:2500"]), EXIT_OK);
    for f in ["contour_effort.csv", "contour_max_impulse.csv", "contour_corridor.csv"] {
        assert_eq!(csv_rows(&dir.path().join(f)).len(), 9, "{f}");
    }
    let flags = csv_rows(&dir.path().join("contour_corridor.csv"));
    assert!(flags.iter().filter(|r| r[0] == "1000").all(|r| r[3] == "ae"));

    let args = ["contours", "--plane", "r2", "--times", "701.8,6380.9,7200", "--x", "-1392:-1390:0.1", "--y", "-1006:-1004:0.1"];
    let cfg2 = config_path("case2.toml");
    assert_eq!(go(&cfg2, dir.path(), &args), EXIT_OK);
    let pts = csv_rows(&dir.path().join("r2_region.csv"));
    assert_eq!(pts.len(), 21 * 21);
    assert!(pts.iter().any(|r| r[5] == "true"));
}

#[test]
fn check_round_trip() {
    let dir = TempDir::new().unwrap();
    let (c1, c2) = (config_path("case1.toml"), config_path("case2.toml"));
    assert_eq!(go(&c1, dir.path(), &["design", "--impulses", "2"]), EXIT_OK);
    let result = dir.path().join("design_result.json");
    let plan_arg = result.display().to_string();
    assert_eq!(go(&c1, dir.path(), &["check", &plan_arg]), EXIT_OK);
    let rep = json(&dir.path().join("check_report.json"));
    assert_eq!(rep["report"]["overall"], true);

    assert_eq!(go(&c2, dir.path(), &["check", &plan_arg]), EXIT_INFEASIBLE);
    let rep = json(&dir.path().join("check_report.json"));
    assert_eq!(rep["report"]["impulse_ok"], false);
    assert_eq!(rep["closure_ok"], true);

    // A bare plan with its first impulse nudged no longer reaches the target.
    let mut plan = json(&result)["plan"].clone();
    let dv = plan["impulses_mps"][0][0].as_f64().unwrap();
    plan["impulses_mps"][0][0] = (dv + 0.01).into();
    let tampered = dir.path().join("tampered.json");
    fs::write(&tampered, serde_json::to_string(&plan).unwrap()).unwrap();
    assert_eq!(go(&c1, dir.path(), &["check", &tampered.display().to_string()]), EXIT_INFEASIBLE);
    let rep = json(&dir.path().join("check_report.json"));
    assert_eq!(rep["closure_ok"], false);
    assert!(rep["closure_defect_m"].as_f64().unwrap() > 1.0);
}
