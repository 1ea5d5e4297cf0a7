use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use wbcp::experiments::ingest_csv;
use wbcp::weights::{kernel_profile, KernelConfig};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/spatial_200.csv");

fn wbcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbcp"))
        .args(args)
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn generate_defaults_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(wbcp(&["generate", "--out", path(&a)]).status.success());
    assert!(wbcp(&["generate", "--out", path(&b)]).status.success());
    let csv = std::fs::read_to_string(a.join("synthetic.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3001);
    assert_eq!(
        csv,
        std::fs::read_to_string(b.join("synthetic.csv")).unwrap()
    );
    let meta = json(a.join("meta.json"));
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["ell"], 2.0);
}

#[test]
fn longer_length_scale_raises_morans_i() {
    let tmp = tempfile::tempdir().unwrap();
    let mut values = Vec::new();
    for ell in ["0.5", "16"] {
        let out = tmp.path().join(ell);
        assert!(
            wbcp(&["generate", "--n", "800", "--ell", ell, "--out", path(&out)])
                .status
                .success()
        );
        values.push(json(out.join("meta.json"))["morans_i"].as_f64().unwrap());
    }
    assert!(values[0] < values[1], "{values:?}");
}

#[test]
fn experiment_writes_a_six_row_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wbcp(&[
        "experiment",
        "--input",
        DATA,
        "--variants",
        "all",
        "--alpha",
        "0.1",
        "--beta",
        "0.9",
        "--mc",
        "1000",
        "--out",
        path(tmp.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next(),
        Some("method,coverage,mean_width,mean_neff,mean_sigma_post")
    );
    assert_eq!(lines.count(), 6);
}

#[test]
fn geographic_method_without_locations_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("plain.csv");
    std::fs::write(&csv, "id,score,split\n1,0.5,cal\n2,1.5,cal\n3,0.7,test\n").unwrap();
    let out = wbcp(&[
        "experiment",
        "--input",
        path(&csv),
        "--variants",
        "GeoBCP",
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no location"));
    let ok = wbcp(&[
        "experiment",
        "--input",
        path(&csv),
        "--variants",
        "StandardCP,BQCP",
        "--out",
        path(tmp.path()),
    ]);
    assert!(ok.status.success());
}

#[test]
fn malformed_input_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    std::fs::write(&csv, "id,score,colour\n1,0.5,red\n").unwrap();
    let out = wbcp(&[
        "experiment",
        "--input",
        path(&csv),
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let missing = wbcp(&["experiment", "--input", "/nonexistent.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(
        wbcp(&["experiment", "--alpha", "1.5"]).status.code(),
        Some(2)
    );
    assert_eq!(wbcp(&["validate", "--threads", "0"]).status.code(), Some(2));
}

#[test]
fn predict_reports_samples_levels_and_neff() {
    let out = wbcp(&[
        "predict",
        "--input",
        DATA,
        "--point",
        "5,5",
        "--mc",
        "250",
        "--emit-samples",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = &v["points"][0];
    assert_eq!(p["samples"].as_array().unwrap().len(), 250);
    assert_eq!(p["lambda_hpd"].as_array().unwrap().len(), 6);
    let cal = ingest_csv(DATA).unwrap().calibration;
    let neff = kernel_profile(
        [5.0, 5.0],
        &cal.locations().unwrap(),
        &KernelConfig::fixed(1.0),
    )
    .unwrap()
    .neff();
    assert_eq!(p["neff"].as_f64().unwrap(), neff);
    assert!(p["lower"].is_null() && p["interval"]["lower"].as_f64().unwrap() < 0.0);
}

#[test]
fn predict_reads_point_files() {
    let tmp = tempfile::tempdir().unwrap();
    let pts = tmp.path().join("points.csv");
    std::fs::write(&pts, "id,x,y,y_hat\n7,3,3,1.0\n8,15,15,-2\n").unwrap();
    let out = wbcp(&[
        "predict",
        "--input",
        DATA,
        "--point-file",
        path(&pts),
        "--method",
        "AdaGeoCP",
        "--out",
        path(tmp.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(tmp.path().join("prediction.json"));
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[1]["id"], 8);
    let half = points[1]["threshold"].as_f64().unwrap();
    assert_eq!(
        points[1]["interval"]["upper"].as_f64().unwrap(),
        -2.0 + half
    );
    assert!(points[0]["sigma_post"].is_null());
}

#[test]
fn validate_only_runs_one_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wbcp(&["validate", "--only", "limits", "--out", path(tmp.path())]);
    let report = json(tmp.path().join("validation.json"));
    assert_eq!(report["checks"].as_array().unwrap().len(), 1);
    assert_eq!(report["checks"][0]["name"], "limits");
    assert_eq!(
        out.status.code(),
        Some(if report["pass"] == true { 0 } else { 1 })
    );
}

#[test]
fn full_suite_has_seven_checks_and_exit_code_follows_outcome() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wbcp(&["validate", "--out", path(tmp.path())]);
    let report = json(tmp.path().join("validation.json"));
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 7);
    let all = checks.iter().all(|c| c["pass"] == true);
    assert_eq!(report["pass"], all);
    assert_eq!(out.status.code(), Some(if all { 0 } else { 1 }));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.contains("PASS") || l.contains("FAIL"))
            .count(),
        7
    );
}

#[test]
fn config_files_fill_unset_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"variants": ["StandardCP", "GeoCP"], "alpha": 0.2, "input": "ignored.csv"}"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = wbcp(&[
        "experiment",
        "--config",
        path(&cfg),
        "--input",
        DATA,
        "--out",
        path(&out_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json(out_dir.join("summary.json"));
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);
    assert_eq!(summary["config"]["alpha"], 0.2);

    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "alpha = 0.2\nsmoothing = 3\n").unwrap();
    let out = wbcp(&["experiment", "--config", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("smoothing"));
}

#[test]
fn help_lists_every_flag() {
    let out = wbcp(&["experiment", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--config",
        "--seed",
        "--threads",
        "--out",
        "--input",
        "--variants",
        "--alpha",
        "--beta",
        "--mc",
        "--ell",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
}
