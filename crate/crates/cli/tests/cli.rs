//! End-to-end runs of the `qcm` binary.

#![allow(clippy::excessive_precision)] // oracle digits kept verbatim

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qcm_cli::output::data_section;
use serde_json::Value;
use tempfile::TempDir;

fn qcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcm"))
        .args(args)
        .output()
        .expect("qcm runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn dir_arg(dir: &TempDir) -> String {
    dir.path().display().to_string()
}

// Reference-scene values from `core/tests/oracles/reference_values.py`.
const REFERENCE_G1: [f64; 3] = [0.21082625811244174, 0.14218440767450252, 0.29610841704598936];
const REFERENCE_G2: [f64; 3] = [0.29304845185887925, 0.43803847089111411, 0.13998085020988373];

#[test]
fn forward_reference_scene_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let out = qcm(&["forward", "--scene", "reference", "--out", &dir_arg(&dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&dir.path().join("measurements.json"));
    let (g1, g2) = (floats(&v["measurements"]["g1"]), floats(&v["measurements"]["g2"]));
    for j in 0..3 {
        assert!((g1[j] - REFERENCE_G1[j]).abs() <= 1e-12 * REFERENCE_G1[j]);
        assert!((g2[j] - REFERENCE_G2[j]).abs() <= 1e-12 * REFERENCE_G2[j]);
    }
    assert_eq!(v["tool"], "qcm");
    assert_eq!(v["detectors"].as_array().unwrap().len(), 3);
}

#[test]
fn forward_colocated_equal_scene() {
    let dir = TempDir::new().unwrap();
    let scene = "x1=0.3,y1=0.3,x2=0.3,y2=0.3,alpha=1";
    let out = qcm(&["forward", "--scene", scene, "--out", &dir_arg(&dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&dir.path().join("measurements.json"));
    assert_eq!(floats(&v["measurements"]["g2"]), vec![0.5; 3]);
}

#[test]
fn missing_scene_field_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = qcm(&["forward", "--scene", "x1=0,y1=0,x2=0.5,y2=0", "--out", &dir_arg(&dir)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("alpha"), "{}", stderr(&out));
    assert!(!dir.path().join("measurements.json").exists());
}

#[test]
fn bad_flag_value_is_a_usage_error() {
    let out = qcm(&["sweep", "--etas", "0.01,0.5", "--scenes", "1", "--trials", "1"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn fit_recovers_reference_scene_from_forward_output() {
    let dir = TempDir::new().unwrap();
    let d = dir_arg(&dir);
    assert_eq!(code(&qcm(&["forward", "--scene", "reference", "--out", &d])), 0);
    let input = dir.path().join("measurements.json").display().to_string();
    let out = qcm(&["fit", "--input", &input, "--out", &d]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = &read_json(&dir.path().join("fit.json"))["result"];
    let p = &r["params"];
    let got = [&p["x1"], &p["y1"], &p["x2"], &p["y2"], &p["alpha"]].map(|v| v.as_f64().unwrap());
    let want = [-0.6300, -0.1276, 0.5146, -0.5573, 0.3617];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-3, "{got:?}");
    }
    assert!(r["chi2"].as_f64().unwrap() < 1e-10);
}

#[test]
fn fit_tolerates_unphysical_correlation() {
    let dir = TempDir::new().unwrap();
    let out = qcm(&[
        "fit",
        "--measurements",
        "g1=0.2,0.15,0.3;g2=0.6,0.55,0.7",
        "--out",
        &dir_arg(&dir),
    ]);
    assert!([0, 3].contains(&code(&out)), "{}", stderr(&out));
    let r = &read_json(&dir.path().join("fit.json"))["result"];
    assert!(r["chi2"].as_f64().unwrap() > 0.0);
}

#[test]
fn repeated_fit_runs_have_identical_data() {
    let dir = TempDir::new().unwrap();
    let d = dir_arg(&dir);
    let args = [
        "fit",
        "--measurements",
        "g1=0.21,0.14,0.3;g2=0.29,0.44,0.14",
        "--seed",
        "5",
        "--out",
        &d,
    ];
    assert_eq!(code(&qcm(&args)), 0);
    let first = fs::read_to_string(dir.path().join("fit.json")).unwrap();
    assert_eq!(code(&qcm(&args)), 0);
    let second = fs::read_to_string(dir.path().join("fit.json")).unwrap();
    assert_eq!(data_section(&first), data_section(&second));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out_dir = blocker.join("sub").display().to_string();
    let out = qcm(&["forward", "--scene", "reference", "--out", &out_dir]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn map_is_normalized_to_the_bright_emitter() {
    let dir = TempDir::new().unwrap();
    let out = qcm(&["map", "--scene", "reference", "--out", &dir_arg(&dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("map.csv")).unwrap();
    assert!(text.contains("# local_maxima_above_10pct: 1\n"));
    let rows: Vec<Vec<f64>> = data_section(&text)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 81 * 81);
    let max = rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    assert!(max > 0.9 && max <= 1.3617, "max {max}");
}

#[test]
fn noiseless_sweep_has_vanishing_precision() {
    let dir = TempDir::new().unwrap();
    let out = qcm(&[
        "sweep",
        "--scenes",
        "3",
        "--etas",
        "0",
        "--trials",
        "11",
        "--alpha-min",
        "0.1",
        "--out",
        &dir_arg(&dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let data = data_section(&text);
    let mut lines = data.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "summed_precision").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let p: f64 = row.split(',').nth(col).unwrap().parse().unwrap();
        assert!(p < 1e-3, "{row}");
    }
    assert!(dir.path().join("histogram.csv").exists());
}

#[test]
fn rerun_from_output_config_reproduces_data() {
    let dir = TempDir::new().unwrap();
    let d = dir_arg(&dir);
    let out = qcm(&[
        "trials",
        "--scene",
        "reference",
        "--trials",
        "12",
        "--eta",
        "0.02",
        "--seed",
        "3",
        "--out",
        &d,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = dir.path().join("trials.csv");
    let first = fs::read_to_string(&csv).unwrap();
    let summary = fs::read_to_string(dir.path().join("precision.json")).unwrap();

    // Flags given alongside --config are overridden by the file.
    let config = csv.display().to_string();
    let out = qcm(&["trials", "--config", &config, "--seed", "999"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(data_section(&first), data_section(&fs::read_to_string(&csv).unwrap()));
    assert_eq!(
        data_section(&summary),
        data_section(&fs::read_to_string(dir.path().join("precision.json")).unwrap())
    );
}

#[test]
fn config_for_another_command_is_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir_arg(&dir);
    assert_eq!(code(&qcm(&["forward", "--scene", "reference", "--out", &d])), 0);
    let config = dir.path().join("measurements.json").display().to_string();
    let out = qcm(&["map", "--config", &config]);
    assert_eq!(code(&out), 2);
}

#[test]
fn json_tables_carry_rows() {
    let dir = TempDir::new().unwrap();
    let out = qcm(&[
        "map",
        "--scene",
        "reference",
        "--extent",
        "0.5",
        "--pitch",
        "0.25",
        "--format",
        "json",
        "--out",
        &dir_arg(&dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_json(&dir.path().join("map.json"));
    assert_eq!(v["rows"].as_array().unwrap().len(), 25);
    assert_eq!(v["config"]["command"], "map");
}
