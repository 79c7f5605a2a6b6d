use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use poscorr_cli::{load_config, RunManifest};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_poscorr");

fn preset_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/configs").join(format!("{name}.toml"))
}

fn poscorr(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|row| row.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn preset_file_loads_with_measured_geometry() {
    let cfg = load_config(&preset_path("fig1-interferometer")).unwrap();
    assert_eq!(cfg.lambda_p_nm, 405.0);
    assert_eq!(cfg.pump_waist_um, 150.0);
    assert_eq!(cfg.collection_waist_um, 75.0);
}

#[test]
fn load_config_names_bad_field_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(preset_path("fig2-compact")).unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, text.replace("signal = 0.4", "signal = 1.2")).unwrap();
    let err = load_config(&bad).unwrap_err();
    assert_eq!(err.field(), Some("eta_detector.signal"));
    assert!(load_config(&dir.path().join("missing.toml")).is_err());

    let cfg = load_config(&preset_path("fig2-compact")).unwrap();
    let again = dir.path().join("again.toml");
    fs::write(&again, cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(load_config(&again).unwrap(), cfg);
}

#[test]
fn simulate_compact_preset_reports_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let out = poscorr(&["simulate", "--preset", "fig2-compact"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let state = read_json(&dir.path().join("state.json"));
    let f = state["fidelity"].as_f64().unwrap();
    assert!((f - 0.991).abs() < 0.002, "{f}");
    assert_eq!(state["rho"]["basis"], "HH,HV,VH,VV");
    let manifest: RunManifest = serde_json::from_value(read_json(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest.files, ["state.json"]);
    assert_eq!(manifest.subcommand, "simulate");
    assert_eq!(manifest.config_digest.len(), 64);
}

#[test]
fn psi_delta_l_scan_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let out = poscorr(&["delta-l-scan", "--preset", "psi-2f", "--from", "0", "--to", "100"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("delta_l_scan.csv"));
    assert_eq!(header, ["delta_l_um", "visibility", "fidelity", "concurrence"]);
    let v: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(v.len(), 11);
    assert!(v.windows(2).all(|w| w[1] <= w[0]), "{v:?}");
    assert!(v[2] >= 0.9 && v[10] <= 0.5);
}

#[test]
fn correlate_columns_and_visibility() {
    let dir = tempfile::tempdir().unwrap();
    let out = poscorr(&["correlate", "--preset", "fig1-interferometer", "--seed", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("correlation.csv"));
    assert_eq!(
        header,
        ["basis", "signal_angle_deg", "idler_angle_deg", "probability", "coincidences", "singles_s", "singles_i"]
    );
    assert_eq!(rows.len(), 4 * 18);
    let bytes = fs::read(dir.path().join("correlation.csv")).unwrap();
    assert!(!bytes.contains(&b'\r'));
    let summary = read_json(&dir.path().join("visibility.json"));
    let v = summary["mean_visibility_expected"].as_f64().unwrap();
    assert!((v - 0.995).abs() < 0.003);
    assert_eq!(summary["fidelity_estimates"]["is_estimate"], true);
}

#[test]
fn tomography_reads_back_its_own_counts() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("sim");
    let out = poscorr(&["tomography", "--preset", "fig2-compact", "--seed", "9"], &first);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let counts = first.join("counts.csv");
    let (header, rows) = read_csv(&counts);
    assert_eq!(header, ["setting_s", "setting_i", "singles_s", "singles_i", "coincidences", "integration_s"]);
    assert_eq!(rows.len(), 36);

    let second = dir.path().join("fit");
    let out = poscorr(&["tomography", "--counts", counts.to_str().unwrap()], &second);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_json(&first.join("tomography.json"));
    let b = read_json(&second.join("tomography.json"));
    assert_eq!(a["real"], b["real"]);
    assert_eq!(a["metrics"]["fidelity"], b["metrics"]["fidelity"]);
    let f = a["metrics"]["fidelity"].as_f64().unwrap();
    assert!((f - 0.991).abs() < 0.004, "{f}");
}

#[test]
fn rates_summary_has_chain_and_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = poscorr(&["rates", "--preset", "fig1-interferometer"], dir.path());
    assert!(out.status.success());
    let r = read_json(&dir.path().join("rates.json"));
    assert_eq!(r["expected_pair_rate"].as_f64().unwrap(), 260000.0);
    assert_eq!(r["klyshko_expected"]["signal"].as_f64().unwrap(), 0.2);
    assert_eq!(r["klyshko_expected"]["idler"].as_f64().unwrap(), 0.16);
}

#[test]
fn phase_scan_is_relative_to_centre() {
    let dir = tempfile::tempdir().unwrap();
    let out = poscorr(&["phase-scan", "--preset", "fig2-compact", "--points", "3", "--from", "787", "--to", "797"], dir.path());
    assert!(out.status.success());
    let (header, rows) = read_csv(&dir.path().join("phase_scan.csv"));
    assert_eq!(header, ["lambda_p_nm", "lambda_s_nm", "phase_rad"]);
    let phase: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!((phase[0] - 0.05169).abs() < 1e-5);
    assert_eq!(phase[1], 0.0);
    assert!((phase[2] + 0.03835).abs() < 1e-5);
}

#[test]
fn failures_write_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(preset_path("fig1-interferometer")).unwrap();
    fs::write(&bad, text.replace("x1 = 0.4", "x1 = 1.5")).unwrap();
    let out_dir = dir.path().join("out");
    let out = poscorr(&["simulate", "--config", bad.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(2));
    let err = read_json(&out_dir.join("error.json"));
    assert_eq!(err["error"]["kind"], "invalid-config");
    assert_eq!(err["error"]["field"], "eta_coupling.x1");
    assert!(!out_dir.join("manifest.json").exists());

    let out = poscorr(&["simulate", "--preset", "nope"], &out_dir);
    assert!(!out.status.success());
    let out = poscorr(&["simulate"], &out_dir);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(read_json(&out_dir.join("error.json"))["error"]["kind"], "usage");
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(preset_path("psi-2f")).unwrap();
    fs::write(&bad, text.replace("pump_power_mw = 1.0", "pump_power_mw = 1.0\npump_powr = 3.0")).unwrap();
    let err = load_config(&bad).unwrap_err();
    assert!(err.to_string().contains("pump_powr"), "{err}");
}
