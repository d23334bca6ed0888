//! Command-line behaviour: outputs, overrides and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn pcfpair(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcfpair"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn dispersion_prints_zero_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = pcfpair(&["dispersion"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let line = stdout(&a).lines().next().unwrap().to_string();
    let l0: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((l0 - 715.0).abs() <= 5.0, "{line}");
    let first = std::fs::read(dir.path().join("dispersion.csv")).unwrap();
    assert!(first.starts_with(b"wavelength_nm,n_eff,beta_rad_per_m,beta2_s2_per_m\n"));
    pcfpair(&["dispersion"], dir.path());
    assert_eq!(std::fs::read(dir.path().join("dispersion.csv")).unwrap(), first);
}

#[test]
fn inverted_range_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcfpair(&["dispersion", "--range", "900", "500"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn phasematch_reports_signal_and_checks_energy() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcfpair(&["phasematch", "--points", "5", "--check-energy", "--svg"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let signal: f64 = text.split("signal ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!((signal - 587.0).abs() <= 10.0, "{text}");
    assert!(text.contains("energy conservation: 6 rows pass"), "{text}");
    assert!(dir.path().join("phasematch.svg").exists());
    let json = pcfpair(&["phasematch", "--points", "3", "--format", "json"], dir.path());
    assert_eq!(json.status.code(), Some(0));
    let rows: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("phasematch.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 3);
}

#[test]
fn anomalous_pump_fails_numerically() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcfpair(&["phasematch", "--diameter", "2.0", "--pump", "720", "--points", "3"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("anomalous"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_one_record_per_power_and_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--duration", "0.002", "--seed", "5", "--events"];
    assert_eq!(pcfpair(&args, a.path()).status.code(), Some(0));
    assert_eq!(pcfpair(&args, b.path()).status.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.iter().filter(|n| n.ends_with("uW.json")).count(), 4);
    assert_eq!(names.iter().filter(|n| n.ends_with("_histogram.csv")).count(), 4);
    assert_eq!(names.iter().filter(|n| n.ends_with("_events.jsonl")).count(), 4);
    for n in &names {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap(), "{n}");
    }
    let rec: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("run3_540uW.json")).unwrap()).unwrap();
    assert_eq!(rec["config"]["rng_seed"], 8);
    for key in ["N_s", "N_i", "C_raw", "C_b", "duration_s", "raw_counts"] {
        assert!(rec.get(key).is_some(), "{key}");
    }
}

#[test]
fn zero_duration_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcfpair(&["simulate", "--duration", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_reference_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("table.csv");
    std::fs::write(
        &csv,
        "power_mW,N_s,N_i,C_raw,C_b\n0.17,3.4e5,1.9e5,3.9e4,1e3\n0.245,6.8e5,3.6e5,8e4,2e3\n\
         0.38,1.57e6,8.2e5,1.8e5,1e4\n0.54,2.89e6,1.52e6,3.6e5,4e4\n",
    )
    .unwrap();
    let o = pcfpair(&["analyze", csv.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("20.0 %") && text.contains("21.1 %"), "{text}");
    for f in ["table1_report.txt", "table1_report.json", "fig7.csv", "fig7.svg", "projection.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let proj: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("projection.json")).unwrap()).unwrap();
    assert!(proj["pair_rate"].as_f64().unwrap() >= 8.0e4);
}

#[test]
fn analyze_simulated_records_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pcfpair(&["simulate", "--duration", "0.005", "--powers", "0.3,0.5"], dir.path()).status.code(), Some(0));
    let inputs: Vec<String> = ["run0_300uW.json", "run1_500uW.json"]
        .iter()
        .map(|n| dir.path().join(n).to_string_lossy().into_owned())
        .collect();
    let out = dir.path().join("report");
    let mut args = vec!["analyze"];
    args.extend(inputs.iter().map(String::as_str));
    let o = pcfpair(&args, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("round trip 0.300 mW"));
    let trips: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("round_trip.json")).unwrap()).unwrap();
    assert_eq!(trips.as_array().unwrap().len(), 2);
}

#[test]
fn malformed_record_names_file_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.json");
    std::fs::write(&bad, r#"{"duration_s": 1, "N_s": 1e5, "N_i": 1e5, "C_raw": "lots", "C_b": 0}"#).unwrap();
    let o = pcfpair(&["analyze", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("broken.json") && err.contains("C_raw"), "{err}");

    let csv = dir.path().join("broken.csv");
    std::fs::write(&csv, "power_mW,N_s,N_i,C_raw,C_b\n0.17,abc,1.9e5,3.9e4,1e3\n").unwrap();
    let o = pcfpair(&["analyze", csv.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("broken.csv") && err.contains("N_s"), "{err}");
}

#[test]
fn empty_analyze_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pcfpair(&["analyze"], dir.path()).status.code(), Some(2));
}

#[test]
fn strict_config_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"fiber": {"core_diameter_um": 1.99, "colour": "blue"}}"#).unwrap();
    let o = pcfpair(&["--config", cfg.to_str().unwrap(), "reproduce-paper"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn config_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 1, "pump": {"power_ladder_mw": [0.3]}, "simulation": {"duration_s": 0.002}}"#)
        .unwrap();
    let o = pcfpair(&["--config", cfg.to_str().unwrap(), "--seed", "77", "simulate"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run0_300uW.json")).unwrap()).unwrap();
    assert_eq!(rec["config"]["rng_seed"], 77);
    assert_eq!(rec["duration_s"], 0.002);
}
