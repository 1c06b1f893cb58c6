use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cml_lab::{emit_report, parse_config, run_experiment, ReportFormat};
use cml_lab_core::transfer::import_triplets;

fn cml_lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cml-lab"))
        .args(args)
        .env("CML_LAB_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn validate_accepts_a_minimal_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 1\n");
    let out = cml_lab(&["validate", &cfg], &tmp.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn validate_lists_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 1\nbogus = 2\n[coupling]\nkind = \"diffusive\"\nepsilon = 0.7\n[metric]\ntheta = 1.0\n");
    let out = cml_lab(&["validate", &cfg], &tmp.path().join("out"));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["bogus", "epsilon", "theta"] {
        assert!(err.contains(key), "missing {key} in {err}");
    }
}

#[test]
fn empty_experiment_list_only_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "experiments = []\n");
    let out = cml_lab(&["run", &cfg], &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no experiments requested"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["sections"].as_array().unwrap().len(), 0);
    assert!(report["config"].is_object());
    assert!(!listing(&out_dir).iter().any(|f| f.ends_with(".csv")));
}

#[test]
fn spectral_only_run_writes_one_eigenvalue_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "experiments = [\"spectral\"]\n[operator]\nbins = 8\n");
    let out = cml_lab(&["run", &cfg, "--format", "csv"], &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csvs: Vec<String> = listing(&out_dir).into_iter().filter(|f| f.ends_with(".csv")).collect();
    assert_eq!(csvs, ["spectrum.csv"]);
    let spectrum = fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert!(spectrum.lines().count() > 2);
}

#[test]
fn unwritable_output_dir_fails_before_computing() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = write_config(tmp.path(), "experiments = [\"spectral\"]\n");
    let out = cml_lab(&["run", &cfg], &blocker.join("sub"));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("output directory"));
}

#[test]
fn exported_operator_imports_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[operator]\nbins = 4\n");
    let path = tmp.path().join("op.txt");
    let out = cml_lab(&["export-operator", &cfg, "-o", path.to_str().unwrap()], &tmp.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let op = import_triplets(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(op.dim(), 64);
}

#[test]
fn golden_report_is_reproduced() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let cfg = parse_config(&dir.join("reduced.toml")).unwrap();
    let report = run_experiment(&cfg);
    let tmp = tempfile::tempdir().unwrap();
    emit_report(&report, ReportFormat::Json, tmp.path()).unwrap();
    let produced = fs::read_to_string(tmp.path().join("report.json")).unwrap();
    let golden = dir.join("report.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden, &produced).unwrap();
    }
    let expected = fs::read_to_string(&golden).expect("golden report present");
    assert!(produced == expected, "report.json differs from the golden file");
}
