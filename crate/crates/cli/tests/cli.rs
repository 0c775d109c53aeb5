use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn model(name: &str) -> String {
    root().join("models").join(name).to_string_lossy().into_owned()
}

fn zrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zrp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn assert_schema(command: &str, value: &Value) {
    let path = root().join("schemas").join(format!("{command}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{command}: {errors:?}");
}

fn fixtures() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(root().join("models"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn gap_on_swap_model() {
    let v = json(&zrp(&["gap", &model("swap2.json")]));
    assert_schema("gap", &v);
    assert!((v["lambda_P"].as_f64().unwrap() - 2.0).abs() < 1e-10);
    assert!((v["lambda_zrp"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn verify_passes_on_every_fixture() {
    for name in fixtures() {
        let out = zrp(&["verify", &model(&name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        let v = json(&out);
        assert_schema("verify", &v);
        assert_eq!(v["pass"], true);
    }
}

#[test]
fn verify_fails_with_exit_4_when_a_property_fails() {
    let out = zrp(&["verify", &model("biased4_sites.json"), "--tol", "0", "--spectral-tol", "0"]);
    assert_eq!(out.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], false);
}

#[test]
fn compare_outputs_both_constants() {
    let v = json(&zrp(&[
        "compare",
        &model("cycle4_linear.toml"),
        "--other",
        &model("cycle4_lazy_linear.json"),
    ]));
    assert_schema("compare", &v);
    assert_eq!(v["agree"], true);
    assert!((v["zrp_constant"].as_f64().unwrap() - 2.0).abs() < 1e-8);
}

#[test]
fn compare_rejects_different_stationary_law() {
    let out = zrp(&[
        "compare",
        &model("cycle4_linear.toml"),
        "--other",
        &model("star4_unit.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stationary law"), "{err}");
    assert!(err.contains("other.P"), "{err}");
}

#[test]
fn bounds_and_mix_match_schemas() {
    for name in fixtures() {
        let v = json(&zrp(&["bounds", &model(&name)]));
        assert_schema("bounds", &v);
        let v = json(&zrp(&["mix", &model(&name)]));
        assert_schema("mix", &v);
        let linf = v["t_mix_linf"].as_f64().unwrap();
        assert!(v["spectral_bound"].as_f64().unwrap() >= linf, "{name}");
    }
    let v = json(&zrp(&["mix", &model("two_state.json"), "--tv"]));
    assert!((v["t_mix_tv"].as_f64().unwrap() - 0.5).abs() < 5e-4);
    assert!(v["t_mix_linf"].is_null());
}

#[test]
fn simulate_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let ev1 = dir.path().join("a.csv");
    let ev4 = dir.path().join("b.csv");
    let base = [
        "simulate",
        &model("biased4_sites.json"),
        "--T",
        "20",
        "--replicas",
        "6",
        "--seed",
        "11",
        "--eta0",
        "0:2,3:1",
    ];
    let mut a = base.to_vec();
    a.extend(["--threads", "1", "--events", ev1.to_str().unwrap()]);
    let mut b = base.to_vec();
    b.extend(["--threads", "4", "--events", ev4.to_str().unwrap()]);
    let (oa, ob) = (zrp(&a), zrp(&b));
    assert_eq!(oa.stdout, ob.stdout);
    assert_eq!(std::fs::read(&ev1).unwrap(), std::fs::read(&ev4).unwrap());
    let v = json(&oa);
    assert_schema("simulate", &v);
    for r in v["replicas"].as_array().unwrap() {
        let total: u64 = r["final_config"].as_array().unwrap().iter().map(|k| k.as_u64().unwrap()).sum();
        assert_eq!(total, 3);
    }
    let log = std::fs::read_to_string(&ev1).unwrap();
    assert!(log.starts_with("replica,time,src,dst\n"));
}

#[test]
fn identical_runs_give_identical_bytes() {
    for cmd in ["gap", "bounds", "mix", "verify"] {
        let a = zrp(&[cmd, &model("path3_affine.json"), "--threads", "2"]);
        let b = zrp(&[cmd, &model("path3_affine.json"), "--threads", "3"]);
        assert_eq!(a.stdout, b.stdout, "{cmd}");
    }
}

#[test]
fn csv_output_uses_plain_decimal_point() {
    let out = zrp(&["gap", &model("swap2.json"), "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,value"));
    let lp: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((lp - 2.0).abs() < 1e-10);
}

#[test]
fn validation_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"n": 2, "m": 2, "P": [[0.5, 0.4], [1, 0]], "rates": {"kind": "unit"}}"#,
    )
    .unwrap();
    let out = zrp(&["gap", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("field `P`"));

    let out = zrp(&["simulate", &model("swap2.json"), "--T", "1", "--eta0", "0:1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta0"));
}

#[test]
fn budget_errors_exit_3() {
    let out = zrp(&["gap", &model("mean_field_table.json"), "--max-states", "4"]);
    assert_eq!(out.status.code(), Some(3));
}
