use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fhn_waves_cli::OUTPUT_ROOT_ENV;
use serde_json::Value;

fn fhn_waves(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhn-waves"))
        .args(args)
        .env(OUTPUT_ROOT_ENV, root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn singular_limit_run_writes_constants_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", r#"{"schema_version": 1, "scenario": "singular-limit"}"#);
    let out = fhn_waves(tmp.path(), &["run", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let dir = tmp.path().join("singular-limit");
    let v = read_json(&dir.join("singular_limit.json"));
    let sl = &v["singular_limit"];
    let du = sl["u2"].as_f64().unwrap() - sl["u1"].as_f64().unwrap();
    assert!((du - 0.84f64.sqrt()).abs() < 1e-12);
    assert!((sl["c_star"].as_f64().unwrap() - 0.648).abs() < 1e-3);

    let m = read_json(&dir.join("manifest.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["scenario"], "singular-limit");
    assert_eq!(m["status"], "ok");
    assert_eq!(m["raw_config"]["scenario"], "singular-limit");
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 1);
    let bytes = fs::read(dir.join("singular_limit.json")).unwrap();
    assert_eq!(files[0]["sha256"].as_str().unwrap(), fhn_waves_cli::output::sha256_hex(&bytes));
}

#[test]
fn manifest_effective_config_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "d.json",
        r#"{"schema_version": 1, "scenario": "dispersion-curve", "output_dir": "first"}"#,
    );
    assert!(fhn_waves(tmp.path(), &["run", &cfg]).status.success());
    let m = read_json(&tmp.path().join("first/manifest.json"));

    let mut eff = m["effective_config"].clone();
    eff["output_dir"] = Value::from("second");
    let cfg2 = write_config(tmp.path(), "d2.json", &eff.to_string());
    assert!(fhn_waves(tmp.path(), &["run", &cfg2]).status.success());

    let a = fs::read(tmp.path().join("first/dispersion_curve.csv")).unwrap();
    let b = fs::read(tmp.path().join("second/dispersion_curve.csv")).unwrap();
    assert_eq!(a, b);
    let m2 = read_json(&tmp.path().join("second/manifest.json"));
    assert_eq!(m["files"][0]["sha256"], m2["files"][0]["sha256"]);
}

#[test]
fn small_dns_run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let text = |dir: &str| {
        format!(
            r#"{{"schema_version": 1, "scenario": "dns-perturb", "output_dir": "{dir}", "seed": 7,
                "model": {{"kind": "classic", "a": 0.2, "gamma": 1.0, "epsilon": 0.01}},
                "numerics": {{"n": 257, "repeats": 2, "t_end": 20, "sample_dt": 2, "perturbation": "random"}}}}"#
        )
    };
    for dir in ["a", "b"] {
        let cfg = write_config(tmp.path(), &format!("{dir}.json"), &text(dir));
        let out = fhn_waves(tmp.path(), &["run", &cfg]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["widths.csv", "final_state.csv"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn empty_epsilon_list_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"schema_version": 1, "scenario": "deff-sweep", "numerics": {"epsilons": []}}"#,
    );
    for verb in ["run", "validate"] {
        let out = fhn_waves(tmp.path(), &[verb, &cfg]);
        assert_eq!(out.status.code(), Some(1));
        let rec: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(rec["error"], "config");
    }
    assert!(!tmp.path().join("deff-sweep").exists());
}

#[test]
fn unknown_fields_and_versions_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = write_config(
        tmp.path(),
        "typo.json",
        r#"{"schema_version": 1, "scenario": "singular-limit", "numerics": {"nn": 3}}"#,
    );
    let version = write_config(tmp.path(), "v.json", r#"{"schema_version": 99, "scenario": "singular-limit"}"#);
    for cfg in [typo, version] {
        assert_eq!(fhn_waves(tmp.path(), &["validate", &cfg]).status.code(), Some(1));
    }
}

#[test]
fn runtime_failure_exits_two_with_error_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    // outside the oscillatory regime no wave train exists
    let cfg = write_config(
        tmp.path(),
        "r.json",
        r#"{"schema_version": 1, "scenario": "bloch-spectrum",
            "model": {"kind": "classic", "a": 0.2, "gamma": 1.0, "epsilon": 0.5}}"#,
    );
    let out = fhn_waves(tmp.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let m = read_json(&tmp.path().join("bloch-spectrum/manifest.json"));
    assert_eq!(m["status"], "error");
    assert_eq!(m["error"]["exit_code"], 2);
}

#[test]
fn compare_handles_partial_and_mismatched_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let est = |name: &str, source: &str, eps: f64, d: f64| {
        let p = tmp.path().join(name);
        let v = serde_json::json!({ "estimates": [{ "source": source, "epsilon": eps, "c": 2.0, "d_eff": d }] });
        fs::write(&p, v.to_string()).unwrap();
        p.to_string_lossy().into_owned()
    };
    let bloch = est("bloch.json", "bloch", 1e-3, 0.23);
    let analytic = est("analytic.json", "analytic", 1e-3, 0.25);
    let dns_other = est("dns.json", "dns", 2e-3, 0.3);

    let ok = fhn_waves(tmp.path(), &["compare", &bloch, &analytic]);
    assert_eq!(ok.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&ok.stdout).unwrap();
    let rel = report["comparisons"][0]["relative_discrepancy"].as_f64().unwrap();
    assert!((rel - 0.08).abs() < 1e-12);
    assert_eq!(report["pass"], true);

    assert_eq!(fhn_waves(tmp.path(), &["compare", &bloch]).status.code(), Some(1));
    assert_eq!(fhn_waves(tmp.path(), &["compare", &bloch, &dns_other]).status.code(), Some(1));
}
