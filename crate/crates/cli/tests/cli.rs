use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use dgl_cli::config::{parse_config, RunConfig};
use dgl_cli::output::to_json_bytes;
use dgl_cli::{generated_config_schema, CONFIG_SCHEMA, REPORT_SCHEMA};
use serde_json::Value;
use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn dgl(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dgl"))
        .args(args)
        .env_remove("DGL_OUT_DIR")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "run",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let (code, _, err) = dgl(&args);
    if code != 0 {
        eprintln!("{err}");
    }
    code
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

const CLASSIFY: &str = r#"{
  "model": {"alpha": 0, "beta": 0, "delta": 3, "gamma": 0, "mu": 1},
  "forcing": {"kind": "single_site", "target_norm2": 0.1},
  "experiment": {"classify": {}}
}"#;

const CLOSENESS: &str = r#"{"model": {"delta": 2}, "experiment": {"closeness": {}}}"#;

const SAMPLE_CONFIGS: &[&str] = &[
    CLASSIFY,
    CLOSENESS,
    r#"{"experiment": {"simulate": {"horizon": 1, "initial": {"scaled_unit": {"norm2": 0.5, "site": 2}}, "snapshot_every": 5}}}"#,
    r#"{"model": {"delta": 3}, "forcing": {"target_norm2": 0.01}, "experiment": {"congruence": {"epsilon_grid": [0.2, 0.1]}}}"#,
    r#"{"forcing": {"target_norm2": 0.5}, "experiment": {"tail": {"k_grid": [8, 2, 2, 32]}}}"#,
    r#"{"model": {"delta": 3}, "forcing": {"target_norm2": 0.1}, "experiment": {"regime_verify": {"local_gronwall_chi0": 4}}}"#,
    r#"{"seed": 7, "output": {"formats": ["dat", "csv", "dat"]}, "experiment": {"identity_check": {"samples": 10}}}"#,
];

#[test]
fn shipped_config_schema_is_current() {
    assert_eq!(CONFIG_SCHEMA, generated_config_schema());
    let (code, out, _) = dgl(&["schema"]);
    assert_eq!(code, 0);
    assert_eq!(out, CONFIG_SCHEMA);
}

#[test]
fn version_command() {
    let (code, out, _) = dgl(&["version"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), format!("dgl {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn config_round_trip() {
    for text in SAMPLE_CONFIGS {
        let mut cfg = parse_config(text).unwrap();
        cfg.normalize();
        cfg.validate().unwrap();
        let bytes = to_json_bytes(&cfg);
        let mut again: RunConfig = parse_config(std::str::from_utf8(&bytes).unwrap()).unwrap();
        again.normalize();
        assert_eq!(again, cfg, "{text}");
        assert_eq!(to_json_bytes(&again), bytes);
    }
}

#[test]
fn configs_checked_against_published_schema() {
    let schema: Value = serde_json::from_str(CONFIG_SCHEMA).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    for text in SAMPLE_CONFIGS {
        let inst: Value = serde_json::from_str(text).unwrap();
        assert!(v.is_valid(&inst), "{text}");
    }
    for bad in [
        r#"{"model": {"delta": "two"}, "experiment": {"classify": {}}}"#,
        r#"{"model": {"delt": 2}, "experiment": {"classify": {}}}"#,
        r#"{"experiment": {"bogus": {}}}"#,
        r#"{"model": {}}"#,
    ] {
        let inst: Value = serde_json::from_str(bad).unwrap();
        assert!(!v.is_valid(&inst), "{bad}");
        assert!(parse_config(bad).is_err(), "{bad}");
    }
}

#[test]
fn wrong_type_exits_2_and_names_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"model": {"delta": "two"}, "experiment": {"classify": {}}}"#,
    );
    let out = tmp.path().join("out");
    let (code, _, err) = dgl(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("model.delta"), "{err}");
    let diag = read_json(&out.join("diagnostic.json"));
    assert_eq!(diag["key"], "model.delta");
    assert_eq!(diag["exit_code"], 2);
}

#[test]
fn out_of_range_value_exits_2_and_names_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"experiment": {"tail": {"xi": -1}}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 2);
    assert_eq!(
        read_json(&out.join("diagnostic.json"))["key"],
        "experiment.tail.xi"
    );
}

#[test]
fn missing_config_exits_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&tmp.path().join("nope.json"), &out, &[]), 2);
}

#[test]
fn classify_example() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", CLASSIFY);
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 0);
    let report = read_json(&out.join("report.json"));
    let r = &report["results"];
    assert_eq!(r["case"], "SupercriticalAnnulus");
    assert!((r["r2"].as_f64().unwrap() - 0.025658).abs() < 1e-6);
    assert!((r["r1"].as_f64().unwrap() - 0.974342).abs() < 1e-6);
    assert_eq!(
        report["config_echo"]["forcing"]["target_norm2"].as_f64(),
        Some(0.1)
    );
    assert!(!out.join("diagnostic.json").exists());
}

#[test]
fn closeness_defaults_example() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", CLOSENESS);
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 0);
    let csv = std::fs::read_to_string(out.join("closeness_series_0.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,dist_l2,dist_linf,bound"));
    assert_eq!(csv.lines().count(), 502);
    let r = read_json(&out.join("results.json"));
    assert_eq!(r["pass"], true);
    assert_eq!(r["cases"][0]["pass"], true);
    let echo = &read_json(&out.join("report.json"))["config_echo"]["experiment"]["closeness"];
    assert_eq!(echo["horizon"].as_f64(), Some(50.0));
    assert_eq!(echo["family"]["c0"].as_f64(), Some(1.0));
}

#[test]
fn reports_validate_and_csvs_have_headers() {
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let tmp = TempDir::new().unwrap();
    for (i, text) in SAMPLE_CONFIGS.iter().enumerate() {
        // Shorter runs for the trajectory studies.
        let mut cfg: Value = serde_json::from_str(text).unwrap();
        cfg["lattice"] = serde_json::json!({"window_half_width": 64});
        let cfg_path = write_config(tmp.path(), &format!("c{i}.json"), &cfg.to_string());
        let out = tmp.path().join(format!("out{i}"));
        let code = run(&cfg_path, &out, &[]);
        assert!(code == 0 || code == 1, "{text}: exit {code}");
        let report = read_json(&out.join("report.json"));
        assert!(v.is_valid(&report), "{text}");
        assert_eq!(report["results"], read_json(&out.join("results.json")));
        for (name, bytes) in dir_files(&out) {
            let text = String::from_utf8(bytes).unwrap();
            let first = text.lines().next().unwrap_or("");
            if name.ends_with(".csv") {
                assert!(
                    !first.is_empty()
                        && first.chars().all(|c| c.is_ascii_lowercase()
                            || c == '_'
                            || c == ','
                            || c.is_ascii_digit()),
                    "{name}: {first}"
                );
                let width = first.split(',').count();
                assert!(
                    text.lines().all(|l| l.split(',').count() == width),
                    "{name}"
                );
            }
            if name.ends_with(".dat") {
                assert!(first.starts_with("# "), "{name}");
            }
        }
    }
}

#[test]
fn results_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"model": {"delta": 2, "alpha": 0.3, "beta": 0.2},
            "experiment": {"closeness": {"epsilon_grid": [0.2, 0.1], "horizon": 5}}}"#,
    );
    let mut runs = Vec::new();
    for threads in ["1", "2", "8"] {
        let out = tmp.path().join(format!("t{threads}"));
        assert_eq!(run(&cfg, &out, &["--threads", threads]), 0);
        let mut files = dir_files(&out);
        let mut report = read_json(&out.join("report.json"));
        assert_eq!(
            report["provenance"]["threads"]
                .as_u64()
                .unwrap()
                .to_string(),
            threads
        );
        report.as_object_mut().unwrap().remove("provenance");
        files.insert("report.json".into(), to_json_bytes(&report));
        runs.push(files);
    }
    assert!(runs[0].len() >= 7);
    let r: Value = serde_json::from_slice(&runs[0]["results.json"]).unwrap();
    assert!((r["fitted_slope_l2"].as_f64().unwrap() - 3.0).abs() < 0.3);
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn profile_files_resolve_relative_to_config() {
    let tmp = TempDir::new().unwrap();
    std::fs::create_dir(tmp.path().join("cfg")).unwrap();
    std::fs::write(tmp.path().join("cfg/g.txt"), "# n re im\n0 1 0\n1 0 1\n").unwrap();
    let cfg = write_config(
        &tmp.path().join("cfg"),
        "c.json",
        r#"{"model": {"delta": 3, "gamma": 0, "mu": 1},
            "forcing": {"kind": "profile_file", "profile_file": "g.txt", "target_norm2": 0.1},
            "experiment": {"classify": {}}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 0);
    let r = read_json(&out.join("results.json"));
    assert!((r["forcing_norm2"].as_f64().unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(r["case"], "SupercriticalAnnulus");
}

#[test]
fn forcing_outside_window_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"lattice": {"window_half_width": 4}, "forcing": {"site": 9, "target_norm2": 1}, "experiment": {"classify": {}}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 2);
    assert_eq!(
        read_json(&out.join("diagnostic.json"))["key"],
        "forcing.site"
    );
}

#[test]
fn blowup_is_numerical_failure_unless_allowed() {
    let tmp = TempDir::new().unwrap();
    let body = |allow: bool| {
        format!(
            r#"{{"model": {{"delta": 0, "gamma": -1}}, "lattice": {{"window_half_width": 4}},
                "experiment": {{"simulate": {{"horizon": 10, "initial": {{"scaled_unit": {{"norm2": 4}}}}, "allow_blowup": {allow}}}}}}}"#
        )
    };
    let strict = write_config(tmp.path(), "a.json", &body(false));
    let out = tmp.path().join("a");
    let code = run(&strict, &out, &[]);
    assert_eq!(code, 3);
    assert_eq!(read_json(&out.join("diagnostic.json"))["kind"], "numerical");

    let allowed = write_config(tmp.path(), "b.json", &body(true));
    let out = tmp.path().join("b");
    let code = run(&allowed, &out, &[]);
    if code == 0 {
        assert!(
            read_json(&out.join("results.json"))["blowup_time"]
                .as_f64()
                .unwrap()
                < 10.0
        );
    } else {
        // The step size may collapse before the threshold is crossed.
        assert_eq!(code, 3);
    }
}

#[test]
fn hypothesis_violation_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"model": {"delta": 1}, "experiment": {"regime_verify": {}}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 1);
    let diag = read_json(&out.join("diagnostic.json"));
    assert_eq!(diag["kind"], "hypothesis");
    assert_eq!(diag["experiment"], "regime_verify");
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"seed": 1, "experiment": {"identity_check": {"samples": 5}}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &["--seed", "42"]), 0);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["results"]["seed"], 42);
    assert_eq!(report["config_echo"]["seed"], 42);
    assert_eq!(report["provenance"]["seed"], 42);
}

#[test]
fn output_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", CLASSIFY);
    let env_out = tmp.path().join("from_env");
    let status = Command::new(env!("CARGO_BIN_EXE_dgl"))
        .args(["run", cfg.to_str().unwrap()])
        .env("DGL_OUT_DIR", &env_out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(env_out.join("report.json").exists());
}
