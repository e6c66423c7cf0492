use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dicke2p::cli::{resolve, Command as Sub, JsonOutput, Overrides, RunConfig};
use serde_json::Value;

fn dicke2p(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke2p")).args(args).output().expect("binary runs")
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect()
}

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/output.schema.json");
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn csv_output_is_deterministic_and_carries_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = dicke2p(&["bell", "--nbar", "12", "--ensemble", "6", "--seed", "4", "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(data_lines(&a), data_lines(&b));
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# dicke2p "));
    assert!(text.contains("# seed = 4"));
    let lines = data_lines(&a);
    assert_eq!(lines[0], "nbar,outcome,d1,d2,mean_F,stderr_F,outcome_rate");
    assert_eq!(lines.len(), 5);

    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "bell");
    assert_eq!(meta["seed"], 4);
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn different_seeds_give_different_ensembles() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (p, seed) in [(&a, "1"), (&b, "2")] {
        let out = dicke2p(&["bell", "--nbar", "12", "--ensemble", "4", "--seed", seed, "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_ne!(data_lines(&a), data_lines(&b));
}

#[test]
fn json_output_validates_against_schema() {
    let dir = tempfile::tempdir().unwrap();
    let validator = jsonschema::validator_for(&schema()).unwrap();
    let cases: [&[&str]; 3] = [
        &["ghz", "--nbar", "5,10"],
        &["rabi", "--nbar", "8", "--t-step", "0.05"],
        &["bell-timing", "--nbar", "8", "--ensemble", "2", "--t-start", "0.49", "--t-stop", "0.51", "--t-step", "0.005"],
    ];
    for (k, args) in cases.iter().enumerate() {
        let path = dir.path().join(format!("out{k}.json"));
        let mut full: Vec<&str> = args.to_vec();
        let p = path.to_str().unwrap().to_string();
        full.extend(["--format", "json", "--out", &p]);
        let out = dicke2p(&full);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:?}");
        let typed: JsonOutput = serde_json::from_value(doc).unwrap();
        assert!(typed.tables.iter().all(|t| t.rows.iter().all(|r| r.len() == t.columns.len())));
    }
}

#[test]
fn schema_rejects_malformed_documents() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    assert!(!validator.is_valid(&serde_json::json!({ "tables": [] })));
}

#[test]
fn wigner_writes_one_file_per_panel() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("w.csv");
    let out = dicke2p(&["wigner", "--nbar", "9", "--grid-points", "41", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for panel in ["t0", "tr4", "tr2"] {
        let lines = data_lines(&dir.path().join(format!("w_{panel}.csv")));
        assert_eq!(lines[0], "beta_re,beta_im,W");
        assert_eq!(lines.len(), 1 + 41 * 41);
    }
    assert!(dir.path().join("w.csv.meta.json").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(&cfg_path, "# sweep\ncommand = ghz\nnbar = 5, 6\nphi = 0.1\n").unwrap();
    let out_path = dir.path().join("g.json");
    let out = dicke2p(&[
        "ghz",
        "--config",
        cfg_path.to_str().unwrap(),
        "--phi",
        "0.2",
        "--format",
        "json",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: JsonOutput = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(doc.metadata.config.nbar, vec![5.0, 6.0]);
    assert_eq!(doc.metadata.config.phi, Some(0.2));
    assert_eq!(doc.tables[0].rows.len(), 2);
}

#[test]
fn emitted_config_parses_back() {
    let flags = Overrides { nbar: Some(vec![7.5]), seed: Some(99), lo_phase: Some(0.25), ..Default::default() };
    let cfg = resolve(Sub::Bell, Some("efficiency = 0.6\n"), &flags).unwrap();
    assert_eq!(RunConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    let json = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
}

#[test]
fn exit_codes() {
    assert_eq!(dicke2p(&["ghz", "--nbar", "-3"]).status.code(), Some(2));
    assert_eq!(dicke2p(&["bell", "--efficiency", "1.5"]).status.code(), Some(2));
    assert_eq!(dicke2p(&["ghz", "--engine", "warp"]).status.code(), Some(2));
    assert_eq!(dicke2p(&["ghz", "--config", "/nonexistent/run.cfg"]).status.code(), Some(2));
    assert_eq!(dicke2p(&["frobnicate"]).status.code(), Some(2));
    // g_e n̄ π = 314 is not ≪ Δ = 500, so --strict escalates the warning
    let strict = dicke2p(&["fidelity-scan", "--nbar", "100", "--ensemble", "1", "--t-step", "0.5", "--strict"]);
    assert_eq!(strict.status.code(), Some(3));
    let lenient = dicke2p(&["fidelity-scan", "--nbar", "4", "--ensemble", "1", "--t-step", "0.5", "--delta", "5000"]);
    assert_eq!(lenient.status.code(), Some(0), "{}", String::from_utf8_lossy(&lenient.stderr));
}

#[test]
fn stdout_csv_without_out_path() {
    let out = dicke2p(&["ghz", "--nbar", "6"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "nbar,F_GHZ"));
    assert!(text.lines().any(|l| l.starts_with("6,")));
}
