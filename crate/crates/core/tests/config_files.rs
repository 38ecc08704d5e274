//! Loading experiments from disk: relative trace paths, error reporting, and
//! the shipped example configs.

use std::fs;

use soc_qos::{load_config, run_experiment, ConfigError};

const HEADER: &str = "schema_version = 1\nhorizon = 5000\n\n[topology]\ncores = 1\n";

#[test]
fn trace_path_is_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("traces")).unwrap();
    fs::write(
        dir.path().join("traces/one.trace"),
        "# cycle master kind address size\n0 0 R 0x80000000 8\n3 1 W 0x80000040 8\n9 0 W 0x80000040 8\n",
    )
    .unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        format!("{HEADER}\n[[masters]]\nid = 0\ntrace = \"traces/one.trace\"\n"),
    )
    .unwrap();
    let exp = load_config(&cfg).unwrap();
    // Records for other masters are dropped.
    assert_eq!(exp.traces[&soc_qos::MasterId(0)].len(), 2);
    let out = run_experiment(&exp).unwrap();
    assert_eq!(out.report.masters[0].completed, 2);
    assert!(out.report.drained);
}

#[test]
fn missing_file_names_the_path() {
    let err = load_config("/nonexistent/exp.toml".as_ref()).unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/exp.toml"));
}

#[test]
fn bad_trace_line_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.trace"), "0 0 R 0x80000000 8\n1 0 X 0x80000000 8\n").unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, format!("{HEADER}\n[[masters]]\nid = 0\ntrace = \"t.trace\"\n")).unwrap();
    let err = load_config(&cfg).unwrap_err();
    let ConfigError::Trace { path, source } = &err else {
        panic!("expected a trace error, got {err}");
    };
    assert!(path.ends_with("t.trace"));
    assert_eq!(source.line, 2);
}

#[test]
fn syntax_errors_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "schema_version = 1\n[topology\n").unwrap();
    assert!(matches!(load_config(&cfg).unwrap_err(), ConfigError::Syntax(_)));
    fs::write(&cfg, format!("{HEADER}\nbogus = 3\n")).unwrap();
    let err = load_config(&cfg).unwrap_err();
    assert!(err.to_string().contains("bogus"), "{err}");
    fs::write(&cfg, HEADER.replace("schema_version = 1", "schema_version = 7")).unwrap();
    assert!(matches!(
        load_config(&cfg).unwrap_err(),
        ConfigError::SchemaVersion { found: 7, expected: 1 }
    ));
}

#[test]
fn every_validation_problem_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        r#"schema_version = 1

[topology]
cores = 3
id_width = 1

[l2]
ways = 3

[memctrl]
read_cycles = 0

[quota]
budgets = [{ master = 5, cycles = 10 }]

[[masters]]
id = 0
synthetic = { mode = "periodic" }
"#,
    )
    .unwrap();
    let err = load_config(&cfg).unwrap_err();
    let locations: Vec<&str> = err.issues().iter().map(|i| i.location.as_str()).collect();
    for want in ["topology.id_width", "l2", "memctrl", "quota", "masters"] {
        assert!(
            locations.iter().any(|l| l.starts_with(want)),
            "no issue at {want}: {err}"
        );
    }
}

#[test]
fn shipped_configs_load_and_pass_their_checks() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let mut exp = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            exp.config.horizon = exp.config.horizon.min(30_000);
            let out = run_experiment(&exp).unwrap();
            assert!(out.report.id_integrity.mismatches == 0, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 1);
}
