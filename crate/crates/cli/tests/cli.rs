//! End-to-end tests of the `monge` binary: exit codes, artifact layout,
//! provenance stamping, and rerun stability.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn monge(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_monge"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).expect("config written");
    path.to_str().expect("utf8 path").to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("file exists"))
        .expect("valid json")
}

const UNIFORM_TORUS: &str = r#"
seed = 5

[manifold]
kind = "torus"
side = 6

[cost]
kind = "euclidean"

[marginals]
kind = "uniform"
"#;

const SWIRL_TORUS: &str = r#"
seed = 7

[manifold]
kind = "torus"
side = 8

[cost]
kind = "randers"
preset = "swirl"

[marginals]
kind = "bumps"
width = 0.12
"#;

const QUAD_TORUS: &str = r#"
seed = 3

[manifold]
kind = "torus"
side = 6

[cost]
kind = "quadratic"
critical_bracket = [-2.0, 0.0]

[marginals]
kind = "uniform"
"#;

#[test]
fn solve_writes_stamped_artifacts_and_identity_plan_costs_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), UNIFORM_TORUS);
    let out = tmp.path().join("out");
    let run = monge(&["solve", "--config", &cfg, "--out-dir", out.to_str().unwrap()], &[]);
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));

    for name in ["plan.json", "potential.csv", "map.csv", "metrics.json"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["seed"], 5);
    // Equal marginals: staying put is free, so the optimum is the identity.
    assert!(metrics["transport_cost"].as_f64().unwrap().abs() <= 1e-12);
    assert!(metrics["duality_gap"].as_f64().unwrap().abs() <= 1e-12);
    assert!(metrics["max_marginal_residual"].as_f64().unwrap() <= 1e-12);

    // Every CSV opens with the provenance line carrying the same digests.
    let digest = metrics["config_digest"].as_str().unwrap().to_string();
    let model = metrics["model_digest"].as_str().unwrap().to_string();
    for name in ["potential.csv", "map.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, format!("# config {digest} model {model} seed 5"));
    }
}

#[test]
fn seed_flag_overrides_config_and_restamps_the_digest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), UNIFORM_TORUS);
    let base = tmp.path().join("base");
    let seeded = tmp.path().join("seeded");
    assert!(monge(&["solve", "--config", &cfg, "--out-dir", base.to_str().unwrap()], &[])
        .status
        .success());
    assert!(monge(
        &["solve", "--config", &cfg, "--seed", "99", "--out-dir", seeded.to_str().unwrap()],
        &[]
    )
    .status
    .success());
    let a = read_json(&base.join("metrics.json"));
    let b = read_json(&seeded.join("metrics.json"));
    assert_eq!(b["seed"], 99);
    assert_ne!(a["config_digest"], b["config_digest"]);
    assert_eq!(a["model_digest"], b["model_digest"]);
}

#[test]
fn env_var_selects_the_output_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), UNIFORM_TORUS);
    let out = tmp.path().join("from_env");
    let run = monge(
        &["solve", "--config", &cfg],
        &[("MONGE_OUT_DIR", out.to_str().unwrap())],
    );
    assert!(run.status.success());
    assert!(out.join("metrics.json").exists());
}

#[test]
fn usage_problems_exit_one_and_help_exits_zero() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(monge(&["solve"], &[]).status.code(), Some(1), "missing --config");
    assert_eq!(
        monge(&["solve", "--config", "no-such-file.toml"], &[]).status.code(),
        Some(1),
        "unreadable config"
    );
    assert_eq!(monge(&["frobnicate"], &[]).status.code(), Some(1), "unknown subcommand");
    assert_eq!(monge(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(monge(&["--version"], &[]).status.code(), Some(0));

    let bad = write_config(
        tmp.path(),
        "seed = 1\n[manifold]\nkind = \"torus\"\nside = 4\n[cost]\nkind = \"warp\"\n[marginals]\nkind = \"uniform\"\n",
    );
    assert_eq!(monge(&["solve", "--config", &bad], &[]).status.code(), Some(1));
}

#[test]
fn subcritical_shift_exits_with_certification_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
seed = 3

[manifold]
kind = "torus"
side = 6

[cost]
kind = "quadratic"
shift = -2.0

[marginals]
kind = "uniform"
"#,
    );
    let run = monge(&["solve", "--config", &cfg, "--out-dir", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("subcritical"));
}

#[test]
fn critical_search_writes_a_recheckable_record() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), QUAD_TORUS);
    let out = tmp.path().join("out");
    let run = monge(
        &["cost", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--critical"],
        &[],
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let doc = read_json(&out.join("critical.json"));
    // Unit potential: the shifted cost degenerates exactly at k = -1.
    let estimate = doc["record"]["estimate"].as_f64().unwrap();
    assert!((estimate + 1.0).abs() <= 1e-5, "estimate {estimate}");
    assert_eq!(doc["low_certificate_rechecked"], true);
    assert_eq!(doc["high_certificate_rechecked"], true);

    // Norm-induced costs have no shift to bisect.
    let finsler = write_config(tmp.path(), SWIRL_TORUS);
    let run = monge(
        &["cost", "--config", &finsler, "--out-dir", out.to_str().unwrap(), "--critical"],
        &[],
    );
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn cost_rows_span_all_sources_on_request() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 1\n[manifold]\nkind = \"torus\"\nside = 4\n[cost]\nkind = \"euclidean\"\n[marginals]\nkind = \"uniform\"\n",
    );
    let out = tmp.path().join("out");
    let run = monge(
        &["cost", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--sources", "all"],
        &[],
    );
    assert!(run.status.success());
    let text = std::fs::read_to_string(out.join("cost_rows.csv")).unwrap();
    let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(data_rows, 16 * 16);

    let run = monge(
        &["cost", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--sources", "0,5,9"],
        &[],
    );
    assert!(run.status.success());
    let text = std::fs::read_to_string(out.join("cost_rows.csv")).unwrap();
    let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(data_rows, 3 * 16);

    let run = monge(
        &["cost", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--sources", "99"],
        &[],
    );
    assert_eq!(run.status.code(), Some(1), "out-of-range source");
}

#[test]
fn verify_passes_and_reruns_are_identical_modulo_wall_times() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SWIRL_TORUS);
    let mut reports = Vec::new();
    for name in ["v1", "v2"] {
        let out = tmp.path().join(name);
        let run =
            monge(&["verify", "--config", &cfg, "--out-dir", out.to_str().unwrap()], &[]);
        assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
        let mut doc = read_json(&out.join("verify.json"));
        assert_eq!(doc["overall"], true);
        for check in doc["checks"].as_array_mut().unwrap() {
            assert_eq!(check["pass"], true, "check {}", check["name"]);
            check["wall_ms"] = 0.0.into();
        }
        reports.push(doc);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn verify_reports_a_starved_tightness_tolerance_as_a_failed_check() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{SWIRL_TORUS}\n[tolerances]\ntight = 1e-300\n"),
    );
    let out = tmp.path().join("out");
    let run = monge(&["verify", "--config", &cfg, "--out-dir", out.to_str().unwrap()], &[]);
    assert_eq!(run.status.code(), Some(2));
    let doc = read_json(&out.join("verify.json"));
    assert_eq!(doc["overall"], false);
    let checks = doc["checks"].as_array().unwrap();
    let starved = checks
        .iter()
        .find(|c| c["name"] == "tight-restriction-feasible")
        .expect("check present");
    assert_eq!(starved["pass"], false);
    assert!(starved["note"].as_str().unwrap().contains("infeasible"));
    // Downstream checks fail as skipped rather than vanishing.
    let order = checks.iter().find(|c| c["name"] == "chain-order").unwrap();
    assert_eq!(order["pass"], false);
    assert!(order["note"].as_str().unwrap().contains("skipped"));
    // The stages that do not need the tight set still pass.
    let gap = checks.iter().find(|c| c["name"] == "primary-duality-gap").unwrap();
    assert_eq!(gap["pass"], true);
}

#[test]
fn oracle_checks_seeded_instances_against_enumeration() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), QUAD_TORUS);
    let out = tmp.path().join("out");
    let run = monge(
        &["oracle", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--seeds", "10"],
        &[],
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let doc = read_json(&out.join("oracle.json"));
    assert_eq!(doc["all_pass"], true);
    assert_eq!(doc["checked"], 10);
    assert_eq!(doc["instances"].as_array().unwrap().len(), 10);
    assert!(doc["instances"].as_array().unwrap().iter().all(|i| i["pass"] == true));
}

#[test]
fn rays_artifacts_agree_with_the_solve_metrics() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SWIRL_TORUS);
    let out = tmp.path().join("out");
    assert!(monge(&["solve", "--config", &cfg, "--out-dir", out.to_str().unwrap()], &[])
        .status
        .success());
    assert!(monge(&["rays", "--config", &cfg, "--out-dir", out.to_str().unwrap()], &[])
        .status
        .success());
    let metrics = read_json(&out.join("metrics.json"));
    let chains = read_json(&out.join("chains.json"));
    assert_eq!(metrics["calibrated_edges"], chains["audit"]["calibrated_edges"]);
    assert_eq!(chains["audit"]["order_violations"], 0);
    assert_eq!(chains["audit"]["speed_floor_violations"], 0);
    let calibrated = std::fs::read_to_string(out.join("calibrated.csv")).unwrap();
    let rows = calibrated.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows as u64, metrics["calibrated_edges"].as_u64().unwrap());
}
