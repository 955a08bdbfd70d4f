use std::path::Path;
use std::process::{Command, Output};

use invlab_cli::config::{ConfigError, DEFAULT_REPLICATIONS};
use invlab_cli::output::sha256_hex;
use invlab_cli::{apply_seed_override, parse_config, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK};

const MINIMAL: &str = r#"
schema_version = 1

[params]
c = 1.0
c_h = 1.0
c_p = 3.0
q = 0.7

[demand]
family = "uniform"
support = [0.0, 1.0]

[run]
n = 50
"#;

/// Short horizons and few paths so every subcommand finishes quickly.
const SMALL: &str = r#"
schema_version = 1

[params]
c = 1.0
c_h = 1.0
c_p = 3.0
q = 0.7

[demand]
family = "uniform"
support = [0.0, 1.0]

[run]
n = 10
horizons = [5, 10, 20]
replications = 400
master_seed = 11
retain = 2

[compare]
alternatives = [{ kind = "never_order" }, { kind = "fixed_base_stock", level = 0.9 }]
"#;

fn invlab(args: &[&str], config: &str, out: &Path, seed: Option<&str>) -> Output {
    let cfg = out.with_extension("toml");
    std::fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_invlab"));
    cmd.args(args).arg("--config").arg(&cfg).arg("--out").arg(out);
    cmd.env_remove("INVLAB_SEED");
    if let Some(s) = seed {
        cmd.env("INVLAB_SEED", s);
    }
    cmd.output().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn issues(text: &str) -> Vec<String> {
    match parse_config(text) {
        Err(ConfigError::Invalid(list)) => list.iter().map(|i| i.to_string()).collect(),
        other => panic!("expected validation issues, got {other:?}"),
    }
}

#[test]
fn minimal_config_takes_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    let d = cfg.demand_model();
    assert_eq!(d.points(), 512);
    assert_eq!(cfg.solver_options().step, None);
    let grid = invlab_core::StateGrid::for_model(&cfg.params, &d, cfg.solver_options().step).unwrap();
    assert_eq!(grid.step, 1.0 / 256.0);
    assert_eq!(cfg.run.horizons, vec![50]);
    assert_eq!(cfg.run.replications, DEFAULT_REPLICATIONS);
    assert_eq!(cfg.run.master_seed, 0);
    assert_eq!(cfg.params.x0, 0.0);
    assert!(cfg.formats.csv && cfg.formats.json);
}

#[test]
fn every_problem_is_listed_with_its_key_path() {
    let text = MINIMAL
        .replace("c_p = 3.0", "c_p = 0.5\ndiscout = 0.9")
        .replace("n = 50", "n = 50\nreplications = -3");
    let found = issues(&text);
    assert!(found.iter().any(|i| i.starts_with("params.discout") && i.contains("unknown key")), "{found:?}");
    assert!(found.iter().any(|i| i.starts_with("params.c") && i.contains("strictly smaller than the backlog")), "{found:?}");
    assert!(found.iter().any(|i| i.starts_with("run.replications")), "{found:?}");
}

#[test]
fn structural_mistakes_are_reported() {
    let no_version = MINIMAL.replace("schema_version = 1", "");
    assert!(issues(&no_version).iter().any(|i| i.starts_with("schema_version")));
    let future = MINIMAL.replace("schema_version = 1", "schema_version = 2");
    assert!(issues(&future).iter().any(|i| i.starts_with("schema_version")));
    let bad_family = MINIMAL.replace("\"uniform\"", "\"gamma\"");
    assert!(issues(&bad_family).iter().any(|i| i.starts_with("demand.family")));
    let far_start = MINIMAL.replace("q = 0.7", "q = 0.7\nx0 = 0.8");
    assert!(issues(&far_start).iter().any(|i| i.starts_with("params.x0")));
    let extra_table = format!("{MINIMAL}\n[plots]\nwidth = 3\n");
    assert!(issues(&extra_table).iter().any(|i| i.starts_with("plots")));
    let horizons = MINIMAL.replace("n = 50", "n = 50\nhorizons = [50, 25]");
    assert!(issues(&horizons).iter().any(|i| i.starts_with("run.horizons")));
}

#[test]
fn parse_errors_carry_line_and_column() {
    let text = MINIMAL.replace("c_h = 1.0", "c_h = = 1.0");
    match parse_config(&text) {
        Err(ConfigError::Parse { line, column, .. }) => {
            assert_eq!(line, 6);
            assert!(column > 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn seed_override_accepts_decimal_and_hex() {
    let mut cfg = parse_config(MINIMAL).unwrap();
    apply_seed_override(&mut cfg, Some("0x10")).unwrap();
    assert_eq!(cfg.run.master_seed, 16);
    apply_seed_override(&mut cfg, Some("77")).unwrap();
    assert_eq!(cfg.run.master_seed, 77);
    assert!(apply_seed_override(&mut cfg, Some("-1")).is_err());
    apply_seed_override(&mut cfg, None).unwrap();
    assert_eq!(cfg.run.master_seed, 77);
}

#[test]
fn invalid_configuration_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = invlab(&["solve"], &MINIMAL.replace("c_p = 3.0", "c_p = 1.0"), &tmp.path().join("o"), None);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("params.c:") && err.contains("strictly smaller than the backlog"), "{err}");

    let missing = Command::new(env!("CARGO_BIN_EXE_invlab"))
        .args(["solve", "--config"])
        .arg(tmp.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_INVALID));

    let bad_seed = invlab(&["solve"], SMALL, &tmp.path().join("s"), Some("many"));
    assert_eq!(bad_seed.status.code(), Some(EXIT_INVALID));
}

#[test]
fn solve_writes_a_policy_with_one_row_per_period() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("solve");
    let out = invlab(&["solve"], MINIMAL, &dir, None);
    // The levels exceed the newsvendor quantile once deliveries can slip, so
    // the upper-bound check fails and the run exits with 2.
    assert_eq!(out.status.code(), Some(EXIT_CHECK_FAILED), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS order-up-to structure"), "{stdout}");
    assert!(stdout.contains("FAIL levels below newsvendor bound"), "{stdout}");

    let levels = std::fs::read_to_string(dir.join("levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 51);
    let policy = std::fs::read_to_string(dir.join("policy.txt")).unwrap();
    let parsed = invlab_core::PolicyFile::parse(&policy).unwrap();
    assert_eq!(parsed.policy.rules.len(), 50);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("structure.json")).unwrap()).unwrap();
    for key in ["monotone", "base_stock", "slope", "bounds"] {
        assert!(report["structure"].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn solve_without_delays_passes_every_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = invlab(&["solve"], &SMALL.replace("q = 0.7", "q = 1.0"), &tmp.path().join("o"), None);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn manifest_digests_match_and_reruns_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sim");
    let out = invlab(&["simulate"], SMALL, &dir, None);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let m = manifest(&dir);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["master_seed"], 11);
    let files = m["files"].as_array().unwrap();
    let names: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert!(names.contains(&"costs.csv"));
    assert!(names.contains(&"simulation.json"));
    assert!(names.contains(&"trajectories/path_00000.csv"));
    assert!(names.contains(&"trajectories/path_00001.csv"));
    assert!(names.windows(2).all(|w| w[0] < w[1]));
    for f in files {
        let bytes = std::fs::read(dir.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"], bytes.len());
        assert_eq!(f["sha256"], sha256_hex(&bytes));
    }
    let costs = std::fs::read_to_string(dir.join("costs.csv")).unwrap();
    assert_eq!(costs.lines().count(), 401);

    let first = std::fs::read(dir.join("manifest.json")).unwrap();
    invlab(&["simulate"], SMALL, &dir, None);
    assert_eq!(std::fs::read(dir.join("manifest.1.json")).unwrap(), first);
    invlab(&["simulate"], SMALL, &dir, None);
    assert!(dir.join("manifest.2.json").exists());
    assert_eq!(std::fs::read(dir.join("manifest.json")).unwrap(), first);
}

#[test]
fn seed_from_the_environment_changes_the_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    invlab(&["simulate"], SMALL, &a, None);
    invlab(&["simulate"], SMALL, &b, Some("11"));
    invlab(&["simulate"], SMALL, &c, Some("0xbeef"));
    let read = |d: &Path| std::fs::read(d.join("costs.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(manifest(&c)["master_seed"], 0xbeef);
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    invlab(&["simulate", "--workers", "1"], SMALL, &a, None);
    invlab(&["simulate", "--workers", "4"], SMALL, &b, None);
    assert_eq!(manifest(&a)["files"], manifest(&b)["files"]);
}

#[test]
fn clt_writes_one_sample_per_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("clt");
    let out = invlab(&["clt"], SMALL, &dir, None);
    assert!(matches!(out.status.code(), Some(0 | 2)));
    for n in [5, 10, 20] {
        assert!(dir.join(format!("costs_n{n}.csv")).exists());
    }
    let clt: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("clt.json")).unwrap()).unwrap();
    assert_eq!(clt["horizons"].as_array().unwrap().len(), 3);
    assert!(clt["variance_fit"]["slope"].as_f64().unwrap() > 0.0);
    for f in ["histogram.csv", "qq.csv", "variance_vs_n.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let hist = std::fs::read_to_string(dir.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("bin_left,bin_right,count\n"));
    let total: u64 = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 400);
}

#[test]
fn diagnose_report_has_stable_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("diag");
    invlab(&["diagnose"], SMALL, &dir, None);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("diagnostics.json")).unwrap()).unwrap();
    for key in ["kappa", "alpha_lower", "delta_by_period", "ks", "variance_fit", "hoeffding_table", "dominance"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["kappa"], 0.75);
}

#[test]
fn report_runs_every_section() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("all");
    let out = invlab(&["report"], SMALL, &dir, None);
    assert!(matches!(out.status.code(), Some(0 | 2)));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["sections"].as_array().unwrap().iter().map(|s| s["command"].as_str().unwrap()).collect();
    assert_eq!(names, ["solve", "simulate", "diagnose", "clt", "compare"]);
    let paths: Vec<String> =
        manifest(&dir)["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    for f in ["solve/policy.txt", "simulate/costs.csv", "diagnose/diagnostics.json", "clt/clt.json", "report.json"] {
        assert!(paths.iter().any(|p| p == f), "{f} missing from {paths:?}");
    }
}
