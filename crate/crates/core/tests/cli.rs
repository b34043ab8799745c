//! End-to-end runs of the `unlearn-audit` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use unlearn_audit::cli::config::ExperimentConfig;
use unlearn_audit::cli::execute;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_unlearn-audit"));
    c.env_remove("UNLEARN_AUDIT_OUTPUT_DIR");
    c
}

fn experiment(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments").join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).arg("--output").arg(dir).output().unwrap()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimal_tree_config_passes_its_assertion() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "--config", experiment("tree_blobs.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("tree_blobs.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["seed"], 7);
    assert!(r["results"][0]["stats"]["estimate"].as_f64().unwrap() >= 0.95);
    assert_eq!(r["pass"], true);
}

#[test]
fn same_seed_gives_identical_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = experiment("logistic_blobs.toml");
    for (d, workers) in [(&a, "1"), (&b, "3")] {
        let out = run_in(d.path(), &["run", "--config", cfg.to_str().unwrap(), "--trials", "200", "--workers", workers]);
        assert_eq!(out.status.code(), Some(0));
    }
    let (mut ra, mut rb) = (report(&a.path().join("logistic_blobs.json")), report(&b.path().join("logistic_blobs.json")));
    ra["wall_clock_seconds"] = Value::Null;
    rb["wall_clock_seconds"] = Value::Null;
    assert_eq!(ra, rb);
    let ta = std::fs::read(a.path().join("logistic_blobs.tsv")).unwrap();
    assert_eq!(ta, std::fs::read(b.path().join("logistic_blobs.tsv")).unwrap());
    assert_eq!(String::from_utf8(ta).unwrap().lines().count(), 201);
}

#[test]
fn embedded_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["run", "--config", experiment("known_instance.toml").to_str().unwrap(), "--seed", "12"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&dir.path().join("known_instance.json"));
    let cfg = ExperimentConfig::parse(r["config"].as_str().unwrap()).unwrap();
    assert_eq!(cfg.game.seed, 12);
    let again = serde_json::to_value(execute(&cfg).unwrap().report.results).unwrap();
    assert_eq!(again, r["results"]);
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    let text = std::fs::read_to_string(experiment("tree_blobs.toml")).unwrap().replace("[learner]", "[lerner]");
    std::fs::write(&cfg, text).unwrap();
    let out = run_in(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lerner"));
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    let text = std::fs::read_to_string(experiment("tree_blobs.toml")).unwrap().replace("min = 0.95", "min = 1.01");
    std::fs::write(&cfg, text).unwrap();
    let out = run_in(dir.path(), &["run", "--config", cfg.to_str().unwrap(), "--trials", "20"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL estimate"));
    assert_eq!(report(&dir.path().join("strict.json"))["pass"], false);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("UNLEARN_AUDIT_OUTPUT_DIR", dir.path())
        .args(["reproduce", "lemma44", "--format", "flat-table"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("criterion  4 PASS"), "{stdout}");
    let r = report(&dir.path().join("lemma44.json"));
    assert_eq!(r["criteria"][0]["criterion"], 4);
    let tsv = std::fs::read_to_string(dir.path().join("lemma44.tsv")).unwrap();
    assert!(tsv.starts_with("criterion\tcheck\tmeasured"));
}

#[test]
fn unknown_preset_exits_2() {
    let out = bin().args(["reproduce", "table7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset `table7`"));
}

#[test]
fn list_presets_names_every_suite() {
    let out = bin().arg("list-presets").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for p in ["table2", "table3", "table4", "table5", "table6", "lemma34", "lemma44", "thm42", "thm52", "sanity"] {
        assert!(text.lines().any(|l| l.starts_with(p)), "{p}");
    }
}

#[test]
fn every_example_config_parses() {
    for entry in std::fs::read_dir(experiment("")).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.game_config().unwrap();
    }
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

#[test]
fn reports_validate_against_the_documented_schema() {
    let v = schema();
    for entry in std::fs::read_dir(experiment("")).unwrap() {
        let mut cfg = ExperimentConfig::load(entry.unwrap().path()).unwrap();
        cfg.game.trials = 30;
        let r = serde_json::to_value(execute(&cfg).unwrap().report).unwrap();
        let errors: Vec<String> = v.iter_errors(&r).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["reproduce", "sanity", "--trials", "20"]).status.code(), Some(0));
    let r = report(&dir.path().join("sanity.json"));
    assert!(v.is_valid(&r), "{:?}", v.iter_errors(&r).map(|e| e.to_string()).collect::<Vec<_>>());
    let mut broken = r.clone();
    broken["schema_version"] = 2.into();
    assert!(!v.is_valid(&broken));
}
