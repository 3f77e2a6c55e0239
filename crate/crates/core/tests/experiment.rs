use std::fs;
use std::path::Path;

use labrisk_core::datagen::{read_dataset, UsualCarePolicy};
use labrisk_core::experiment::*;
use labrisk_core::scm::{Mode, ScmConfig};
use labrisk_core::{Error, ErrorKind};

fn config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        mode: Some(Mode::Coarse),
        n_persons: 2_000,
        n_conditions: 3,
        n_mc: 2_000,
        seed: Some(5),
        out_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

fn compare_rows(dir: &Path) -> Vec<CompareRow> {
    csv::Reader::from_path(dir.join("compare.csv"))
        .unwrap()
        .deserialize()
        .map(Result::unwrap)
        .collect()
}

fn oracle_rows(dir: &Path) -> Vec<OracleRow> {
    csv::Reader::from_path(dir.join("oracle.csv"))
        .unwrap()
        .deserialize()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn empty_cohorts_and_unknown_estimands_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { n_persons: 0, ..config(dir.path()) };
    assert!(matches!(cmd_simulate(&cfg), Err(Error::InvalidConfig(_))));
    let cfg = ExperimentConfig { estimands: vec![2, 9], ..config(dir.path()) };
    let err = cmd_evaluate(&cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Usage);
    let cfg = ExperimentConfig { seed: None, ..config(dir.path()) };
    assert!(cmd_simulate(&cfg).is_err());
    let cfg = ExperimentConfig { query_hours: vec![40], ..config(dir.path()) };
    assert!(cmd_evaluate(&cfg).is_err());
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn manifest_records_config_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let manifest = cmd_simulate(&cfg).unwrap();
    assert_eq!(manifest.command, "simulate");
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.config_hash, cfg.hash());
    assert_eq!(manifest.outputs.len(), 1);
    let on_disk: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);
    assert_eq!(read_dataset(&dir.path().join("dataset.jsonl")).unwrap().n_persons(), 2_000);

    let changed = ExperimentConfig { n_persons: 2_001, ..cfg.clone() };
    assert_ne!(changed.hash(), cfg.hash());
    assert_ne!(ExperimentConfig { seed: Some(6), ..cfg.clone() }.hash(), cfg.hash());
}

#[test]
fn configs_load_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scm.json"), serde_json::to_string(&ScmConfig::new(Mode::Coarse)).unwrap()).unwrap();
    let text = r#"{"scm_config": "scm.json", "seed": 3, "out_dir": "out", "n_persons": 10}"#;
    fs::write(dir.path().join("exp.json"), text).unwrap();
    let cfg = ExperimentConfig::load(&dir.path().join("exp.json")).unwrap();
    assert_eq!(cfg.out_dir, dir.path().join("out"));
    assert_eq!(cfg.scm_config().unwrap().mode, Mode::Coarse);
    cfg.validate().unwrap();
    let conflicting = ExperimentConfig { mode: Some(Mode::Continuous), ..cfg };
    assert!(conflicting.scm_config().is_err());
    fs::write(dir.path().join("bad.json"), r#"{"seed": 3, "colour": "blue"}"#).unwrap();
    assert!(ExperimentConfig::load(&dir.path().join("bad.json")).is_err());
}

#[test]
fn zero_hazard_evaluation_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        mode: None,
        scm: Some(ScmConfig::new(Mode::Coarse).with_zero_hazards()),
        query_hours: vec![0, 3],
        ..config(dir.path())
    };
    cmd_evaluate(&cfg).unwrap();
    let rows = oracle_rows(dir.path());
    // Seven estimands at hour 0, three at hour 3; an exact and an MC row each.
    assert_eq!(rows.len(), (7 + 3) * 3 * 2);
    assert!(rows.iter().all(|r| r.p == 0.0));
}

#[test]
fn exact_and_monte_carlo_oracles_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { n_mc: 20_000, query_hours: vec![0, 2], ..config(dir.path()) };
    cmd_evaluate(&cfg).unwrap();
    let rows = oracle_rows(dir.path());
    for exact in rows.iter().filter(|r| r.method == "oracle_exact") {
        let mc = rows
            .iter()
            .find(|r| r.method == "oracle_mc" && (r.estimand_id, r.k, r.condition_id) == (exact.estimand_id, exact.k, exact.condition_id))
            .unwrap();
        assert!((mc.p - exact.p).abs() <= 3.0 * mc.se.max(1e-12), "{exact:?} vs {mc:?}");
    }
    let lines = fs::read_to_string(dir.path().join("conditions.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2 * 3);
}

#[test]
fn comparison_covers_every_query_profile_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { estimands: vec![2, 5, 7], query_hours: vec![0, 2], ..config(dir.path()) };
    let manifest = cmd_compare(&cfg).unwrap();
    let rows = compare_rows(dir.path());
    assert_eq!(rows.len(), cfg.queries().len() * (cfg.n_conditions + 1) * COMPARED_METHODS.len());
    assert_eq!(cfg.queries().len(), 5);
    let files: Vec<&str> = manifest.outputs.iter().map(|o| o.file.as_str()).collect();
    assert_eq!(files, ["compare.csv", "summary.txt"]);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("gcomp") && summary.contains("naive"));
}

fn distress_naive_bias(policy: UsualCarePolicy, dir: &Path) -> f64 {
    let cfg = ExperimentConfig { estimands: vec![2], n_persons: 100_000, policy, ..config(dir) };
    cmd_compare(&cfg).unwrap();
    let rows = compare_rows(dir);
    let row = rows.iter().find(|r| r.profile_id == 0 && r.method == "naive").unwrap();
    row.bias.unwrap()
}

#[test]
fn naive_bias_depends_on_the_data_generating_policy() {
    let dir = tempfile::tempdir().unwrap();
    let never = distress_naive_bias(UsualCarePolicy::never(), dir.path());
    assert!(never.abs() <= 0.02, "{never}");
    let usual = distress_naive_bias(UsualCarePolicy::default(), dir.path());
    assert!(usual.abs() > 0.03, "{usual}");
}

#[test]
fn unsupported_fits_are_noted_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { estimands: vec![1, 2], policy: UsualCarePolicy::never(), ..config(dir.path()) };
    cmd_compare(&cfg).unwrap();
    let rows = compare_rows(dir.path());
    let ice = rows.iter().find(|r| r.estimand_id == 1 && r.method == "ice").unwrap();
    assert!(ice.estimate.is_none() && ice.note.contains("positivity"), "{ice:?}");
    assert!(rows.iter().filter(|r| r.estimand_id == 2).all(|r| r.estimate.is_some()));
}

#[test]
fn commands_are_reproducible() {
    for (name, run) in [
        ("simulate", cmd_simulate as fn(&ExperimentConfig) -> labrisk_core::Result<Manifest>),
        ("evaluate", cmd_evaluate),
        ("fit", cmd_fit),
        ("compare", cmd_compare),
    ] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = run(&config(a.path())).unwrap();
        let mb = run(&config(b.path())).unwrap();
        assert_eq!(ma.outputs, mb.outputs, "{name}");
        for out in &ma.outputs {
            assert_eq!(fs::read(a.path().join(&out.file)).unwrap(), fs::read(b.path().join(&out.file)).unwrap());
        }
    }
}
