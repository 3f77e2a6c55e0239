use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn labrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labrisk")).args(args).output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("experiment.json");
    let text = format!(
        r#"{{"mode": "coarse", "seed": 7, "n_persons": 1000, "n_conditions": 2, "n_mc": 1000, "estimands": [2, 5]{extra}}}"#
    );
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn simulate_writes_a_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = labrisk(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("dataset.jsonl").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains(manifest["outputs"][0]["sha256"].as_str().unwrap()));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let zero = dir.path().join("zero.json");
    fs::write(&zero, r#"{"seed": 1, "n_persons": 0}"#).unwrap();
    assert_eq!(labrisk(&["simulate", "--config", zero.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"seed": 1, "estimands": [12]}"#).unwrap();
    let o = labrisk(&["evaluate", "--config", unknown.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("12"));

    assert_eq!(labrisk(&["simulate", "--out", out]).status.code(), Some(2), "missing seed");
    assert_eq!(labrisk(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(labrisk(&["simulate", "--mode", "sideways"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("broken.jsonl");
    fs::write(&data, "{not json\n").unwrap();
    let config = dir.path().join("fit.json");
    fs::write(&config, format!(r#"{{"seed": 1, "mode": "coarse", "dataset": "{}"}}"#, data.display())).unwrap();
    let o = labrisk(&["fit", "--config", config.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    for command in ["simulate", "evaluate", "compare"] {
        let a = dir.path().join(format!("{command}-a"));
        let b = dir.path().join(format!("{command}-b"));
        for out in [&a, &b] {
            let o = labrisk(&[command, "--config", &config, "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let mut files: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        assert!(files.len() >= 2);
        for f in files {
            if f == "manifest.json" {
                continue;
            }
            assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{command}: {f:?}");
        }
    }
}
