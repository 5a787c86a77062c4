use std::path::Path;
use std::process::{Command, Output};

fn fingae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fingae")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("run.json");
    let cfg = r#"{
  "k": 3,
  "synth": {"n_companies": 24, "k_planted": 3, "n_articles": 300, "n_days": 40},
  "train": {"max_epochs": 30, "stop_window_n": 5, "stop_threshold_epochs": 10},
  "final_epochs": 20,
  "cv_folds": 3
}"#;
    std::fs::write(&path, cfg).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn missing_input_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = fingae(&["build", "--data-dir", missing.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"no_such_field": 1}"#).unwrap();
    let out = fingae(&["build", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_mode_rejected() {
    let out = fingae(&["train-eval", "--mode", "both"]);
    assert!(!out.status.success());
}

#[test]
fn synth_build_cv_train_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = small_config(dir.path());
    let common = ["--config", cfg.as_str(), "--out-dir", d, "--data-dir", d];
    for cmd in ["synth", "build", "cv", "train-eval"] {
        let mut args = vec![cmd];
        args.extend_from_slice(&common);
        let out = fingae(&args);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"nodes\": 24"));
    for f in ["edges.csv", "cv_report.json", "cv_choice.json", "metrics.json", "clusters.csv", "coords.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let d = dir.path().to_str().unwrap();
            let cfg = small_config(dir.path());
            for cmd in ["synth", "train-eval"] {
                let out = fingae(&[cmd, "--config", &cfg, "--out-dir", d, "--data-dir", d, "--seed", "5", "--mode", "edges_only"]);
                assert!(out.status.success());
            }
            ["metrics.json", "clusters.csv", "history.csv"]
                .iter()
                .flat_map(|f| std::fs::read(dir.path().join(f)).unwrap())
                .collect()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}
