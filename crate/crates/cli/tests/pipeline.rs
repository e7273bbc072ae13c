use std::fs;
use std::path::Path;
use std::process::Command;

use regrowth_cli::manifest::{read_log, LOCK_FILE};
use regrowth_cli::{run_stage, RunConfig, Stage};

const TINY: &str = "\
synth.n_fires = 8
synth.height = 20
synth.width = 20
preprocess.holdout = 3
train.epochs = 2
train.filters = 3,4,3
tucker.max_sweeps = 20
cluster.ks = 2,3
cluster.epochs = 100
";

fn config(dir: &Path) -> RunConfig {
    RunConfig::from_text(&format!("paths.out_dir = {}\n{TINY}", dir.display())).unwrap()
}

fn run_all(cfg: &RunConfig) {
    for stage in Stage::ALL {
        run_stage(cfg, stage).unwrap_or_else(|e| panic!("{}: {e}", stage.name()));
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regrowth"))
}

#[test]
fn chain_is_deterministic_and_idempotent() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all(&config(a.path()));
    run_all(&config(b.path()));
    for name in ["split.csv", "train_log.csv", "logistic_fires.csv", "predictions.csv", "eval_summary.csv", "clusters.csv", "report.md"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let (la, lb) = (read_log(a.path()).unwrap(), read_log(b.path()).unwrap());
    assert_eq!(la.len(), Stage::ALL.len());
    for (x, y) in la.iter().zip(&lb) {
        assert_eq!((&x.stage, &x.input_hash, &x.config_hash), (&y.stage, &y.input_hash, &y.config_hash));
    }
    assert!(!a.path().join(LOCK_FILE).exists());

    let before = fs::read(a.path().join("predictions.csv")).unwrap();
    run_stage(&config(a.path()), Stage::PredictK).unwrap();
    assert_eq!(fs::read(a.path().join("predictions.csv")).unwrap(), before);
    let log = read_log(a.path()).unwrap();
    let again = log.last().unwrap();
    let first = log.iter().find(|l| l.stage == "predict-k").unwrap();
    assert_eq!((&again.input_hash, &again.config_hash), (&first.input_hash, &first.config_hash));
}

#[test]
fn hashes_follow_inputs_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    run_stage(&cfg, Stage::Synth).unwrap();
    run_stage(&cfg, Stage::Preprocess).unwrap();
    let mut other = cfg.clone();
    other.preprocess.split_fraction = 0.6;
    run_stage(&other, Stage::Preprocess).unwrap();
    let catalog = dir.path().join("catalog.csv");
    let text = fs::read_to_string(&catalog).unwrap();
    fs::write(&catalog, format!("{text}\n")).unwrap();
    run_stage(&cfg, Stage::Preprocess).unwrap();
    let log = read_log(dir.path()).unwrap();
    assert_eq!(log[1].input_hash, log[2].input_hash);
    assert_ne!(log[1].config_hash, log[2].config_hash);
    assert_ne!(log[1].input_hash, log[3].input_hash);
    assert_eq!(log[1].config_hash, log[3].config_hash);
}

#[test]
fn eval_without_predictions_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("eval").current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run predict-k first"));
}

#[test]
fn bad_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.kv");
    fs::write(&cfg, "train.epochz = 3\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("synth").current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));

    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn held_lock_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    fs::create_dir_all(&run).unwrap();
    fs::write(run.join(LOCK_FILE), "1").unwrap();
    let out = bin().arg("synth").current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("another stage"));
}

#[test]
fn unreadable_stack_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.kv");
    fs::write(&cfg_path, format!("paths.out_dir = {}\n{TINY}", dir.path().join("run").display())).unwrap();
    let status = bin().arg("--config").arg(&cfg_path).arg("synth").output().unwrap().status;
    assert!(status.success());
    // a directory where a stack file should be cannot be read
    let stack = dir.path().join("run/stacks/F000.rst");
    fs::remove_file(&stack).unwrap();
    fs::create_dir(&stack).unwrap();
    let out = bin().arg("--config").arg(&cfg_path).arg("preprocess").output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_flag_changes_the_split() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.kv");
    let write_cfg = |extra: &str| fs::write(&cfg_path, format!("paths.out_dir = {}\n{TINY}{extra}", dir.path().join("run").display())).unwrap();
    write_cfg("");
    assert!(bin().arg("--config").arg(&cfg_path).arg("synth").status().unwrap().success());
    let mut splits = vec![];
    for seed in ["1", "2", "3"] {
        assert!(bin().args(["--seed", seed, "--config"]).arg(&cfg_path).arg("preprocess").status().unwrap().success());
        splits.push(fs::read_to_string(dir.path().join("run/split.csv")).unwrap());
    }
    assert!(splits[0] != splits[1] || splits[1] != splits[2]);
}
