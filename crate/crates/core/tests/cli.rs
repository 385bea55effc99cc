use std::path::Path;
use std::process::Command;

use diffrx::snapshot::{load_baseline, load_mlp};

const SMALL: [&str; 8] = [
    "train.epochs=2",
    "link.orders=[16]",
    "link.dataset_size=128",
    "snr_sweep.orders=[16]",
    "snr_sweep.snr_db=[0.0]",
    "snr_sweep.runs=1",
    "snr_sweep.symbols=32",
    "baseline.iterations_qam16=10",
];

fn diffrx(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_diffrx"))
        .arg("run")
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn unknown_command_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = diffrx(tmp.path(), &["train-everything"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = diffrx(tmp.path(), &["gradcheck", "train.not_a_field=3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_schedule_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = diffrx(tmp.path(), &["gradcheck", "schedule.beta_end=2.0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_without_trained_models_exits_with_missing_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["snr-sweep"];
    args.extend(SMALL);
    let out = diffrx(tmp.path(), &args);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_then_sweep_writes_loadable_models_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in ["train-link", "snr-sweep"] {
        let mut args = vec![cmd];
        args.extend(SMALL);
        let out = diffrx(tmp.path(), &args);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(tmp.path().join(format!("{}.meta.toml", cmd.replace('-', "_"))).exists());
    }
    let (model, epoch) = load_mlp(&tmp.path().join("ddpm_qam16.dfx")).unwrap();
    assert_eq!(epoch, 2);
    assert_eq!(model.steps(), 100);

    let baselines: Vec<_> = std::fs::read_dir(tmp.path().join("baselines"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(baselines.len(), 2);
    for path in &baselines {
        let (dnn, iterations) = load_baseline(path).unwrap();
        assert_eq!(iterations, 10);
        assert_eq!(dnn.hidden_dim(), 64);
    }

    let table = std::fs::read_to_string(tmp.path().join("snr_sweep.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert!(lines[0].starts_with("experiment,receiver,m,snr_db"));
    // ddpm and dnn for gaussian and laplacian noise
    assert_eq!(lines.len(), 1 + 4);
}

#[test]
fn seed_flag_changes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for seed in ["1", "2"] {
        let dir = tmp.path().join(seed);
        let mut args = vec!["--seed", seed, "train-link"];
        args.extend(SMALL);
        assert!(diffrx(&dir, &args).status.success());
        tables.push(std::fs::read(dir.join("loss_qam16.csv")).unwrap());
    }
    assert_ne!(tables[0], tables[1]);
}
