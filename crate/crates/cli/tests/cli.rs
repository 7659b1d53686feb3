use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jumpsel::data::{inject_noise, load_csv, NoiseSpec, Split};

fn jumpsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumpsel"))
        .args(args)
        .env_remove("JUMPSEL_OUT_DIR")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const CONFIG: &str = r#"
version = 1
seeds = [4]

[dataset]
kind = "blobs"
classes = 3
dim = 6
n_per_class = 30
spread = 1.0

[noise]
kind = "symmetric"
epsilon = 0.3

[train]
epochs = 3
batch_size = 16
hidden = [8, 8]

[schedule]
strategies = ["standard", "jump_update"]
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn codebook_rows_are_bipolar() {
    let out = jumpsel(&["codebook", "--classes", "10", "--bits", "16"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<i32>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    for (i, a) in rows.iter().enumerate() {
        assert_eq!(a.len(), 16);
        for b in &rows[i + 1..] {
            assert_eq!(a.iter().zip(b).filter(|(x, y)| x != y).count(), 8);
        }
    }
}

#[test]
fn capacity_error_is_a_config_exit() {
    let out = jumpsel(&["codebook", "--classes", "20", "--bits", "16"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error[capacity]: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn gen_data_then_inject() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = jumpsel(&["gen-data", "--classes", "4", "--dim", "5", "--n-per-class", "20", "--out-dir", d]);
    assert!(out.status.success(), "{}", stderr(&out));
    let train = dir.path().join("train.csv");
    let header = fs::read_to_string(&train).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "f0,f1,f2,f3,f4,label_true,label_noisy");

    let noisy = dir.path().join("noisy.csv");
    let out = jumpsel(&[
        "inject", "--input", train.to_str().unwrap(), "--classes", "4", "--kind", "pairflip",
        "--epsilon", "0.5", "--seed", "2", "--out", noisy.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let got = load_csv(&noisy, 4, Split::Train).unwrap();
    let clean = load_csv(&train, 4, Split::Train).unwrap();
    let want = inject_noise(&clean, &NoiseSpec::pairflip(0.5), 2).unwrap();
    assert_eq!(got.noisy_labels, want.noisy_labels);
    assert!(got.true_labels.iter().zip(&got.noisy_labels).all(|(t, n)| n == t || *n == (t + 1) % 4));
    assert!(got.clean_mask.iter().any(|c| !c));
}

#[test]
fn inject_rejects_bad_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(jumpsel(&["gen-data", "--classes", "3", "--dim", "4", "--n-per-class", "10", "--out-dir", d]).status.success());
    let train = dir.path().join("train.csv");
    let out = jumpsel(&[
        "inject", "--input", train.to_str().unwrap(), "--classes", "3", "--kind", "symmetric",
        "--epsilon", "1.5", "--out", dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[config]: "));
}

#[test]
fn missing_input_is_an_io_exit() {
    let out = jumpsel(&[
        "inject", "--input", "/nonexistent/train.csv", "--classes", "3", "--kind", "symmetric",
        "--epsilon", "0.2", "--out", "/tmp/never.csv",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).starts_with("error[io]: "));
}

#[test]
fn unknown_config_key_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("epochs = 3", "epochs = 3\nepoch_count = 4"));
    let out = jumpsel(&["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error[config]: ") && err.contains("epoch_count"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn train_compare_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let runs = dir.path().join("runs");
    let out = jumpsel(&["compare", "--config", &cfg, "--out-dir", runs.to_str().unwrap(), "--jobs", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("jump_update") && table.contains("standard"));

    for cell in ["standard_r1_seed4", "jump_update_r1_seed4"] {
        for file in ["epochs.jsonl", "summary.json", "curves.csv", "model.bin"] {
            assert!(runs.join(cell).join(file).is_file(), "{cell}/{file}");
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs.join("jump_update_r1_seed4/summary.json")).unwrap()).unwrap();
    for key in [
        "config_hash", "seed", "strategy", "final_acc", "last10_mean_acc", "mean_sel_f1",
        "mean_temporal_iou", "mean_cross_iou", "mean_epoch_ms",
    ] {
        assert!(summary.get(key).is_some(), "{key}");
    }

    let before = fs::read_to_string(runs.join("comparison.csv")).unwrap();
    fs::remove_file(runs.join("comparison.csv")).unwrap();
    let out = jumpsel(&["report", "--dir", runs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(runs.join("comparison.csv")).unwrap(), before);
}

#[test]
fn compare_needs_two_combinations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace(r#"["standard", "jump_update"]"#, r#"["standard"]"#));
    let out = jumpsel(&["compare", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_dir_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace(r#"["standard", "jump_update"]"#, r#"["jump_update"]"#));
    let target = dir.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_jumpsel"))
        .args(["train", "--config", &cfg, "--jobs", "1"])
        .env("JUMPSEL_OUT_DIR", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(target.join("jump_update_r1_seed4/summary.json").is_file());
    assert!(!dir.path().join("runs").exists());
}
