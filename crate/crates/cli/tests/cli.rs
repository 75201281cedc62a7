//! Exit codes and a small end-to-end run of the `snn` binary.

use std::path::Path;
use std::process::{Command, Output};

use snn_core::mnist::{TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS};
use snn_core::{ImageSet, LabelSet};

fn snn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snn"))
        .args(args)
        .env_remove("SNN_SEED")
        .env_remove("SNN_DATA_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// Writes a tiny IDX data set of horizontal-bar digits.
fn write_bars(dir: &Path, count: usize) {
    let mut pixels = vec![0u8; count * 784];
    let mut labels = Vec::new();
    for k in 0..count {
        let label = (k % 10) as u8;
        let row = 4 + 2 * label as usize;
        for c in 4..24 {
            pixels[k * 784 + row * 28 + c] = 255;
        }
        labels.push(label);
    }
    let images = ImageSet { count, rows: 28, cols: 28, pixels };
    let labels = LabelSet { count, labels };
    for (i, l) in [(TRAIN_IMAGES, TRAIN_LABELS), (TEST_IMAGES, TEST_LABELS)] {
        std::fs::write(dir.join(i), images.to_idx_bytes()).unwrap();
        std::fs::write(dir.join(l), labels.to_idx_bytes()).unwrap();
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(code(&snn(&["train", "--out", out])), 2);
    assert_eq!(code(&snn(&["search", "--budget", "0", "--out", out])), 2);
    assert_eq!(code(&snn(&["search", "--layers", "10,10", "--budget", "1", "--out", out])), 2);
    assert_eq!(code(&snn(&["frobnicate"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, "{}").unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join(TRAIN_IMAGES), b"not an idx file").unwrap();
    std::fs::write(data.join(TRAIN_LABELS), b"nope").unwrap();
    let out = snn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_then_eval_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_bars(&data, 30);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 3}"#).unwrap();
    let models = tmp.path().join("models");
    let d = data.to_str().unwrap();
    let out = snn(&[
        "train", "--config", cfg.to_str().unwrap(), "--n-train", "10", "--workers", "2",
        "--data-dir", d, "--out", models.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(models.join("worker_000.snnw").exists());
    assert!(models.join("worker_001.snnw").exists());
    assert!(models.join("manifest.json").exists());

    let eval = tmp.path().join("eval");
    let out = snn(&[
        "eval", "--models", models.to_str().unwrap(), "--n-test", "20",
        "--data-dir", d, "--out", eval.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(metrics.contains(",20,"));
}
