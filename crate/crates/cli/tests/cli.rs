use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn pagkit(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pagkit"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("PAGKIT_DATA", data_dir())
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

const FAMILY: &str = r#"
seed = 5
[data]
dataset = "mnist"
train_limit = 256
validation_limit = 64
[model]
architecture = "mnist_cnn"
widths = [2, 4, 8]
[train]
mode = "adversarial"
epsilon_or_sigma = 0.1
batch_size = 16
total_steps = 6
learning_rate = 0.05
log_every = 2
[family]
strengths = [0.05, 0.1]
"#;

const ROBUSTNESS: &str = r#"
[data]
dataset = "mnist"
validation_limit = 32
[eval]
epsilons = [0.0, 0.1, 0.3]
steps = 3
"#;

#[test]
fn bad_configs_exit_with_code_two_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.toml", FAMILY.replace("train_limit", "trainlimit")),
        ("negative.toml", FAMILY.replace("[0.05, 0.1]", "[-0.05, 0.1]")),
        ("zero_batch.toml", FAMILY.replace("batch_size = 16", "batch_size = 0")),
        ("arch.toml", FAMILY.replace("mnist_cnn", "resnet_9000")),
    ];
    for (name, text) in cases {
        let config = write_config(tmp.path(), name, &text);
        let out = tmp.path().join(format!("out_{name}"));
        let r = pagkit(&["train"], &config, &out);
        assert_eq!(r.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(!out.exists(), "{name} created outputs");
    }
    let missing = pagkit(&["train"], &tmp.path().join("absent.toml"), &tmp.path().join("o"));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn negative_epsilon_in_sweep_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "r.toml", &ROBUSTNESS.replace("0.0, 0.1", "0.0, -0.1"));
    let r = pagkit(&["eval-robustness"], &config, &tmp.path().join("out"));
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn family_train_then_sweep_zero_shot_and_visualize() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), "family.toml", FAMILY);
    let r = pagkit(&["train", "--deterministic"], &config, &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(files(&out.join("checkpoints")), ["at-0.05.pgck", "at-0.1.pgck", "natural.pgck"]);
    assert_eq!(files(&out.join("logs")).len(), 3);
    let tables = files(&out.join("tables"));
    assert_eq!(tables.len(), 2);
    let csv = fs::read_to_string(out.join("tables").join(&tables[0])).unwrap();
    assert!(csv.starts_with("# config_digest: "), "{csv}");
    assert!(csv.contains("# seed: 5"));

    let sweep = write_config(tmp.path(), "r.toml", ROBUSTNESS);
    let r = pagkit(&["eval-robustness", "--deterministic"], &sweep, &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv_name = files(&out.join("tables")).into_iter().find(|n| n.starts_with("robustness_mnist_") && n.ends_with(".csv")).unwrap();
    let csv = fs::read_to_string(out.join("tables").join(csv_name)).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 4, "{csv}");
    assert!(body[1].starts_with("Natural,"), "{csv}");
    assert_eq!(body[0].split(',').count(), 4);

    let zs = write_config(tmp.path(), "zs.toml", "[source]\ndataset = \"mnist\"\nvalidation_limit = 40\n[target]\ndataset = \"mnist\"\nvalidation_limit = 40\n");
    let r = pagkit(&["zero-shot", "--deterministic"], &zs, &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv_name = files(&out.join("tables")).into_iter().find(|n| n.starts_with("zero_shot_mnist-to-mnist_") && n.ends_with(".csv")).unwrap();
    let csv = fs::read_to_string(out.join("tables").join(csv_name)).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[2], cells[3], "identity transfer changed accuracy: {row}");
    }

    let vis = write_config(
        tmp.path(),
        "vis.toml",
        "[data]\ndataset = \"mnist\"\nvalidation_limit = 20\n[visualize]\ncount = 2\nnorms = [\"linf\"]\nalignment_images = 10\n",
    );
    let r = pagkit(&["visualize", "--deterministic"], &vis, &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let figures = files(&out.join("figures"));
    assert_eq!(figures.iter().filter(|n| n.ends_with(".png")).count(), 2, "{figures:?}");
    assert_eq!(figures.iter().filter(|n| n.ends_with(".json")).count(), 2, "{figures:?}");
    let png = figures.iter().find(|n| n.starts_with("gradients_") && n.ends_with(".png")).unwrap();
    let bytes = fs::read(out.join("figures").join(png)).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
}

#[test]
fn deterministic_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "family.toml", &FAMILY.replace("[0.05, 0.1]", "[0.1]"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let r = pagkit(&["train", "--deterministic"], &config, out);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    for sub in ["checkpoints", "tables", "logs"] {
        let names = files(&a.join(sub));
        assert!(!names.is_empty());
        assert_eq!(names, files(&b.join(sub)));
        for n in names {
            assert_eq!(fs::read(a.join(sub).join(&n)).unwrap(), fs::read(b.join(sub).join(&n)).unwrap(), "{sub}/{n} differs");
        }
    }
}

#[test]
fn seed_override_changes_digest_in_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "one.toml", &FAMILY.replace("[family]\nstrengths = [0.05, 0.1]\n", ""));
    let out = tmp.path().join("out");
    let r = pagkit(&["train", "--deterministic", "--seed", "11"], &config, &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(files(&out.join("checkpoints")), ["at-0.1.pgck"]);
    let table = files(&out.join("tables")).into_iter().find(|n| n.ends_with(".md")).unwrap();
    let md = fs::read_to_string(out.join("tables").join(table)).unwrap();
    assert!(md.contains("seed: 11"), "{md}");
}

#[test]
fn failed_member_gives_partial_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "family.toml", FAMILY);
    let out = tmp.path().join("out");
    // a directory where a checkpoint should go makes that member's save fail
    fs::create_dir_all(out.join("checkpoints").join("at-0.05.pgck")).unwrap();
    let r = pagkit(&["train"], &config, &out);
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
    let checkpoints = files(&out.join("checkpoints"));
    assert!(checkpoints.contains(&"natural.pgck".to_string()));
    assert!(checkpoints.contains(&"at-0.1.pgck".to_string()));
    let csv = files(&out.join("tables")).into_iter().find(|n| n.ends_with(".csv")).unwrap();
    let text = fs::read_to_string(out.join("tables").join(csv)).unwrap();
    assert!(text.lines().any(|l| l == "AT-0.05,failed"), "{text}");
}

#[test]
fn wsol_fixture_reports_each_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "wsol.toml",
        r#"
[fixture]
classes = 3
train_samples = 48
validation_samples = 12
side = 16
[model]
architecture = "cam_backbone"
widths = [4, 4, 8, 8]
[train]
mode = "standard"
batch_size = 12
total_steps = 4
learning_rate = 0.05
[wsol]
thresholds = [0.2, 0.5]
annotate = 3
"#,
    );
    let out = tmp.path().join("out");
    let r = pagkit(&["wsol", "--deterministic"], &config, &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let tables = files(&out.join("tables"));
    assert_eq!(tables.iter().filter(|n| n.starts_with("wsol_predictions_")).count(), 2, "{tables:?}");
    let csv = tables.iter().find(|n| n.starts_with("wsol_fixture_") && n.ends_with(".csv")).unwrap();
    let text = fs::read_to_string(out.join("tables").join(csv)).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r[2] <= r[1].min(r[3]) + 1e-9, "{r:?}");
    }
    assert_eq!(files(&out.join("figures")).len(), 1);

    let bad = write_config(tmp.path(), "bad.toml", &fs::read_to_string(&config).unwrap().replace("[0.2, 0.5]", "[0.2, 1.5]"));
    assert_eq!(pagkit(&["wsol"], &bad, &tmp.path().join("o2")).status.code(), Some(2));
}
