//! End-to-end checks of the run-directory contract and the command-line
//! surface (exit codes, artifact inventory, determinism of outputs).

use std::path::Path;
use std::process::Command;

use gpmvc::checkpoint::load_checkpoint;
use gpmvc::dataio::{load_dataset, make_partial_split, parse_mask, write_dataset_dir};
use gpmvc::networks::NetworkConfig;
use gpmvc::synth;
use gpmvc::trainer::{
    read_metrics, read_run_config, run_pipeline_with_split, RunSink, TrainConfig,
};

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs_per_step: 3,
        batch_size: 32,
        learning_rate: 5e-4,
        seed,
        network: NetworkConfig {
            latent_dim: 6,
            encoder_hidden: vec![16, 12],
            discriminator_hidden: [12, 6],
            ..NetworkConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn write_small_dataset(dir: &Path, seed: u64) -> std::path::PathBuf {
    let ds = synth::SynthSpec {
        name: "pipe".into(),
        samples: 60,
        classes: 3,
        dims: vec![9, 7],
        latent_dim: 4,
        cluster_sep: 5.0,
        within_scatter: 0.5,
        feature_noise: 0.02,
        confusions: vec![vec![], vec![]],
        confusion_residual: 1.0,
        seed,
    }
    .generate()
    .unwrap();
    write_dataset_dir(dir, &ds.name, &ds.views, &ds.labels, ds.k, None).unwrap();
    dir.join("manifest.json")
}

#[test]
fn run_directory_contains_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_small_dataset(&tmp.path().join("data"), 5);
    let dataset = load_dataset(&manifest).unwrap();
    let split = make_partial_split(&dataset, 0.6, 5).unwrap();
    let run_dir = tmp.path().join("run");
    let sink = RunSink {
        dir: run_dir.clone(),
        dataset_path: Some(manifest.clone()),
    };
    let outcome =
        run_pipeline_with_split(&dataset, &split, &small_config(5), Some(&sink)).unwrap();

    for file in ["config.json", "mask.json", "checkpoint.bin", "train_log.csv", "metrics.json"] {
        assert!(run_dir.join(file).is_file(), "missing {file}");
    }
    for v in 0..2 {
        assert!(run_dir.join(format!("imputed/view_{v}.csv")).is_file());
    }

    // metrics.json carries the contract keys and the learned view weights.
    let metrics = read_metrics(&run_dir.join("metrics.json")).unwrap();
    assert_eq!(metrics.mode, "ALL");
    assert_eq!(metrics.ratio, 0.6);
    assert_eq!(metrics.beta.len(), 2);
    assert!((metrics.beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(metrics.acc, outcome.result.acc);

    // The mask file round-trips to the split that produced the run.
    let mask_bytes = std::fs::read(run_dir.join("mask.json")).unwrap();
    assert_eq!(parse_mask(&mask_bytes).unwrap(), split);

    // The checkpoint decodes back to matching shapes and centroids.
    let ckpt = load_checkpoint(&run_dir.join("checkpoint.bin")).unwrap();
    assert_eq!(ckpt.meta.dims, dataset.dims());
    assert_eq!(ckpt.meta.k, dataset.k);
    assert_eq!(
        ckpt.centroids.as_ref().unwrap(),
        &outcome.cluster.centroids
    );

    // The config echo records the dataset path for downstream tooling.
    let info = read_run_config(&run_dir.join("config.json")).unwrap();
    assert_eq!(info.dataset, "pipe");
    assert_eq!(info.dataset_path.as_deref(), Some(manifest.as_path()));

    // train_log.csv has one row per epoch per step plus a header.
    let log = std::fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3 * 3);
    assert!(log.starts_with("epoch,step,l_ae,d_loss,g_loss,l_cyc,l_fu,l_kl,total"));
}

#[test]
fn image_runs_dump_sample_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synth::image_like(3).unwrap();
    let dir = tmp.path().join("data");
    write_dataset_dir(
        &dir,
        &ds.name,
        &ds.views,
        &ds.labels,
        ds.k,
        Some(ds.image_shapes.clone()),
    )
    .unwrap();
    let dataset = load_dataset(&dir.join("manifest.json")).unwrap();
    let split = make_partial_split(&dataset, 0.5, 3).unwrap();
    let run_dir = tmp.path().join("run");
    let sink = RunSink {
        dir: run_dir.clone(),
        dataset_path: None,
    };
    run_pipeline_with_split(&dataset, &split, &small_config(3), Some(&sink)).unwrap();
    assert!(run_dir.join("generated_samples/view_0_from_1.png").is_file());
    assert!(run_dir.join("generated_samples/view_1_from_0.png").is_file());
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

fn gpmvc_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpmvc"))
}

#[test]
fn cli_mask_is_deterministic_and_validates_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_small_dataset(&tmp.path().join("data"), 7);

    let mask_a = tmp.path().join("a.json");
    let mask_b = tmp.path().join("b.json");
    for out in [&mask_a, &mask_b] {
        let status = gpmvc_cmd()
            .args(["mask", "--data"])
            .arg(&manifest)
            .args(["--ratio", "0.5", "--seed", "7", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        std::fs::read(&mask_a).unwrap(),
        std::fs::read(&mask_b).unwrap(),
        "same (ratio, seed) must produce identical mask bytes"
    );

    // ratio 1.0 -> empty unpaired map.
    let full = tmp.path().join("full.json");
    let status = gpmvc_cmd()
        .args(["mask", "--data"])
        .arg(&manifest)
        .args(["--ratio", "1.0", "--seed", "1", "--out"])
        .arg(&full)
        .status()
        .unwrap();
    assert!(status.success());
    let split = parse_mask(&std::fs::read(&full).unwrap()).unwrap();
    assert!(split.unpaired.is_empty());

    // Out-of-range ratio: validation exit code and a pointed message.
    let output = gpmvc_cmd()
        .args(["mask", "--data"])
        .arg(&manifest)
        .args(["--ratio", "1.5", "--seed", "0", "--out"])
        .arg(tmp.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("ratio must be in [0,1]"), "stderr: {stderr}");
}

#[test]
fn cli_run_report_and_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synth::image_like(9).unwrap();
    let data_dir = tmp.path().join("data");
    write_dataset_dir(
        &data_dir,
        &ds.name,
        &ds.views,
        &ds.labels,
        ds.k,
        Some(ds.image_shapes.clone()),
    )
    .unwrap();
    let manifest = data_dir.join("manifest.json");

    let config_path = tmp.path().join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_vec_pretty(&small_config(9)).unwrap(),
    )
    .unwrap();

    let mask = tmp.path().join("mask.json");
    assert!(gpmvc_cmd()
        .args(["mask", "--data"])
        .arg(&manifest)
        .args(["--ratio", "0.5", "--seed", "9", "--out"])
        .arg(&mask)
        .status()
        .unwrap()
        .success());

    // Missing mask file: runtime failure exit code.
    let output = gpmvc_cmd()
        .args(["run", "--data"])
        .arg(&manifest)
        .args(["--mask"])
        .arg(tmp.path().join("missing.json"))
        .args(["--out"])
        .arg(tmp.path().join("never"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));

    let run_dir = tmp.path().join("runs/one");
    let output = gpmvc_cmd()
        .args(["run", "--data"])
        .arg(&manifest)
        .arg("--mask")
        .arg(&mask)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(output.status.success());
    let metrics = read_metrics(&run_dir.join("metrics.json")).unwrap();
    assert!(metrics.acc > 0.0 && metrics.acc <= 1.0);

    // Baseline run writes metrics.json with its own mode tag.
    let base_dir = tmp.path().join("runs/base");
    assert!(gpmvc_cmd()
        .args(["run", "--baseline", "--data"])
        .arg(&manifest)
        .arg("--mask")
        .arg(&mask)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&base_dir)
        .status()
        .unwrap()
        .success());
    assert_eq!(
        read_metrics(&base_dir.join("metrics.json")).unwrap().mode,
        "mean_impute_baseline"
    );

    // Report over the runs directory: table plus both curve files.
    let report_dir = tmp.path().join("report");
    let output = gpmvc_cmd()
        .args(["report", "--runs"])
        .arg(tmp.path().join("runs"))
        .args(["--format", "md", "--plots", "--out"])
        .arg(&report_dir)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(report_dir.join("acc_table.md").is_file());
    assert!(report_dir.join("nmi.svg").is_file());
    assert!(report_dir.join("purity.svg").is_file());
    let table = std::fs::read_to_string(report_dir.join("acc_table.md")).unwrap();
    assert!(table.contains('|'), "markdown table uses pipes: {table}");

    // Sample dump: 8 columns from the stored dataset path.
    let grid = tmp.path().join("grid.png");
    let output = gpmvc_cmd()
        .args(["dump-generated", "--run"])
        .arg(&run_dir)
        .args(["--view", "1", "--count", "8", "--out"])
        .arg(&grid)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "dump failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(grid.is_file());

    // count = 0 is a validation error.
    let output = gpmvc_cmd()
        .args(["dump-generated", "--run"])
        .arg(&run_dir)
        .args(["--view", "1", "--count", "0"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Empty report directory is an error.
    let output = gpmvc_cmd()
        .args(["report", "--runs"])
        .arg(tmp.path().join("empty-nothing"))
        .output()
        .unwrap();
    assert_ne!(output.status.code(), Some(0));
}

#[test]
fn cli_dump_rejects_non_image_view() {
    let tmp = tempfile::tempdir().unwrap();
    // Feature widths 9 and 7: neither is a perfect square.
    let manifest = write_small_dataset(&tmp.path().join("data"), 11);
    let mask = tmp.path().join("mask.json");
    assert!(gpmvc_cmd()
        .args(["mask", "--data"])
        .arg(&manifest)
        .args(["--ratio", "0.8", "--seed", "11", "--out"])
        .arg(&mask)
        .status()
        .unwrap()
        .success());
    let config_path = tmp.path().join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_vec_pretty(&small_config(11)).unwrap(),
    )
    .unwrap();
    let run_dir = tmp.path().join("run");
    assert!(gpmvc_cmd()
        .args(["run", "--data"])
        .arg(&manifest)
        .arg("--mask")
        .arg(&mask)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&run_dir)
        .status()
        .unwrap()
        .success());

    let output = gpmvc_cmd()
        .args(["dump-generated", "--run"])
        .arg(&run_dir)
        .args(["--view", "0", "--count", "4"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("image metadata"), "stderr: {stderr}");
}

#[test]
fn cli_sweep_aggregates_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_small_dataset(&tmp.path().join("data"), 13);
    let out_dir = tmp.path().join("sweep");
    let spec = serde_json::json!({
        "data": manifest,
        "out": out_dir,
        "ratios": [0.5],
        "repeats": 2,
        "base_seed": 13,
        "modes": ["ALL"],
        "config": small_config(13),
        "workers": 2,
    });
    let spec_path = tmp.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_vec_pretty(&spec).unwrap()).unwrap();

    let output = gpmvc_cmd()
        .args(["sweep", "--spec"])
        .arg(&spec_path)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "sweep failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(out_dir.join("summary.csv").is_file());
    assert!(out_dir.join("acc_table.csv").is_file());
    assert!(out_dir.join("nmi.svg").is_file());

    // Two run directories, one per repeat; aggregation matches recomputing
    // from their metrics files.
    let metrics = gpmvc::report::collect_metrics(&out_dir.join("runs")).unwrap();
    assert_eq!(metrics.len(), 2);
    let cells = gpmvc::report::aggregate(&metrics);
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].runs, 2);
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.contains(&format!("{}", cells[0].acc_mean)));
}
