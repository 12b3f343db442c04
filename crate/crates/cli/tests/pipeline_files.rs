//! End-to-end checks of the command layer's file artifacts on a small scene.

use std::path::PathBuf;

use rfmap_cli::commands::{cmd_baselines, cmd_export, cmd_generate, cmd_run, ExportKind};
use rfmap_cli::config::RunConfig;
use rfmap_core::eval::ParamKind;
use rfmap_core::geoscene::read_dataset;

fn small_config(seed: u64) -> RunConfig {
    let mut config = RunConfig::default();
    config.seed = seed;
    config.scene.size_m = 24.0;
    config.scene.n_walls = 4;
    config.scene.n_scatterers = 2;
    config.grid_spacing = 1.5;
    config.sampling_rate = 0.25;
    config.pinn_epochs = 25;
    config.gnn_epochs = 50;
    config.batch_size = 64;
    config
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("rfmap-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn generate_writes_deterministic_dataset() {
    let config = small_config(3);
    let dir_a = fresh_dir("gen-a");
    let dir_b = fresh_dir("gen-b");
    cmd_generate(&config, &dir_a).unwrap();
    cmd_generate(&config, &dir_b).unwrap();
    let a = std::fs::read(dir_a.join("dataset.csv")).unwrap();
    let b = std::fs::read(dir_b.join("dataset.csv")).unwrap();
    assert_eq!(a, b, "same config must give byte-identical datasets");
    let ds = read_dataset(&dir_a.join("dataset.csv")).unwrap();
    assert_eq!(ds.len(), 16 * 16, "24 m at 1.5 m spacing is a 16x16 grid");
}

#[test]
fn run_artifacts_and_exports() {
    let config = small_config(5);
    let dir = fresh_dir("run");
    cmd_run(&config, &dir).unwrap();
    for file in [
        "scene.json",
        "dataset.csv",
        "split.json",
        "predictions.csv",
        "predictions_pinn_only.csv",
        "pinn_history.csv",
        "gnn_history.csv",
        "pinn_checkpoint.json",
        "gnn_checkpoint.json",
        "metrics.json",
        "run_manifest.json",
    ] {
        assert!(dir.join(file).exists(), "missing {file}");
    }

    // The history CSV follows the documented column layout.
    let history = std::fs::read_to_string(dir.join("pinn_history.csv")).unwrap();
    assert!(history.starts_with(
        "epoch,loss_total,loss_sup,loss_power,loss_delay,loss_angle,loss_consist,loss_type,lr,lambda_phy,lambda_type"
    ));

    // Exports: heatmap, cdf set, cir at a coordinate, graph edges.
    let written = cmd_export(
        &config,
        &dir,
        &ExportKind::Heatmap {
            param: ParamKind::Power,
            path_index: 1,
        },
    )
    .unwrap();
    assert_eq!(written.len(), 1);
    let written = cmd_export(&config, &dir, &ExportKind::Cdf).unwrap();
    assert_eq!(written.len(), 4, "one CDF file per parameter");
    let written = cmd_export(
        &config,
        &dir,
        &ExportKind::Cir {
            coords: (8.0, 8.0),
        },
    )
    .unwrap();
    assert!(written.len() >= 2, "truth plus at least one method");
    let written = cmd_export(&config, &dir, &ExportKind::Graph).unwrap();
    assert_eq!(written.len(), 1);
}

#[test]
fn pinn_only_file_matches_pipeline_intermediate() {
    let config = small_config(9);
    let run_dir = fresh_dir("match-run");
    let bl_dir = fresh_dir("match-baselines");
    cmd_run(&config, &run_dir).unwrap();
    cmd_baselines(&config, &bl_dir, &["pinn_only".to_string()]).unwrap();

    // The pipeline's intermediate predictor output at the unknown points
    // must equal the predictor-only baseline exactly (same stage seeds).
    let full = read_dataset(&run_dir.join("predictions_pinn_only.csv")).unwrap();
    let only = read_dataset(&bl_dir.join("predictions_pinn_only.csv")).unwrap();
    let split: rfmap_core::geoscene::SplitSpec =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("split.json")).unwrap())
            .unwrap();
    for (row, &idx) in split.unknown_indices.iter().enumerate() {
        assert_eq!(
            full.records[idx], only.records[row],
            "intermediate and baseline predictor outputs must match"
        );
    }
}

#[test]
fn unknown_method_is_usage_error() {
    let config = small_config(1);
    let dir = fresh_dir("bad-method");
    let err = cmd_baselines(&config, &dir, &["krigging".to_string()]).unwrap_err();
    assert_eq!(rfmap_cli::exit_code_for(&err), 2);
}
