//! The pipeline commands behind the CLI verbs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use rfmap_core::baselines::{
    proposed_as_baseline, run_gnn_only, run_kriging, run_pinn_only, run_separate, BaselineResult,
};
use rfmap_core::error::{invalid_argument, Error, Result};
use rfmap_core::eval::{
    error_cdf, export_heatmap, reconstruct_cir, Metrics, ParamKind, PARAM_NAMES,
};
use rfmap_core::geom::Point2;
use rfmap_core::geoscene::{
    generate_dataset, read_dataset, read_scene, sample_split, write_dataset, write_scene,
    write_split, Dataset, MultipathRecord, Scene, SplitSpec,
};
use rfmap_core::graph::build_knn;
use rfmap_core::ndiff::grad_check;
use rfmap_core::norm::NormStats;
use rfmap_core::pinn::{
    build_samples, composite_loss_grad, CompositeMode, PinnParams,
};
use rfmap_core::pipeline::{coords_at, fit_norm, run_pipeline, PipelineArtifacts};

use crate::artifacts::{
    predictions_to_records, read_json, records_as_dataset, write_gnn_history, write_json,
    write_pinn_history, GnnCheckpoint, MetricsReport, PinnCheckpoint,
};
use crate::config::RunConfig;

pub const METHODS: [&str; 5] = ["kriging", "separate", "gnn_only", "pinn_only", "proposed"];

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn missing(path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("missing artifact: {}", path.display()),
    ))
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(missing(&path))
    }
}

/// Scene + dataset + split exactly as every command sees them for a given
/// config; all three are pure functions of the config.
pub fn materialize_inputs(config: &RunConfig) -> Result<(Scene, Dataset, SplitSpec)> {
    let scene = config.resolve_scene()?;
    let dataset = generate_dataset(&scene, config.grid_spacing, config.l_paths)?;
    let split = sample_split(&dataset, config.sampling_rate, config.seed)?;
    Ok((scene, dataset, split))
}

/// `generate`: write the scene JSON and ground-truth dataset CSV.
pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let (scene, dataset, split) = materialize_inputs(config)?;
    write_scene(&scene, &out.join("scene.json"))?;
    write_dataset(&dataset, &out.join("dataset.csv"))?;
    write_split(&split, &out.join("split.json"))?;
    println!(
        "generated {} records over {} walls / {} scatterers -> {}",
        dataset.len(),
        scene.walls.len(),
        scene.scatterers.len(),
        out.display()
    );
    Ok(())
}

fn metrics_on_unknown(
    dataset: &Dataset,
    split: &SplitSpec,
    predictions_unknown: &[f64],
    norm: &NormStats,
) -> Result<Metrics> {
    let truth: Vec<&MultipathRecord> = split
        .unknown_indices
        .iter()
        .map(|&i| &dataset.records[i])
        .collect();
    rfmap_core::eval::compute_metrics(predictions_unknown, &truth, dataset.l_paths, norm)
}

fn gather_unknown(all: &[f64], width: usize, split: &SplitSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(split.unknown_indices.len() * width);
    for &i in &split.unknown_indices {
        out.extend_from_slice(&all[i * width..(i + 1) * width]);
    }
    out
}

/// Shared tail of `run`: write every pipeline artifact into the run dir.
fn write_run_artifacts(
    config: &RunConfig,
    out: &Path,
    scene: &Scene,
    dataset: &Dataset,
    split: &SplitSpec,
    artifacts: &PipelineArtifacts,
) -> Result<Metrics> {
    let all_coords: Vec<Point2> = dataset.records.iter().map(|r| r.coords).collect();

    let refined_records = predictions_to_records(
        &all_coords,
        &artifacts.y_refined_all,
        dataset.l_paths,
        &artifacts.norm,
        scene,
    )?;
    write_dataset(
        &records_as_dataset(refined_records, dataset.l_paths, dataset.grid_spacing),
        &out.join("predictions.csv"),
    )?;
    let pinn_records = predictions_to_records(
        &all_coords,
        &artifacts.y_pinn_all,
        dataset.l_paths,
        &artifacts.norm,
        scene,
    )?;
    write_dataset(
        &records_as_dataset(pinn_records, dataset.l_paths, dataset.grid_spacing),
        &out.join("predictions_pinn_only.csv"),
    )?;

    write_pinn_history(&artifacts.pinn_history, &out.join("pinn_history.csv"))?;
    write_gnn_history(&artifacts.gnn_history, &out.join("gnn_history.csv"))?;
    let hash = config.hash();
    write_json(
        &PinnCheckpoint {
            version: 1,
            config_hash: hash.clone(),
            weights: config.pipeline_config().weights,
            params: artifacts.pinn.clone(),
        },
        &out.join("pinn_checkpoint.json"),
    )?;
    write_json(
        &GnnCheckpoint {
            version: 1,
            config_hash: hash,
            params: artifacts.gnn.clone(),
        },
        &out.join("gnn_checkpoint.json"),
    )?;

    let width = 4 * dataset.l_paths;
    let unknown_pred = gather_unknown(&artifacts.y_refined_all, width, split);
    let metrics = metrics_on_unknown(dataset, split, &unknown_pred, &artifacts.norm)?;
    write_json(
        &MetricsReport {
            method: "proposed".into(),
            sampling_rate: config.sampling_rate,
            seed: config.seed,
            evaluation_set: "unknown points only".into(),
            metrics: metrics.clone(),
        },
        &out.join("metrics.json"),
    )?;
    Ok(metrics)
}

/// `run`: the full construction pipeline plus all artifacts.
pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<Metrics> {
    ensure_dir(out)?;
    let started = Instant::now();
    let (scene, dataset, split) = materialize_inputs(config)?;
    write_scene(&scene, &out.join("scene.json"))?;
    write_dataset(&dataset, &out.join("dataset.csv"))?;
    write_split(&split, &out.join("split.json"))?;

    let artifacts = run_pipeline(&scene, &dataset, &split, &config.pipeline_config())?;
    let metrics = write_run_artifacts(config, out, &scene, &dataset, &split, &artifacts)?;

    #[derive(Serialize)]
    struct RunManifest<'c> {
        command: &'static str,
        config: &'c RunConfig,
        config_hash: String,
        pinn_epochs_run: usize,
        gnn_epochs_run: usize,
        wall_seconds: f64,
    }
    write_json(
        &RunManifest {
            command: "run",
            config,
            config_hash: config.hash(),
            pinn_epochs_run: artifacts.pinn_history.len(),
            gnn_epochs_run: artifacts.gnn_history.len(),
            wall_seconds: started.elapsed().as_secs_f64(),
        },
        &out.join("run_manifest.json"),
    )?;
    println!(
        "run finished: nmse {:.5} (mse {:.5}, rmse {:.5}) over {} unknown points",
        metrics.overall.nmse,
        metrics.overall.mse,
        metrics.overall.rmse,
        split.unknown_indices.len()
    );
    Ok(metrics)
}

/// `baselines`: run the requested comparison methods and write the table.
pub fn cmd_baselines(config: &RunConfig, out: &Path, methods: &[String]) -> Result<Vec<(String, Metrics)>> {
    for m in methods {
        if !METHODS.contains(&m.as_str()) {
            return Err(invalid_argument(format!(
                "unknown method {m:?}; expected one of {METHODS:?}"
            )));
        }
    }
    ensure_dir(out)?;
    let (scene, dataset, split) = materialize_inputs(config)?;
    write_scene(&scene, &out.join("scene.json"))?;
    write_dataset(&dataset, &out.join("dataset.csv"))?;
    write_split(&split, &out.join("split.json"))?;
    let norm = fit_norm(&dataset, &split)?;
    let pipeline_config = config.pipeline_config();

    let mut rows: Vec<(String, Metrics)> = Vec::new();
    let mut manifest: Vec<(String, f64)> = Vec::new();
    for method in methods {
        let result: BaselineResult = match method.as_str() {
            "kriging" => run_kriging(&dataset, &split, &norm)?,
            "separate" => run_separate(&scene, &dataset, &split, &pipeline_config)?,
            "gnn_only" => run_gnn_only(&dataset, &split, &norm, &pipeline_config)?,
            "pinn_only" => run_pinn_only(&scene, &dataset, &split, &pipeline_config)?,
            "proposed" => {
                let started = Instant::now();
                let artifacts = run_pipeline(&scene, &dataset, &split, &pipeline_config)?;
                write_run_artifacts(config, out, &scene, &dataset, &split, &artifacts)?;
                proposed_as_baseline(&artifacts, &dataset, &split, started.elapsed().as_secs_f64())
            }
            _ => unreachable!("validated above"),
        };
        let metrics = metrics_on_unknown(&dataset, &split, &result.predictions_unknown, &norm)?;
        // Predictions at the unknown points in the dataset CSV schema.
        let unknown_coords = coords_at(&dataset, &split.unknown_indices);
        let records = predictions_to_records(
            &unknown_coords,
            &result.predictions_unknown,
            dataset.l_paths,
            &norm,
            &scene,
        )?;
        write_dataset(
            &records_as_dataset(records, dataset.l_paths, dataset.grid_spacing),
            &out.join(format!("predictions_{method}.csv")),
        )?;
        write_json(
            &MetricsReport {
                method: method.clone(),
                sampling_rate: config.sampling_rate,
                seed: config.seed,
                evaluation_set: "unknown points only".into(),
                metrics: metrics.clone(),
            },
            &out.join(format!("metrics_{method}.json")),
        )?;
        manifest.push((method.clone(), result.wall_seconds));
        rows.push((method.clone(), metrics));
    }

    // Comparison table: one row per metric, one column per method.
    let mut table = String::from("metric");
    for (m, _) in &rows {
        table.push_str(&format!(",{m}"));
    }
    table.push('\n');
    for (name, pick) in [
        ("mse", 0usize),
        ("rmse", 1),
        ("nmse", 2),
    ] {
        table.push_str(name);
        for (_, metrics) in &rows {
            let v = match pick {
                0 => metrics.overall.mse,
                1 => metrics.overall.rmse,
                _ => metrics.overall.nmse,
            };
            table.push_str(&format!(",{v}"));
        }
        table.push('\n');
    }
    std::fs::write(out.join("comparison.csv"), table)?;

    #[derive(Serialize)]
    struct BaselineManifest<'c> {
        command: &'static str,
        config: &'c RunConfig,
        methods: Vec<String>,
        wall_seconds: Vec<f64>,
    }
    write_json(
        &BaselineManifest {
            command: "baselines",
            config,
            methods: manifest.iter().map(|(m, _)| m.clone()).collect(),
            wall_seconds: manifest.iter().map(|(_, s)| *s).collect(),
        },
        &out.join("baselines_manifest.json"),
    )?;
    for (m, metrics) in &rows {
        println!(
            "{m:>10}: nmse {:.5}  mse {:.5}  rmse {:.5}",
            metrics.overall.nmse, metrics.overall.mse, metrics.overall.rmse
        );
    }
    Ok(rows)
}

/// `sweep`: repeat the pipeline per sampling rate on a fixed scene.
pub fn cmd_sweep(config: &RunConfig, out: &Path, rates: &[f64]) -> Result<Vec<(f64, Metrics)>> {
    if rates.is_empty() {
        return Err(invalid_argument("sweep needs at least one rate"));
    }
    ensure_dir(out)?;
    let scene = config.resolve_scene()?;
    let dataset = generate_dataset(&scene, config.grid_spacing, config.l_paths)?;
    write_scene(&scene, &out.join("scene.json"))?;
    write_dataset(&dataset, &out.join("dataset.csv"))?;

    let mut rows = Vec::new();
    for &rate in rates {
        let split = sample_split(&dataset, rate, config.seed)?;
        let mut rate_config = config.clone();
        rate_config.sampling_rate = rate;
        let artifacts = run_pipeline(&scene, &dataset, &split, &rate_config.pipeline_config())?;
        let width = 4 * dataset.l_paths;
        let unknown_pred = gather_unknown(&artifacts.y_refined_all, width, &split);
        let metrics = metrics_on_unknown(&dataset, &split, &unknown_pred, &artifacts.norm)?;
        write_json(
            &MetricsReport {
                method: "proposed".into(),
                sampling_rate: rate,
                seed: config.seed,
                evaluation_set: "unknown points only".into(),
                metrics: metrics.clone(),
            },
            &out.join(format!("metrics_rate_{:04}.json", (rate * 1000.0).round() as u64)),
        )?;
        println!("rate {:>5.1}%: nmse {:.5}", rate * 100.0, metrics.overall.nmse);
        rows.push((rate, metrics));
    }

    let mut table = String::from("metric");
    for (rate, _) in &rows {
        table.push_str(&format!(",rate_{rate}"));
    }
    table.push('\n');
    for name in ["mse", "rmse", "nmse"] {
        table.push_str(name);
        for (_, metrics) in &rows {
            let v = match name {
                "mse" => metrics.overall.mse,
                "rmse" => metrics.overall.rmse,
                _ => metrics.overall.nmse,
            };
            table.push_str(&format!(",{v}"));
        }
        table.push('\n');
    }
    std::fs::write(out.join("sweep.csv"), table)?;
    Ok(rows)
}

/// What `export` should produce.
#[derive(Debug, Clone)]
pub enum ExportKind {
    Heatmap { param: ParamKind, path_index: usize },
    Cdf,
    Cir { coords: (f64, f64) },
    Graph,
}

fn load_truth_and_split(run_dir: &Path) -> Result<(Dataset, SplitSpec)> {
    let dataset = read_dataset(&require(run_dir.join("dataset.csv"))?)?;
    let split: SplitSpec = read_json(&require(run_dir.join("split.json"))?)?;
    Ok((dataset, split))
}

/// `export`: plot-ready CSV artifacts from a finished run directory.
pub fn cmd_export(config: &RunConfig, run_dir: &Path, kind: &ExportKind) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match kind {
        ExportKind::Heatmap { param, path_index } => {
            let pred = read_dataset(&require(run_dir.join("predictions.csv"))?)?;
            if *path_index == 0 || *path_index > pred.l_paths {
                return Err(invalid_argument(format!(
                    "path index must be in 1..={}",
                    pred.l_paths
                )));
            }
            let out = run_dir.join(format!("heatmap_{}_path{}.csv", param.name(), path_index));
            export_heatmap(&pred.records, *param, path_index - 1, &out)?;
            written.push(out);
        }
        ExportKind::Cdf => {
            let (dataset, split) = load_truth_and_split(run_dir)?;
            let pred = read_dataset(&require(run_dir.join("predictions.csv"))?)?;
            let truth: Vec<&MultipathRecord> = split
                .unknown_indices
                .iter()
                .map(|&i| &dataset.records[i])
                .collect();
            let width = 4 * dataset.l_paths;
            let mut pred_phys = Vec::with_capacity(truth.len() * width);
            for &i in &split.unknown_indices {
                for p in &pred.records[i].paths {
                    pred_phys.extend([p.power_dbm, p.delay_ns, p.elevation_deg, p.azimuth_deg]);
                }
            }
            for (k, name) in PARAM_NAMES.iter().enumerate() {
                let kind = ParamKind::parse(name).expect("known name");
                let mut out = String::from("path,error,cdf\n");
                for l in 0..dataset.l_paths {
                    for (e, c) in error_cdf(&pred_phys, &truth, dataset.l_paths, kind, l) {
                        out.push_str(&format!("{},{},{}\n", l + 1, e, c));
                    }
                }
                let path = run_dir.join(format!("cdf_{name}.csv"));
                std::fs::write(&path, out)?;
                written.push(path);
                let _ = k;
            }
        }
        ExportKind::Cir { coords } => {
            let scene = read_scene(&require(run_dir.join("scene.json"))?)?;
            let (dataset, split) = load_truth_and_split(run_dir)?;
            let target = Point2::new(coords.0, coords.1);
            let nearest = |records: &[MultipathRecord]| -> usize {
                records
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        a.coords
                            .dist(target)
                            .partial_cmp(&b.coords.dist(target))
                            .unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            };
            let write_cir = |rec: &MultipathRecord, label: &str| -> Result<PathBuf> {
                let cir = reconstruct_cir(rec, scene.f_c_hz);
                let mut out = String::from("delay_ns,magnitude,phase_rad,path_index\n");
                for t in &cir.taps {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        t.delay_ns, t.magnitude, t.phase_rad, t.path_index
                    ));
                }
                let path = run_dir.join(format!("cir_{label}.csv"));
                std::fs::write(&path, out)?;
                Ok(path)
            };
            written.push(write_cir(&dataset.records[nearest(&dataset.records)], "truth")?);
            // Every method with predictions in the run dir.
            let mut sources = vec![("proposed".to_string(), run_dir.join("predictions.csv"))];
            sources.push((
                "pinn_only_intermediate".into(),
                run_dir.join("predictions_pinn_only.csv"),
            ));
            for m in METHODS {
                sources.push((m.to_string(), run_dir.join(format!("predictions_{m}.csv"))));
            }
            for (label, path) in sources {
                if !path.exists() {
                    continue;
                }
                let pred = read_dataset(&path)?;
                written.push(write_cir(&pred.records[nearest(&pred.records)], &label)?);
            }
            let _ = split;
        }
        ExportKind::Graph => {
            let (dataset, _) = load_truth_and_split(run_dir)?;
            let coords: Vec<Point2> = dataset.records.iter().map(|r| r.coords).collect();
            let graph = build_knn(&coords, config.k)?;
            let mut out = String::from("src,dst,dist_m\n");
            for (s, d, dist) in graph.edges() {
                out.push_str(&format!("{s},{d},{dist}\n"));
            }
            let path = run_dir.join("graph_edges.csv");
            std::fs::write(&path, out)?;
            written.push(path);
        }
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(written)
}

/// `grad-check`: finite-difference validation of both networks' gradients,
/// reporting one line per seed per model.
pub fn cmd_grad_check(config: &RunConfig) -> Result<bool> {
    let (scene, dataset, _) = materialize_inputs(&{
        let mut c = config.clone();
        c.scene.size_m = c.scene.size_m.min(24.0);
        c.grid_spacing = c.grid_spacing.max(3.0);
        c
    })?;
    let records: Vec<MultipathRecord> = dataset.records.iter().step_by(7).take(8).cloned().collect();
    let refs: Vec<&MultipathRecord> = records.iter().collect();
    let norm = NormStats::fit(&refs)?;
    let samples = build_samples(&scene, &records, &norm)?;
    let weights = config.pipeline_config().weights;
    let mut all_pass = true;

    for seed in [1u64, 2, 3] {
        let model = PinnParams::init(dataset.l_paths, norm.clone(), seed);
        let loss = |ps: &rfmap_core::ndiff::ParamSet| {
            let m = PinnParams {
                params: ps.clone(),
                l_paths: dataset.l_paths,
                norm: norm.clone(),
            };
            composite_loss_grad(&m, &samples, &weights, 150, 300, CompositeMode::Eval)
                .expect("loss evaluates")
                .0
                .total
        };
        let grad = |ps: &rfmap_core::ndiff::ParamSet| {
            let m = PinnParams {
                params: ps.clone(),
                l_paths: dataset.l_paths,
                norm: norm.clone(),
            };
            composite_loss_grad(&m, &samples, &weights, 150, 300, CompositeMode::Eval)
                .expect("loss evaluates")
                .1
        };
        let report = grad_check(loss, grad, &model.params, 5, 1e-5, 1e-4, seed);
        println!(
            "predictor  seed {seed}: max rel {:.3e} over {} coords -> {}",
            report.max_rel,
            report.checked,
            if report.pass() { "PASS" } else { "FAIL" }
        );
        all_pass &= report.pass();
    }

    for seed in [1u64, 2, 3] {
        use rfmap_core::graph::{gnn_loss_grad, node_features, GnnParams};
        let coords: Vec<Point2> = records.iter().map(|r| r.coords).collect();
        let graph = build_knn(&coords, 3)?;
        let (targets, masks) = {
            let mut t = Vec::new();
            let mut m = Vec::new();
            for r in &records {
                let (tt, mm) = norm.record_targets(r);
                t.extend(tt);
                m.extend(mm);
            }
            (t, m)
        };
        let y0: Vec<f64> = targets.iter().map(|v| v * 0.9 + 0.05).collect();
        let features = node_features(&coords, &y0, 4 * dataset.l_paths, &norm);
        let train_nodes: Vec<usize> = (0..records.len()).collect();
        let model = GnnParams::init(dataset.l_paths, norm.clone(), seed);
        let loss = |ps: &rfmap_core::ndiff::ParamSet| {
            let m = model.with_params(ps.clone());
            gnn_loss_grad(&m, &features, &targets, &masks, &train_nodes, &graph)
                .expect("loss evaluates")
                .0
        };
        let grad = |ps: &rfmap_core::ndiff::ParamSet| {
            let m = model.with_params(ps.clone());
            gnn_loss_grad(&m, &features, &targets, &masks, &train_nodes, &graph)
                .expect("loss evaluates")
                .1
        };
        let report = grad_check(loss, grad, &model.params, 5, 1e-5, 1e-4, seed);
        println!(
            "refinement seed {seed}: max rel {:.3e} over {} coords -> {}",
            report.max_rel,
            report.checked,
            if report.pass() { "PASS" } else { "FAIL" }
        );
        all_pass &= report.pass();
    }
    Ok(all_pass)
}
