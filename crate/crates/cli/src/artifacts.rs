//! Run-directory artifacts: prediction files, checkpoints, histories,
//! metrics reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rfmap_core::error::{Error, Result};
use rfmap_core::eval::Metrics;
use rfmap_core::geom::Point2;
use rfmap_core::geoscene::{Dataset, MultipathRecord, PathComponent, Scene};
use rfmap_core::graph::{GnnEpochStats, GnnParams};
use rfmap_core::norm::NormStats;
use rfmap_core::pinn::{label_path_types, theory_los, LossWeights, PinnEpochStats, PinnParams};

/// Turn a flat normalized prediction matrix into dataset-shaped records.
/// All slots are marked valid; path types come from the delay-ratio rule
/// against free-space theory (predictions carry no oracle validity).
pub fn predictions_to_records(
    coords: &[Point2],
    y_norm: &[f64],
    l_paths: usize,
    norm: &NormStats,
    scene: &Scene,
) -> Result<Vec<MultipathRecord>> {
    let kinds = norm.param_kinds();
    let width = 4 * l_paths;
    coords
        .iter()
        .enumerate()
        .map(|(v, c)| {
            let mut paths = Vec::with_capacity(l_paths);
            for l in 0..l_paths {
                let base = v * width + 4 * l;
                paths.push(PathComponent {
                    power_dbm: kinds[0].denormalize(y_norm[base]),
                    delay_ns: kinds[1].denormalize(y_norm[base + 1]),
                    elevation_deg: kinds[2].denormalize(y_norm[base + 2]),
                    azimuth_deg: kinds[3].denormalize(y_norm[base + 3]),
                    path_type: rfmap_core::geoscene::PathType::Los,
                    valid: true,
                });
            }
            let mut record = MultipathRecord { coords: *c, paths };
            let theory = theory_los(scene, *c)?;
            let labels = label_path_types(&record, &theory);
            for (p, label) in record.paths.iter_mut().zip(labels) {
                if let Some(t) = label {
                    p.path_type = t;
                }
            }
            Ok(record)
        })
        .collect()
}

/// Records as a dataset wrapper so the standard CSV writer applies.
pub fn records_as_dataset(records: Vec<MultipathRecord>, l_paths: usize, spacing: f64) -> Dataset {
    Dataset {
        records,
        grid_spacing: spacing,
        l_paths,
    }
}

/// Predictor checkpoint: parameter blob, loss weights, config hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PinnCheckpoint {
    pub version: u32,
    pub config_hash: String,
    pub weights: LossWeights,
    pub params: PinnParams,
}

/// Refinement-network checkpoint in the same envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnnCheckpoint {
    pub version: u32,
    pub config_hash: String,
    pub params: GnnParams,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_pinn_history(history: &[PinnEpochStats], path: &Path) -> Result<()> {
    let mut out = String::from(
        "epoch,loss_total,loss_sup,loss_power,loss_delay,loss_angle,loss_consist,loss_type,lr,lambda_phy,lambda_type\n",
    );
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            h.epoch,
            h.total,
            h.sup,
            h.power,
            h.delay,
            h.angle,
            h.consist,
            h.type_ce,
            h.lr,
            h.lambda_phy,
            h.lambda_type
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_gnn_history(history: &[GnnEpochStats], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_mse,val_mse,lr\n");
    for h in history {
        out.push_str(&format!("{},{},{},{}\n", h.epoch, h.train_mse, h.val_mse, h.lr));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// The metrics report written by `run` and `baselines`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub sampling_rate: f64,
    pub seed: u64,
    /// Evaluation is restricted to unknown points.
    pub evaluation_set: String,
    pub metrics: Metrics,
}
