//! End-to-end map construction: normalize, train the predictor on known
//! samples, refine with the spatial graph, predict everywhere, denormalize.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::Point2;
use crate::geoscene::{augment, Dataset, MultipathRecord, Scene, SplitSpec};
use crate::graph::{
    build_knn, node_features, refine_full, train_gnn, GnnEpochStats, GnnParams, GnnTrainConfig,
    SpatialGraph,
};
use crate::norm::NormStats;
use crate::pinn::{
    pinn_forward, train_pinn, ForwardMode, PinnEpochStats, PinnParams, PinnTrainConfig,
};
use crate::seed::derive_seed;

/// Everything the full pipeline needs beyond the dataset and split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub l_paths: usize,
    /// Neighbour count of the spatial graphs.
    pub k: usize,
    pub augment_rounds: usize,
    /// Coordinate jitter of the augmentation clones; `None` means
    /// `0.1 * grid_spacing`.
    pub jitter_sigma: Option<f64>,
    pub pinn_epochs: usize,
    pub gnn_epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub pinn_patience: usize,
    pub gnn_patience: usize,
    /// Collocation samples per epoch as a fraction of the training set.
    pub collocation_ratio: f64,
    pub weights: crate::pinn::LossWeights,
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            l_paths: 3,
            k: 8,
            augment_rounds: 5,
            jitter_sigma: None,
            pinn_epochs: 300,
            gnn_epochs: 800,
            batch_size: 256,
            base_lr: 0.001,
            weight_decay: 1e-5,
            dropout: 0.1,
            pinn_patience: 30,
            gnn_patience: 60,
            collocation_ratio: 1.0,
            weights: crate::pinn::LossWeights::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn pinn_train_config(&self) -> PinnTrainConfig {
        PinnTrainConfig {
            epochs: self.pinn_epochs,
            batch_size: self.batch_size,
            patience: self.pinn_patience,
            base_lr: self.base_lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            seed: derive_seed(self.seed, "pinn"),
            weights: self.weights.clone(),
            collocation_ratio: self.collocation_ratio,
        }
    }

    pub fn gnn_train_config(&self, tag: &str) -> GnnTrainConfig {
        GnnTrainConfig {
            epochs: self.gnn_epochs,
            patience: self.gnn_patience,
            base_lr: self.base_lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            seed: derive_seed(self.seed, tag),
        }
    }
}

/// Outputs of the full run; predictions stay in normalized space, the caller
/// denormalizes for file export.
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub norm: NormStats,
    pub pinn: PinnParams,
    pub pinn_history: Vec<PinnEpochStats>,
    pub gnn: GnnParams,
    pub gnn_history: Vec<GnnEpochStats>,
    /// Predictor output at every grid point, `N x 4L` normalized.
    pub y_pinn_all: Vec<f64>,
    /// Graph-refined output at every grid point, `N x 4L` normalized.
    pub y_refined_all: Vec<f64>,
}

pub fn records_at(dataset: &Dataset, indices: &[usize]) -> Vec<MultipathRecord> {
    indices.iter().map(|&i| dataset.records[i].clone()).collect()
}

pub fn coords_at(dataset: &Dataset, indices: &[usize]) -> Vec<Point2> {
    indices.iter().map(|&i| dataset.records[i].coords).collect()
}

/// Fit normalization statistics on the training split.
pub fn fit_norm(dataset: &Dataset, split: &SplitSpec) -> Result<NormStats> {
    let train: Vec<&MultipathRecord> = split
        .train_indices
        .iter()
        .map(|&i| &dataset.records[i])
        .collect();
    NormStats::fit(&train)
}

/// Normalization, augmentation, and predictor training. Shared by the full
/// pipeline and the predictor-only ablation so both produce bit-identical
/// predictor parameters for the same master seed.
pub fn train_pinn_stage(
    scene: &Scene,
    dataset: &Dataset,
    split: &SplitSpec,
    config: &PipelineConfig,
) -> Result<(NormStats, PinnParams, Vec<PinnEpochStats>)> {
    let norm = fit_norm(dataset, split)?;
    let train_records = records_at(dataset, &split.train_indices);
    let val_records = records_at(dataset, &split.val_indices);
    let sigma = config
        .jitter_sigma
        .unwrap_or(0.1 * dataset.grid_spacing);
    let augmented = augment(
        &train_records,
        config.augment_rounds,
        sigma,
        derive_seed(config.seed, "augment"),
    )?;
    let (pinn, history) = train_pinn(
        scene,
        &augmented,
        &val_records,
        &norm,
        config.l_paths,
        &config.pinn_train_config(),
    )?;
    Ok((norm, pinn, history))
}

/// Predictor output at each coordinate, `N x 4L` normalized.
pub fn predict_pinn_all(pinn: &PinnParams, coords: &[Point2]) -> Result<Vec<f64>> {
    let rows: Result<Vec<Vec<f64>>> = coords
        .par_iter()
        .map(|c| {
            let cn = pinn.norm.normalize_coords(c.x, c.y);
            Ok(pinn_forward(pinn, cn, ForwardMode::Eval)?.0.params)
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Positions of `subset` (sorted dataset indices) within `known` (sorted).
pub fn positions_within(known: &[usize], subset: &[usize]) -> Vec<usize> {
    subset
        .iter()
        .filter_map(|idx| known.binary_search(idx).ok())
        .collect()
}

/// Normalized targets and masks for the listed dataset records, row-major.
pub fn stacked_targets(
    dataset: &Dataset,
    indices: &[usize],
    norm: &NormStats,
) -> (Vec<f64>, Vec<bool>) {
    let mut targets = Vec::with_capacity(indices.len() * 4 * dataset.l_paths);
    let mut masks = Vec::with_capacity(targets.capacity());
    for &i in indices {
        let (t, m) = norm.record_targets(&dataset.records[i]);
        targets.extend(t);
        masks.extend(m);
    }
    (targets, masks)
}

/// Train the refinement stage over the known-node graph and refine the
/// predictor's full-map output over the all-points graph.
/// Overwrite the multipath feature columns of the listed rows with the
/// records' measured values wherever the measurement is valid: where a
/// location was actually measured, the graph should propagate the
/// measurement, not a prediction of it.
fn anchor_measurements(
    features: &mut [f64],
    rows: &[usize],
    records: &[&MultipathRecord],
    norm: &NormStats,
    l_paths: usize,
) {
    let width = 2 + 4 * l_paths;
    for (&row, rec) in rows.iter().zip(records) {
        let (t, m) = norm.record_targets(rec);
        for e in 0..4 * l_paths {
            if m[e] {
                features[row * width + 2 + e] = t[e];
            }
        }
    }
}

pub fn refine_stage(
    dataset: &Dataset,
    split: &SplitSpec,
    norm: &NormStats,
    pinn: &PinnParams,
    config: &PipelineConfig,
) -> Result<(GnnParams, Vec<GnnEpochStats>, Vec<f64>, Vec<f64>, SpatialGraph)> {
    // The refinement network trains transductively on the known nodes plus
    // jitter-augmented clones of the train and validation records. Known
    // originals carry their measured values in the feature matrix; clones
    // carry fresh predictor evaluations at their jittered coordinates and
    // stand in for unknown locations, so the network learns to correct an
    // honest prediction using nearby measurements. The loss runs over train
    // clones, selection over validation clones.
    let known_records = records_at(dataset, &split.known_indices);
    let train_records = records_at(dataset, &split.train_indices);
    let val_records = records_at(dataset, &split.val_indices);
    let area = dataset.grid_spacing * dataset.grid_spacing * dataset.records.len() as f64;
    let known_spacing = (area / split.known_indices.len().max(1) as f64).sqrt();
    let sigma = 0.35 * known_spacing;
    let train_clones = augment(
        &train_records,
        config.augment_rounds,
        sigma,
        derive_seed(config.seed, "gnn-augment"),
    )?
    .split_off(train_records.len());
    let val_clones = augment(
        &val_records,
        config.augment_rounds.max(1),
        sigma,
        derive_seed(config.seed, "gnn-augment-val"),
    )?
    .split_off(val_records.len());

    let mut node_records: Vec<MultipathRecord> = known_records;
    let train_node_start = node_records.len();
    node_records.extend_from_slice(&train_clones);
    let val_node_start = node_records.len();
    node_records.extend_from_slice(&val_clones);

    let node_coords: Vec<Point2> = node_records.iter().map(|r| r.coords).collect();
    let y0_nodes = predict_pinn_all(pinn, &node_coords)?;
    let graph_known = build_knn(&node_coords, config.k)?;
    let mut features_nodes = node_features(&node_coords, &y0_nodes, 4 * config.l_paths, norm);
    let known_rows: Vec<usize> = (0..train_node_start).collect();
    let known_refs: Vec<&MultipathRecord> = split
        .known_indices
        .iter()
        .map(|&i| &dataset.records[i])
        .collect();
    anchor_measurements(
        &mut features_nodes,
        &known_rows,
        &known_refs,
        norm,
        config.l_paths,
    );

    let mut targets = Vec::with_capacity(node_records.len() * 4 * config.l_paths);
    let mut masks = Vec::with_capacity(targets.capacity());
    for r in &node_records {
        let (t, m) = norm.record_targets(r);
        targets.extend(t);
        masks.extend(m);
    }
    let train_nodes: Vec<usize> = (train_node_start..val_node_start).collect();
    let val_nodes: Vec<usize> = (val_node_start..node_records.len()).collect();

    let gnn_init = GnnParams::init(
        config.l_paths,
        norm.clone(),
        derive_seed(config.seed, "gnn-init"),
    )
    .with_residual(2);
    let gnn_config = config.gnn_train_config("gnn");
    let (gnn, history) = train_gnn(
        gnn_init,
        &features_nodes,
        &targets,
        &masks,
        &train_nodes,
        &val_nodes,
        &graph_known,
        &gnn_config,
    )?;

    let all_coords: Vec<Point2> = dataset.records.iter().map(|r| r.coords).collect();
    let y_pinn_all = predict_pinn_all(pinn, &all_coords)?;
    let graph_full = build_knn(&all_coords, config.k)?;
    let mut features_all = node_features(&all_coords, &y_pinn_all, 4 * config.l_paths, norm);
    anchor_measurements(
        &mut features_all,
        &split.known_indices,
        &known_refs,
        norm,
        config.l_paths,
    );
    let y_refined_all = refine_full(&gnn, &features_all, &graph_full)?;

    Ok((gnn, history, y_pinn_all, y_refined_all, graph_full))
}

/// The whole construction: predictor stage then refinement stage.
pub fn run_pipeline(
    scene: &Scene,
    dataset: &Dataset,
    split: &SplitSpec,
    config: &PipelineConfig,
) -> Result<PipelineArtifacts> {
    let (norm, pinn, pinn_history) = train_pinn_stage(scene, dataset, split, config)?;
    let (gnn, gnn_history, y_pinn_all, y_refined_all, _) =
        refine_stage(dataset, split, &norm, &pinn, config)?;
    Ok(PipelineArtifacts {
        norm,
        pinn,
        pinn_history,
        gnn,
        gnn_history,
        y_pinn_all,
        y_refined_all,
    })
}

/// Denormalize a flat `N x 4L` prediction matrix into physical units; the
/// `[p, tau, theta, phi]` layout repeats every four entries.
pub fn denormalize_predictions(y: &[f64], norm: &NormStats) -> Vec<f64> {
    let kinds = norm.param_kinds();
    y.iter()
        .enumerate()
        .map(|(e, v)| kinds[e % 4].denormalize(*v))
        .collect()
}
