//! The comparison methods: kriging interpolation, the predictor alone, the
//! graph network alone, and per-parameter separate pipelines.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

use super::kriging::{kriging_fit, kriging_predict, VariogramModel};
use crate::error::Result;
use crate::geom::Point2;
use crate::geoscene::{augment, Dataset, Scene, SplitSpec};
use crate::graph::{build_knn, node_features, refine_full, train_gnn, GnnParams};
use crate::ndiff::{adam_step, OptimizerState, ParamSet};
use crate::norm::NormStats;
use crate::pinn::{
    build_samples, pinn_forward, CompositeMode, ForwardMode, PinnParams, Sample,
};
use crate::pipeline::{
    coords_at, positions_within, predict_pinn_all, records_at, stacked_targets, train_pinn_stage,
    PipelineConfig,
};
use crate::seed::{derive_seed, derive_seed_n};

/// Predictions of one comparison method at the unknown points, in normalized
/// space; rows follow `split.unknown_indices`.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub method: String,
    pub predictions_unknown: Vec<f64>,
    pub l_paths: usize,
    pub wall_seconds: f64,
}

/// Per-field ordinary kriging. Each of the `4L` scalar fields gets its own
/// variogram and system; azimuth is interpolated on (sin, cos) and
/// recomposed so the ±180° seam does not tear the field. Fields with fewer
/// than 10 valid observations fall back to their observation mean.
pub fn run_kriging(dataset: &Dataset, split: &SplitSpec, norm: &NormStats) -> Result<BaselineResult> {
    let start = Instant::now();
    let l_paths = dataset.l_paths;
    let queries = coords_at(dataset, &split.unknown_indices);
    let kinds = norm.param_kinds();
    let mut predictions = vec![0.0; queries.len() * 4 * l_paths];

    for l in 0..l_paths {
        // Observations where this path slot is valid.
        let mut obs_coords = Vec::new();
        let mut obs: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut obs_sin = Vec::new();
        let mut obs_cos = Vec::new();
        for &i in &split.known_indices {
            let p = &dataset.records[i].paths[l];
            if !p.valid {
                continue;
            }
            obs_coords.push(dataset.records[i].coords);
            obs[0].push(p.power_dbm);
            obs[1].push(p.delay_ns);
            obs[2].push(p.elevation_deg);
            let az = p.azimuth_deg.to_radians();
            obs_sin.push(az.sin());
            obs_cos.push(az.cos());
        }

        let fields: Vec<(usize, &[f64])> = vec![
            (0, &obs[0]),
            (1, &obs[1]),
            (2, &obs[2]),
            (3, &obs_sin),
            (4, &obs_cos),
        ];
        let mut predicted: Vec<Vec<f64>> = Vec::with_capacity(5);
        for (_, values) in &fields {
            predicted.push(predict_field(&obs_coords, values, &queries)?);
        }
        for (q, _) in queries.iter().enumerate() {
            let az = predicted[3][q].atan2(predicted[4][q]).to_degrees();
            let phys = [predicted[0][q], predicted[1][q], predicted[2][q], az];
            for k in 0..4 {
                predictions[q * 4 * l_paths + 4 * l + k] = kinds[k].normalize(phys[k]);
            }
        }
    }

    Ok(BaselineResult {
        method: "kriging".into(),
        predictions_unknown: predictions,
        l_paths,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn predict_field(coords: &[Point2], values: &[f64], queries: &[Point2]) -> Result<Vec<f64>> {
    if coords.len() < 10 {
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        return Ok(vec![mean; queries.len()]);
    }
    let model = kriging_fit(coords, values)?;
    Ok(kriging_predict(&model, coords, values, queries)?.values)
}

/// Re-fit a variogram for external inspection (debug artifact).
pub fn fit_field_variogram(coords: &[Point2], values: &[f64]) -> Result<VariogramModel> {
    kriging_fit(coords, values)
}

/// The predictor stage alone, evaluated at the unknown points. Stage seeds
/// derive exactly as in the full pipeline, so this equals the pipeline's
/// intermediate predictor output bit for bit.
pub fn run_pinn_only(
    scene: &Scene,
    dataset: &Dataset,
    split: &SplitSpec,
    config: &PipelineConfig,
) -> Result<BaselineResult> {
    let start = Instant::now();
    let (_, pinn, _) = train_pinn_stage(scene, dataset, split, config)?;
    let queries = coords_at(dataset, &split.unknown_indices);
    let predictions = predict_pinn_all(&pinn, &queries)?;
    Ok(BaselineResult {
        method: "pinn_only".into(),
        predictions_unknown: predictions,
        l_paths: dataset.l_paths,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// The graph network alone: node features are coordinates plus
/// zero-initialized multipath features, trained on known nodes and inferred
/// over the all-points graph.
pub fn run_gnn_only(
    dataset: &Dataset,
    split: &SplitSpec,
    norm: &NormStats,
    config: &PipelineConfig,
) -> Result<BaselineResult> {
    let start = Instant::now();
    let l_paths = dataset.l_paths;
    let known_coords = coords_at(dataset, &split.known_indices);
    let zeros_known = vec![0.0; known_coords.len() * 4 * l_paths];
    let graph_known = build_knn(&known_coords, config.k)?;
    let features_known = node_features(&known_coords, &zeros_known, 4 * l_paths, norm);
    let (targets, masks) = stacked_targets(dataset, &split.known_indices, norm);
    let train_nodes = positions_within(&split.known_indices, &split.train_indices);
    let val_nodes = positions_within(&split.known_indices, &split.val_indices);

    let init = GnnParams::init(l_paths, norm.clone(), derive_seed(config.seed, "gnn-only-init"));
    let (gnn, _) = train_gnn(
        init,
        &features_known,
        &targets,
        &masks,
        &train_nodes,
        &val_nodes,
        &graph_known,
        &config.gnn_train_config("gnn-only"),
    )?;

    let all_coords: Vec<Point2> = dataset.records.iter().map(|r| r.coords).collect();
    let zeros_all = vec![0.0; all_coords.len() * 4 * l_paths];
    let graph_full = build_knn(&all_coords, config.k)?;
    let features_all = node_features(&all_coords, &zeros_all, 4 * l_paths, norm);
    let refined = refine_full(&gnn, &features_all, &graph_full)?;

    let predictions = gather_rows(&refined, 4 * l_paths, &split.unknown_indices);
    Ok(BaselineResult {
        method: "gnn_only".into(),
        predictions_unknown: predictions,
        l_paths,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn gather_rows(flat: &[f64], width: usize, indices: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(indices.len() * width);
    for &i in indices {
        out.extend_from_slice(&flat[i * width..(i + 1) * width]);
    }
    out
}

/// Loss and gradient for one single-parameter model: supervised fit on that
/// parameter kind only, plus that kind's physics constraint with hard
/// path-type labels (no classifier blending, no consistency coupling).
fn separate_loss_grad(
    model: &PinnParams,
    samples: &[Sample],
    kind: usize,
    weights: &crate::pinn::LossWeights,
    epoch: usize,
    total_epochs: usize,
    mode: CompositeMode,
) -> Result<(f64, f64, ParamSet)> {
    use crate::geoscene::envelope;
    let n = samples.len() as f64;
    let lambda_phy = weights.lambda_phy(epoch, total_epochs);
    let lambda_j = match kind {
        0 => weights.lambda[0],
        1 => weights.lambda[1],
        _ => weights.lambda[2],
    };
    let c_phy = lambda_phy * lambda_j / n;
    let l_paths = model.l_paths;
    let kinds = model.norm.param_kinds();

    const CHUNK: usize = 32;
    let chunks: Result<Vec<(f64, f64, ParamSet)>> = samples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let mut grads = model.params.zeros_like();
            let mut sup_sum = 0.0;
            let mut phy_sum = 0.0;
            for (i, sample) in chunk.iter().enumerate() {
                let fwd_mode = match mode {
                    CompositeMode::Train { dropout, seed } => ForwardMode::Train {
                        dropout,
                        seed: derive_seed_n(seed, "sep-dropout", (chunk_idx * CHUNK + i) as u64),
                    },
                    CompositeMode::Eval => ForwardMode::Eval,
                };
                let (out, cache) = pinn_forward(model, sample.coords_norm, fwd_mode)?;
                let mut d_out = vec![0.0; 4 * l_paths];
                let mut d_refl = vec![0.0; l_paths];
                let theory = &sample.theory;

                for l in 0..l_paths {
                    let e = 4 * l + kind;
                    if sample.mask[e] {
                        let diff = out.params[e] - sample.target_norm[e];
                        sup_sum += diff * diff;
                        d_out[e] += 2.0 * diff / n;
                    }
                    let Some(label) = sample.labels[l] else {
                        continue;
                    };
                    let t = label.index();
                    let value = kinds[kind].denormalize(out.params[e]);
                    match kind {
                        0 => {
                            let w = weights.w_power[t];
                            let (v, dv) = if t == 0 {
                                let d = value - theory.power_dbm;
                                (d * d, 2.0 * d)
                            } else {
                                let cap = theory.power_dbm
                                    + 10.0 * envelope::POWER_CAP_FACTOR[t].log10();
                                let h = (value - cap).max(0.0);
                                (h * h, 2.0 * h)
                            };
                            phy_sum += w * v;
                            d_out[e] += c_phy * w * dv * kinds[0].scale;
                        }
                        1 => {
                            let w = weights.w_delay[t];
                            let ratio = value / theory.delay_ns;
                            let (v, dv) = if t == 0 {
                                let h = (1.0 - ratio).max(0.0);
                                let d = ratio - 1.0;
                                (h * h + d * d, -2.0 * h + 2.0 * d)
                            } else {
                                let h = (envelope::DELAY_FLOOR[t] - ratio).max(0.0);
                                (h * h, -2.0 * h)
                            };
                            phy_sum += w * v;
                            d_out[e] += c_phy * w * (dv / theory.delay_ns) * kinds[1].scale;
                        }
                        2 => {
                            // Elevation half of the angular constraint.
                            let w = weights.w_angle[t];
                            let r = out.refl_factors[l];
                            let d_theta = (value - theory.elevation_deg).abs();
                            let s = (value - theory.elevation_deg).signum();
                            let (v, dv, drf) = if t == 0 {
                                (d_theta, 1.0, 0.0)
                            } else {
                                let tol = envelope::ELEVATION_TOL_DEG[t];
                                let a = (d_theta - tol * r).max(0.0);
                                (a * a, 2.0 * a, -2.0 * a * tol)
                            };
                            phy_sum += w * v;
                            d_out[e] += c_phy * w * dv * s * kinds[2].scale;
                            d_refl[l] += c_phy * w * drf;
                        }
                        _ => {
                            // Azimuth half of the angular constraint.
                            let w = weights.w_angle[t];
                            let r = out.refl_factors[l];
                            let wrapped = (value - theory.azimuth_deg).rem_euclid(360.0);
                            let (d_phi, s) = if wrapped <= 180.0 {
                                (wrapped, 1.0)
                            } else {
                                (360.0 - wrapped, -1.0)
                            };
                            let (v, dv, drf) = if t == 0 {
                                (d_phi, 1.0, 0.0)
                            } else {
                                let tol = envelope::AZIMUTH_TOL_DEG[t];
                                let b = (d_phi - tol * r).max(0.0);
                                (b * b, 2.0 * b, -2.0 * b * tol)
                            };
                            phy_sum += w * v;
                            d_out[e] += c_phy * w * dv * s * kinds[3].scale;
                            d_refl[l] += c_phy * w * drf;
                        }
                    }
                }
                let seeds = crate::pinn::PinnGradSeeds {
                    d_out,
                    d_logits: vec![0.0; 4 * l_paths],
                    d_refl,
                };
                crate::pinn::pinn_backward(model, &cache, &seeds, &mut grads);
            }
            Ok((sup_sum, phy_sum, grads))
        })
        .collect();

    let mut grads = model.params.zeros_like();
    let mut sup = 0.0;
    let mut phy = 0.0;
    for (s, p, g) in chunks? {
        sup += s;
        phy += p;
        grads.add_scaled(&g, 1.0);
    }
    sup /= n;
    phy /= n;
    Ok((sup + lambda_phy * lambda_j * phy, sup, grads))
}

/// Train one single-parameter model with the same budget and schedules as
/// the main predictor.
fn train_separate_model(
    scene: &Scene,
    dataset: &Dataset,
    split: &SplitSpec,
    norm: &NormStats,
    kind: usize,
    config: &PipelineConfig,
) -> Result<PinnParams> {
    let train_records = records_at(dataset, &split.train_indices);
    let val_records = records_at(dataset, &split.val_indices);
    let sigma = config.jitter_sigma.unwrap_or(0.1 * dataset.grid_spacing);
    let seed = derive_seed_n(config.seed, "separate", kind as u64);
    let augmented = augment(
        &train_records,
        config.augment_rounds,
        sigma,
        derive_seed(seed, "augment"),
    )?;
    let mut train_samples = build_samples(scene, &augmented, norm)?;
    let val_samples = build_samples(scene, &val_records, norm)?;

    let mut model = PinnParams::init(dataset.l_paths, norm.clone(), derive_seed(seed, "init"));
    let mut opt = OptimizerState::new(model.params.flat_len(), config.base_lr, config.weight_decay);
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..config.pinn_epochs {
        opt.schedule_epoch(epoch, config.pinn_epochs)?;
        let mut rng = StdRng::seed_from_u64(derive_seed_n(seed, "shuffle", epoch as u64));
        train_samples.shuffle(&mut rng);
        for (batch_no, batch) in train_samples.chunks(config.batch_size).enumerate() {
            let mode = CompositeMode::Train {
                dropout: config.dropout,
                seed: derive_seed_n(seed, "dropout", (epoch as u64) << 20 | batch_no as u64),
            };
            let (_, _, grads) = separate_loss_grad(
                &model,
                batch,
                kind,
                &config.weights,
                epoch,
                config.pinn_epochs,
                mode,
            )?;
            adam_step(&mut opt, &mut model.params, &grads)?;
        }
        // Validation on the supervised term of this kind only.
        let val: Result<f64> = val_samples
            .par_iter()
            .map(|s| {
                let (out, _) = pinn_forward(&model, s.coords_norm, ForwardMode::Eval)?;
                let mut acc = 0.0;
                for l in 0..model.l_paths {
                    let e = 4 * l + kind;
                    if s.mask[e] {
                        let d = out.params[e] - s.target_norm[e];
                        acc += d * d;
                    }
                }
                Ok(acc)
            })
            .try_reduce(|| 0.0, |a, b| Ok(a + b));
        let val = val? / val_samples.len().max(1) as f64;
        if val < best_val {
            best_val = val;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.pinn_patience {
                break;
            }
        }
    }
    Ok(best)
}

/// Four independent predictor+refinement pipelines, one per parameter kind,
/// assembled back into the common `N_u x 4L` layout.
pub fn run_separate(
    scene: &Scene,
    dataset: &Dataset,
    split: &SplitSpec,
    config: &PipelineConfig,
) -> Result<BaselineResult> {
    let start = Instant::now();
    let l_paths = dataset.l_paths;
    let norm = crate::pipeline::fit_norm(dataset, split)?;
    let known_coords = coords_at(dataset, &split.known_indices);
    let all_coords: Vec<Point2> = dataset.records.iter().map(|r| r.coords).collect();
    let graph_known = build_knn(&known_coords, config.k)?;
    let graph_full = build_knn(&all_coords, config.k)?;
    let (targets_all, masks_all) = stacked_targets(dataset, &split.known_indices, &norm);
    let train_nodes = positions_within(&split.known_indices, &split.train_indices);
    let val_nodes = positions_within(&split.known_indices, &split.val_indices);

    let mut assembled = vec![0.0; split.unknown_indices.len() * 4 * l_paths];
    for kind in 0..4 {
        let model = train_separate_model(scene, dataset, split, &norm, kind, config)?;
        let extract = |coords: &[Point2]| -> Result<Vec<f64>> {
            let full = predict_pinn_all(&model, coords)?;
            Ok((0..coords.len() * l_paths)
                .map(|j| full[(j / l_paths) * 4 * l_paths + 4 * (j % l_paths) + kind])
                .collect())
        };
        let y0_known = extract(&known_coords)?;
        let features_known = node_features(&known_coords, &y0_known, l_paths, &norm);
        // Per-kind targets/masks.
        let width = 4 * l_paths;
        let mut targets_kind = Vec::with_capacity(known_coords.len() * l_paths);
        let mut masks_kind = Vec::with_capacity(targets_kind.capacity());
        for v in 0..known_coords.len() {
            for l in 0..l_paths {
                targets_kind.push(targets_all[v * width + 4 * l + kind]);
                masks_kind.push(masks_all[v * width + 4 * l + kind]);
            }
        }
        let seed = derive_seed_n(config.seed, "separate-gnn", kind as u64);
        let init = GnnParams::init_with_input(
            2 + l_paths,
            l_paths,
            l_paths,
            norm.clone(),
            derive_seed(seed, "init"),
        );
        let mut gnn_cfg = config.gnn_train_config("separate-gnn");
        gnn_cfg.seed = seed;
        let (gnn, _) = train_gnn(
            init,
            &features_known,
            &targets_kind,
            &masks_kind,
            &train_nodes,
            &val_nodes,
            &graph_known,
            &gnn_cfg,
        )?;

        let y0_all = extract(&all_coords)?;
        let features_all = node_features(&all_coords, &y0_all, l_paths, &norm);
        let refined = refine_full(&gnn, &features_all, &graph_full)?;
        for (row, &idx) in split.unknown_indices.iter().enumerate() {
            for l in 0..l_paths {
                assembled[row * width + 4 * l + kind] = refined[idx * l_paths + l];
            }
        }
    }

    Ok(BaselineResult {
        method: "separate".into(),
        predictions_unknown: assembled,
        l_paths,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// The full pipeline's refined output gathered at the unknown points, as a
/// comparison row.
pub fn proposed_as_baseline(
    artifacts: &crate::pipeline::PipelineArtifacts,
    dataset: &Dataset,
    split: &SplitSpec,
    seconds: f64,
) -> BaselineResult {
    BaselineResult {
        method: "proposed".into(),
        predictions_unknown: gather_rows(
            &artifacts.y_refined_all,
            4 * dataset.l_paths,
            &split.unknown_indices,
        ),
        l_paths: dataset.l_paths,
        wall_seconds: seconds,
    }
}

