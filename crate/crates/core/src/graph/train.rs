//! Training of the refinement network on known nodes and full-map inference.

use super::knn::SpatialGraph;
use super::sage::{gnn_forward_cached, gnn_backward, GnnParams, SageMode};
use crate::error::{invalid_argument, Error, Result};
use crate::ndiff::{adam_step, OptimizerState};
use crate::seed::{derive_seed, derive_seed_n};

#[derive(Debug, Clone)]
pub struct GnnTrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for GnnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 800,
            patience: 60,
            base_lr: 0.001,
            weight_decay: 1e-5,
            dropout: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GnnEpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
}

fn masked_mse(
    out: &[f64],
    targets: &[f64],
    masks: &[bool],
    node_indices: &[usize],
    width: usize,
) -> f64 {
    if node_indices.is_empty() {
        return f64::NAN;
    }
    let mut total = 0.0;
    for &v in node_indices {
        for e in v * width..(v + 1) * width {
            if masks[e] {
                let d = out[e] - targets[e];
                total += d * d;
            }
        }
    }
    total / node_indices.len() as f64
}

/// Train the refinement network transductively over the known-node graph.
///
/// `features` are the `N_k x in_dim` node inputs (coordinates plus the
/// predictor's outputs), `targets`/`masks` the `N_k x out_dim` normalized
/// truth with validity, and `train_nodes`/`val_nodes` positions into the
/// known arrays. Full-batch Adam with cosine annealing; early stopping on
/// the validation MSE.
pub fn train_gnn(
    mut model: GnnParams,
    features: &[f64],
    targets: &[f64],
    masks: &[bool],
    train_nodes: &[usize],
    val_nodes: &[usize],
    graph: &SpatialGraph,
    config: &GnnTrainConfig,
) -> Result<(GnnParams, Vec<GnnEpochStats>)> {
    if train_nodes.is_empty() {
        return Err(invalid_argument("empty training node set"));
    }
    let out_dim = *model.widths.last().unwrap();
    if targets.len() != graph.len() * out_dim || masks.len() != targets.len() {
        return Err(invalid_argument("target shape does not match graph"));
    }
    let m = train_nodes.len() as f64;
    let mut opt = OptimizerState::new(
        model.params.flat_len(),
        config.base_lr,
        config.weight_decay,
    );
    // The initial parameters count as a selection candidate, so a residual
    // network (identity at init) is only ever replaced by something that
    // validates better.
    let mut best = model.clone();
    let mut best_val = {
        let (init_out, _) = gnn_forward_cached(&model, features, graph, SageMode::Eval)?;
        let v = masked_mse(&init_out, targets, masks, val_nodes, out_dim);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut since_best = 0usize;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        opt.schedule_epoch(epoch, config.epochs)?;
        let mode = SageMode::Train {
            dropout: config.dropout,
            seed: derive_seed_n(derive_seed(config.seed, "gnn-dropout"), "epoch", epoch as u64),
        };
        let (out, cache) = gnn_forward_cached(&model, features, graph, mode)?;

        let mut grad_out = vec![0.0; out.len()];
        let mut train_loss = 0.0;
        for &v in train_nodes {
            for e in v * out_dim..(v + 1) * out_dim {
                if masks[e] {
                    let d = out[e] - targets[e];
                    train_loss += d * d;
                    grad_out[e] = 2.0 * d / m;
                }
            }
        }
        train_loss /= m;
        if !train_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite refinement loss at epoch {epoch}"
            )));
        }
        let mut grads = model.params.zeros_like();
        gnn_backward(&model, graph, &cache, &grad_out, &mut grads);
        adam_step(&mut opt, &mut model.params, &grads)?;

        // Validation in eval mode.
        let (val_out, _) = gnn_forward_cached(&model, features, graph, SageMode::Eval)?;
        let val = masked_mse(&val_out, targets, masks, val_nodes, out_dim);
        let val_mse = if val.is_nan() { train_loss } else { val };
        history.push(GnnEpochStats {
            epoch,
            train_mse: train_loss,
            val_mse,
            lr: opt.lr,
        });
        if val_mse < best_val {
            best_val = val_mse;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

/// One inference pass over the full graph; the caller denormalizes.
pub fn refine_full(model: &GnnParams, features: &[f64], graph: &SpatialGraph) -> Result<Vec<f64>> {
    super::sage::gnn_forward(model, features, graph)
}

/// Refinement loss value and exact parameter gradient in eval mode (no
/// dropout): the masked MSE over `train_nodes`.
pub fn gnn_loss_grad(
    model: &GnnParams,
    features: &[f64],
    targets: &[f64],
    masks: &[bool],
    train_nodes: &[usize],
    graph: &SpatialGraph,
) -> Result<(f64, crate::ndiff::ParamSet)> {
    let out_dim = *model.widths.last().unwrap();
    let (out, cache) = gnn_forward_cached(model, features, graph, SageMode::Eval)?;
    let m = train_nodes.len() as f64;
    let mut grad_out = vec![0.0; out.len()];
    let mut loss = 0.0;
    for &v in train_nodes {
        for e in v * out_dim..(v + 1) * out_dim {
            if masks[e] {
                let d = out[e] - targets[e];
                loss += d * d;
                grad_out[e] = 2.0 * d / m;
            }
        }
    }
    loss /= m;
    let mut grads = model.params.zeros_like();
    gnn_backward(model, graph, &cache, &grad_out, &mut grads);
    Ok((loss, grads))
}
