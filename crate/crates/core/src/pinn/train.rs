//! Training loop for the physics-informed predictor: mini-batch Adam with
//! cosine annealing, dynamic constraint weights, and early stopping on the
//! validation supervised loss.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::loss::{
    composite_loss_grad, label_path_types, CompositeMode, LossWeights, Sample,
};
use super::model::{pinn_forward, ForwardMode, PinnParams};
use super::theory::theory_los_at;
use crate::error::{Error, Result};
use crate::geoscene::{MultipathRecord, Scene};
use crate::ndiff::{adam_step, OptimizerState};
use crate::norm::NormStats;
use crate::seed::{derive_seed, derive_seed_n};

#[derive(Debug, Clone)]
pub struct PinnTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Label-free collocation samples drawn uniformly over the scene each
    /// epoch, as a fraction of the training-set size. Collocation points
    /// carry no supervision or type labels; only the physics terms act on
    /// them, anchoring the prediction to theory away from the measured
    /// coordinates.
    pub collocation_ratio: f64,
}

impl Default for PinnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 256,
            patience: 30,
            base_lr: 0.001,
            weight_decay: 1e-5,
            dropout: 0.1,
            seed: 0,
            weights: LossWeights::default(),
            collocation_ratio: 1.0,
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy)]
pub struct PinnEpochStats {
    pub epoch: usize,
    pub total: f64,
    pub sup: f64,
    pub power: f64,
    pub delay: f64,
    pub angle: f64,
    pub consist: f64,
    pub type_ce: f64,
    pub lr: f64,
    pub lambda_phy: f64,
    pub lambda_type: f64,
    pub val_sup: f64,
}

/// Precompute everything a record needs to act as a training sample: theory
/// at its (possibly jittered) coordinate, physics-rule labels, and the
/// normalized target with its validity mask.
pub fn build_samples(
    scene: &Scene,
    records: &[MultipathRecord],
    norm: &NormStats,
) -> Result<Vec<Sample>> {
    records
        .iter()
        .map(|r| {
            let theory = theory_los_at(scene, r.coords)?;
            let labels = label_path_types(r, &theory);
            let (target_norm, mask) = norm.record_targets(r);
            Ok(Sample {
                coords_norm: norm.normalize_coords(r.coords.x, r.coords.y),
                target_norm,
                mask,
                theory,
                labels,
            })
        })
        .collect()
}

/// Mean supervised loss over samples, dropout off.
fn supervised_eval(model: &PinnParams, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let total: Result<f64> = samples
        .par_iter()
        .map(|s| {
            let (out, _) = pinn_forward(model, s.coords_norm, ForwardMode::Eval)?;
            let mut acc = 0.0;
            for e in 0..out.params.len() {
                if s.mask[e] {
                    let d = out.params[e] - s.target_norm[e];
                    acc += d * d;
                }
            }
            Ok(acc)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a + b));
    Ok(total? / samples.len() as f64)
}

/// Train the predictor; returns the best-validation parameters and the
/// per-epoch history. Validation uses the supervised term only, because the
/// physics terms are schedule-weighted and not comparable across epochs.
pub fn train_pinn(
    scene: &Scene,
    train_records: &[MultipathRecord],
    val_records: &[MultipathRecord],
    norm: &NormStats,
    l_paths: usize,
    config: &PinnTrainConfig,
) -> Result<(PinnParams, Vec<PinnEpochStats>)> {
    if train_records.is_empty() {
        return Err(crate::error::invalid_argument("empty training split"));
    }
    let mut train_samples = build_samples(scene, train_records, norm)?;
    let val_samples = build_samples(scene, val_records, norm)?;
    let collocation_count =
        (config.collocation_ratio * train_samples.len() as f64).round() as usize;

    let mut model = PinnParams::init(l_paths, norm.clone(), derive_seed(config.seed, "pinn-init"));
    let mut opt = OptimizerState::new(
        model.params.flat_len(),
        config.base_lr,
        config.weight_decay,
    );

    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut epochs_since_best = 0usize;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        opt.schedule_epoch(epoch, config.epochs)?;
        let mut shuffle_rng =
            StdRng::seed_from_u64(derive_seed_n(config.seed, "pinn-shuffle", epoch as u64));
        train_samples.shuffle(&mut shuffle_rng);
        // Fresh collocation points each epoch: uniformly random coordinates
        // whose masks and labels are empty, so only the physics terms see
        // them. Interleave them with the shuffled data samples.
        let mut epoch_samples = train_samples.clone();
        if collocation_count > 0 {
            let mut colloc_rng =
                StdRng::seed_from_u64(derive_seed_n(config.seed, "pinn-colloc", epoch as u64));
            for _ in 0..collocation_count {
                let x = colloc_rng.random_range(scene.bounds.min.x..scene.bounds.max.x);
                let y = colloc_rng.random_range(scene.bounds.min.y..scene.bounds.max.y);
                let theory = theory_los_at(scene, crate::geom::Point2::new(x, y))?;
                epoch_samples.push(Sample {
                    coords_norm: norm.normalize_coords(x, y),
                    target_norm: vec![0.0; 4 * l_paths],
                    mask: vec![false; 4 * l_paths],
                    theory,
                    labels: vec![None; l_paths],
                });
            }
            epoch_samples.shuffle(&mut colloc_rng);
        }

        let mut sums = PinnEpochStats {
            epoch,
            total: 0.0,
            sup: 0.0,
            power: 0.0,
            delay: 0.0,
            angle: 0.0,
            consist: 0.0,
            type_ce: 0.0,
            lr: opt.lr,
            lambda_phy: 0.0,
            lambda_type: 0.0,
            val_sup: f64::NAN,
        };
        let mut seen = 0usize;
        for (batch_no, batch) in epoch_samples.chunks(config.batch_size).enumerate() {
            let mode = CompositeMode::Train {
                dropout: config.dropout,
                seed: derive_seed_n(
                    config.seed,
                    "pinn-dropout",
                    (epoch as u64) << 20 | batch_no as u64,
                ),
            };
            let (breakdown, grads) =
                composite_loss_grad(&model, batch, &config.weights, epoch, config.epochs, mode)
                    .map_err(|e| match e {
                        Error::Training(msg) => Error::Training(format!(
                            "{msg} (batch {batch_no}, lr {:.3e})",
                            opt.lr
                        )),
                        other => other,
                    })?;
            adam_step(&mut opt, &mut model.params, &grads)?;
            let w = batch.len() as f64;
            sums.total += breakdown.total * w;
            sums.sup += breakdown.sup * w;
            sums.power += breakdown.power * w;
            sums.delay += breakdown.delay * w;
            sums.angle += breakdown.angle * w;
            sums.consist += breakdown.consist * w;
            sums.type_ce += breakdown.type_ce * w;
            sums.lambda_phy = breakdown.lambda_phy;
            sums.lambda_type = breakdown.lambda_type;
            seen += batch.len();
        }
        let n = seen as f64;
        sums.total /= n;
        sums.sup /= n;
        sums.power /= n;
        sums.delay /= n;
        sums.angle /= n;
        sums.consist /= n;
        sums.type_ce /= n;

        // Validation; falls back to the training supervised term when the
        // validation split is empty.
        let val = supervised_eval(&model, &val_samples)?;
        sums.val_sup = if val.is_nan() { sums.sup } else { val };
        if !sums.val_sup.is_finite() {
            return Err(Error::Training(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.push(sums);

        if sums.val_sup < best_val {
            best_val = sums.val_sup;
            best = model.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= config.patience {
                break;
            }
        }
    }

    Ok((best, history))
}
