//! The composite training objective: supervised fit, four physics
//! constraints, and path-type classification, with dynamic weighting and
//! exact gradients.
//!
//! Unit conventions: the supervised term lives in normalized feature space;
//! physics terms are evaluated in physical units after denormalization
//! (power in dB, angles in degrees). Inside the composite objective the
//! delay constraint is expressed in units of the theoretical LoS delay so
//! the four physics terms stay commensurate; the standalone [`loss_delay`]
//! operation reports plain ns².

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{
    pinn_backward, pinn_forward, softmax_backward4, ForwardMode, PinnGradSeeds, PinnParams,
};
use super::theory::TheoryLos;
use crate::error::{invalid_argument, Error, Result};
use crate::geoscene::{envelope, MultipathRecord, PathType};
use crate::ndiff::ParamSet;
use crate::seed::derive_seed_n;

const LOG_FLOOR: f64 = 1e-12;

/// Physics sub-weights, per-type weight tables, and the dynamic schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Multipliers for (power, delay, angle, consistency) after each term is
    /// expressed in its natural units.
    pub lambda: [f64; 4],
    /// Physics weight schedule over training, linear start -> end.
    pub phy_schedule: (f64, f64),
    /// Type-loss weight schedule over training.
    pub type_schedule: (f64, f64),
    /// Per-type weights indexed by [`PathType::index`].
    pub w_power: [f64; 4],
    pub w_delay: [f64; 4],
    pub w_angle: [f64; 4],
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: [1.0, 1.0, 0.01, 0.1],
            phy_schedule: (0.05, 0.5),
            type_schedule: (0.05, 0.3),
            w_power: [1.0, 0.5, 0.3, 0.2],
            w_delay: [1.0, 0.5, 0.3, 0.2],
            w_angle: [1.0, 0.5, 0.1, 0.1],
        }
    }
}

/// Ramp-then-hold: rise from start to end over the first half of training
/// and stay there, so the constraints reach full strength even when early
/// stopping cuts the run short. Non-decreasing, endpoints exact.
fn interp_schedule(range: (f64, f64), epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs <= 1 {
        return range.1;
    }
    let ramp = ((total_epochs - 1) as f64 * 0.5).max(1.0);
    let f = (epoch as f64 / ramp).min(1.0);
    range.0 + (range.1 - range.0) * f
}

impl LossWeights {
    pub fn lambda_phy(&self, epoch: usize, total_epochs: usize) -> f64 {
        interp_schedule(self.phy_schedule, epoch, total_epochs)
    }

    pub fn lambda_type(&self, epoch: usize, total_epochs: usize) -> f64 {
        interp_schedule(self.type_schedule, epoch, total_epochs)
    }
}

/// NLoS power caps relative to theoretical LoS power, dB.
fn cap_offset_db(type_index: usize) -> f64 {
    10.0 * envelope::POWER_CAP_FACTOR[type_index].log10()
}

/// Mean over samples of the squared error summed over valid entries, in
/// normalized space.
pub fn loss_supervised(preds: &[Vec<f64>], trues: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<f64> {
    if preds.is_empty() || preds.len() != trues.len() || preds.len() != masks.len() {
        return Err(invalid_argument("empty or mismatched supervised batch"));
    }
    let mut total = 0.0;
    for ((p, t), m) in preds.iter().zip(trues).zip(masks) {
        for ((pi, ti), mi) in p.iter().zip(t).zip(m) {
            if *mi {
                let d = pi - ti;
                total += d * d;
            }
        }
    }
    Ok(total / preds.len() as f64)
}

/// Per-path power terms in dB², blended over types by the classifier
/// probabilities: symmetric match to theory for LoS, one-sided hinge against
/// the per-type cap for NLoS.
pub fn loss_power(
    phys: &[[f64; 4]],
    type_probs: &[f64],
    theory: &TheoryLos,
    w_power: &[f64; 4],
) -> f64 {
    let mut total = 0.0;
    for (l, path) in phys.iter().enumerate() {
        let p = path[0];
        for t in 0..4 {
            let e = if t == 0 {
                let d = p - theory.power_dbm;
                d * d
            } else {
                let cap = theory.power_dbm + cap_offset_db(t);
                let h = (p - cap).max(0.0);
                h * h
            };
            total += type_probs[4 * l + t] * w_power[t] * e;
        }
    }
    total
}

/// Per-path delay terms in ns²: hinge below the per-type floor, plus a
/// symmetric term for LoS.
pub fn loss_delay(
    phys: &[[f64; 4]],
    type_probs: &[f64],
    theory: &TheoryLos,
    w_delay: &[f64; 4],
) -> f64 {
    let tau_th = theory.delay_ns;
    let mut total = 0.0;
    for (l, path) in phys.iter().enumerate() {
        let tau = path[1];
        for t in 0..4 {
            let e = if t == 0 {
                let h = (tau_th - tau).max(0.0);
                let d = tau - tau_th;
                h * h + d * d
            } else {
                let h = (envelope::DELAY_FLOOR[t] * tau_th - tau).max(0.0);
                h * h
            };
            total += type_probs[4 * l + t] * w_delay[t] * e;
        }
    }
    total
}

/// Angular error pieces for one path: elevation difference, wraparound
/// azimuth difference, the LoS error, and the reflection error under the
/// (45°, 90°) tolerances scaled by the reflection factor `r`.
pub fn angle_errors(
    theta_pred: f64,
    phi_pred: f64,
    theory: &TheoryLos,
    r: f64,
) -> (f64, f64, f64, f64) {
    let d_theta = (theta_pred - theory.elevation_deg).abs();
    let wrapped = (phi_pred - theory.azimuth_deg).rem_euclid(360.0);
    let d_phi = wrapped.min(360.0 - wrapped);
    let e_los = d_theta + d_phi;
    let a = (d_theta - 45.0 * r).max(0.0);
    let b = (d_phi - 90.0 * r).max(0.0);
    let e_refl = a * a + b * b;
    (d_theta, d_phi, e_los, e_refl)
}

/// Full angular constraint in degree units, blended over types. Scattering
/// and diffraction reuse the reflection form with widened (90°, 180°)
/// tolerances.
pub fn loss_angle(
    phys: &[[f64; 4]],
    type_probs: &[f64],
    refl_factors: &[f64],
    theory: &TheoryLos,
    w_angle: &[f64; 4],
) -> f64 {
    let mut total = 0.0;
    for (l, path) in phys.iter().enumerate() {
        let r = refl_factors[l];
        let (d_theta, d_phi, e_los, e_refl) = angle_errors(path[2], path[3], theory, r);
        for t in 0..4 {
            let e = match t {
                0 => e_los,
                1 => e_refl,
                _ => {
                    let a = (d_theta - envelope::ELEVATION_TOL_DEG[t] * r).max(0.0);
                    let b = (d_phi - envelope::AZIMUTH_TOL_DEG[t] * r).max(0.0);
                    a * a + b * b
                }
            };
            total += type_probs[4 * l + t] * w_angle[t] * e;
        }
    }
    total
}

/// Coherence of the predicted quadruples: (a) power should not increase with
/// delay across the predicted paths, and (b) the classifier's LoS belief for
/// the strongest path should match a LoS probability inferred from how close
/// its delay is to theory.
pub fn loss_consistency(phys: &[[f64; 4]], type_probs: &[f64], theory: &TheoryLos) -> f64 {
    let (value, _) = consistency_with_grad(phys, type_probs, theory);
    value
}

struct ConsistencyGrad {
    d_power: Vec<f64>,
    d_delay_strongest: f64,
    strongest: usize,
    d_prob_los: f64,
}

fn consistency_with_grad(
    phys: &[[f64; 4]],
    type_probs: &[f64],
    theory: &TheoryLos,
) -> (f64, ConsistencyGrad) {
    let l_paths = phys.len();
    let mut d_power = vec![0.0; l_paths];

    // (a) delay-ordered power monotonicity, linear hinge in dB.
    let mut order: Vec<usize> = (0..l_paths).collect();
    order.sort_by(|&a, &b| phys[a][1].partial_cmp(&phys[b][1]).unwrap().then(a.cmp(&b)));
    let mut mono = 0.0;
    for w in order.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let d = phys[hi][0] - phys[lo][0];
        if d > 0.0 {
            mono += d;
            d_power[hi] += 1.0;
            d_power[lo] -= 1.0;
        }
    }

    // (b) LoS-existence belief from delay closeness, matched to the
    // classifier's LoS probability of the strongest predicted path.
    let strongest = (0..l_paths)
        .max_by(|&a, &b| phys[a][0].partial_cmp(&phys[b][0]).unwrap())
        .unwrap_or(0);
    let tau = phys[strongest][1];
    let tau_th = theory.delay_ns;
    let u = 10.0 * (0.1 - (tau - tau_th).abs() / tau_th);
    let p_los = 1.0 / (1.0 + (-u).exp());
    let q_raw = type_probs[4 * strongest];
    let q = q_raw.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
    let bce = -(p_los * q.ln() + (1.0 - p_los) * (1.0 - q).ln());

    let d_prob_los = if q_raw == q {
        -p_los / q + (1.0 - p_los) / (1.0 - q)
    } else {
        0.0
    };
    let d_p_los = -q.ln() + (1.0 - q).ln();
    let du_dtau = -10.0 * (tau - tau_th).signum() / tau_th;
    let d_delay_strongest = d_p_los * p_los * (1.0 - p_los) * du_dtau;

    (
        mono + bce,
        ConsistencyGrad {
            d_power,
            d_delay_strongest,
            strongest,
            d_prob_los,
        },
    )
}

/// Path-type labels from the delay ratio against theory: below 1.1 LoS, then
/// reflection, scattering past 1.4, diffraction past 1.6. Invalid slots get
/// no label.
pub fn label_path_types(record: &MultipathRecord, theory: &TheoryLos) -> Vec<Option<PathType>> {
    record
        .paths
        .iter()
        .map(|p| {
            if !p.valid {
                return None;
            }
            let ratio = p.delay_ns / theory.delay_ns;
            Some(if ratio < 1.1 {
                PathType::Los
            } else if ratio < 1.4 {
                PathType::Reflection
            } else if ratio < 1.6 {
                PathType::Scattering
            } else {
                PathType::Diffraction
            })
        })
        .collect()
}

/// Cross-entropy of the classifier against one-hot labels, averaged over
/// samples; unlabeled (invalid) paths are skipped.
pub fn loss_type(probs: &[Vec<f64>], labels: &[Vec<Option<PathType>>]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (p, lab) in probs.iter().zip(labels) {
        for (l, maybe) in lab.iter().enumerate() {
            if let Some(t) = maybe {
                total -= (p[4 * l + t.index()] + LOG_FLOOR).ln();
            }
        }
    }
    total / probs.len() as f64
}

/// One training sample, fully precomputed.
#[derive(Debug, Clone)]
pub struct Sample {
    pub coords_norm: [f64; 2],
    pub target_norm: Vec<f64>,
    pub mask: Vec<bool>,
    pub theory: TheoryLos,
    pub labels: Vec<Option<PathType>>,
}

/// Batch-mean values of every term, plus the schedule weights in force.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub sup: f64,
    pub power: f64,
    /// Delay term in units of the theoretical LoS delay (dimensionless).
    pub delay: f64,
    pub angle: f64,
    pub consist: f64,
    pub type_ce: f64,
    pub lambda_phy: f64,
    pub lambda_type: f64,
}

impl LossBreakdown {
    fn first_non_finite(&self) -> Option<&'static str> {
        [
            (self.sup, "supervised"),
            (self.power, "power"),
            (self.delay, "delay"),
            (self.angle, "angle"),
            (self.consist, "consistency"),
            (self.type_ce, "type"),
        ]
        .iter()
        .find(|(v, _)| !v.is_finite())
        .map(|&(_, name)| name)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CompositeMode {
    /// Dropout active; per-sample mask seeds derive from `seed`.
    Train { dropout: f64, seed: u64 },
    /// Deterministic evaluation.
    Eval,
}

struct SampleSums {
    sup: f64,
    power: f64,
    delay: f64,
    angle: f64,
    consist: f64,
    type_ce: f64,
}

/// Composite loss and its exact parameter gradient over a batch.
///
/// `L = L_sup + lambda_phy(epoch) * (l1 Lp + l2 Ld + l3 La + l4 Lc)/N
///    + lambda_type(epoch) * L_type`.
pub fn composite_loss_grad(
    model: &PinnParams,
    samples: &[Sample],
    weights: &LossWeights,
    epoch: usize,
    total_epochs: usize,
    mode: CompositeMode,
) -> Result<(LossBreakdown, ParamSet)> {
    if samples.is_empty() {
        return Err(invalid_argument("empty batch"));
    }
    if epoch > total_epochs {
        return Err(invalid_argument("epoch beyond schedule length"));
    }
    let n = samples.len() as f64;
    let lambda_phy = weights.lambda_phy(epoch, total_epochs);
    let lambda_type = weights.lambda_type(epoch, total_epochs);
    let l_paths = model.l_paths;
    let kinds = model.norm.param_kinds();

    // Fixed-size chunks keep the reduction order independent of thread count.
    const CHUNK: usize = 32;
    let chunk_results: Result<Vec<(SampleSums, ParamSet)>> = samples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let mut grads = model.params.zeros_like();
            let mut sums = SampleSums {
                sup: 0.0,
                power: 0.0,
                delay: 0.0,
                angle: 0.0,
                consist: 0.0,
                type_ce: 0.0,
            };
            for (i, sample) in chunk.iter().enumerate() {
                let sample_idx = chunk_idx * CHUNK + i;
                let fwd_mode = match mode {
                    CompositeMode::Train { dropout, seed } => ForwardMode::Train {
                        dropout,
                        seed: derive_seed_n(seed, "dropout", sample_idx as u64),
                    },
                    CompositeMode::Eval => ForwardMode::Eval,
                };
                let (out, cache) = pinn_forward(model, sample.coords_norm, fwd_mode)?;
                accumulate_sample(
                    model, sample, &out.params, &out.type_probs, &out.refl_factors, &cache,
                    weights, lambda_phy, lambda_type, n, l_paths, &kinds, &mut sums, &mut grads,
                )?;
            }
            Ok((sums, grads))
        })
        .collect();

    let mut grads = model.params.zeros_like();
    let mut breakdown = LossBreakdown {
        lambda_phy,
        lambda_type,
        ..Default::default()
    };
    for (sums, partial) in chunk_results? {
        breakdown.sup += sums.sup;
        breakdown.power += sums.power;
        breakdown.delay += sums.delay;
        breakdown.angle += sums.angle;
        breakdown.consist += sums.consist;
        breakdown.type_ce += sums.type_ce;
        grads.add_scaled(&partial, 1.0);
    }
    breakdown.sup /= n;
    breakdown.power /= n;
    breakdown.delay /= n;
    breakdown.angle /= n;
    breakdown.consist /= n;
    breakdown.type_ce /= n;
    breakdown.total = breakdown.sup
        + lambda_phy
            * (weights.lambda[0] * breakdown.power
                + weights.lambda[1] * breakdown.delay
                + weights.lambda[2] * breakdown.angle
                + weights.lambda[3] * breakdown.consist)
        + lambda_type * breakdown.type_ce;

    if let Some(term) = breakdown.first_non_finite() {
        return Err(Error::Training(format!(
            "non-finite {term} loss at epoch {epoch}"
        )));
    }
    Ok((breakdown, grads))
}

#[allow(clippy::too_many_arguments)]
fn accumulate_sample(
    model: &PinnParams,
    sample: &Sample,
    out: &[f64],
    probs: &[f64],
    refl: &[f64],
    cache: &super::model::PinnCache,
    weights: &LossWeights,
    lambda_phy: f64,
    lambda_type: f64,
    n: f64,
    l_paths: usize,
    kinds: &[crate::norm::FeatureNorm; 4],
    sums: &mut SampleSums,
    grads: &mut ParamSet,
) -> Result<()> {
    let theory = &sample.theory;
    let mut d_out = vec![0.0; 4 * l_paths];
    let mut d_probs = vec![0.0; 4 * l_paths];
    let mut d_refl = vec![0.0; l_paths];

    // Supervised term, normalized space.
    for e in 0..4 * l_paths {
        if sample.mask[e] {
            let diff = out[e] - sample.target_norm[e];
            sums.sup += diff * diff;
            d_out[e] += 2.0 * diff / n;
        }
    }

    // Denormalized physical parameters per path.
    let mut phys = vec![[0.0; 4]; l_paths];
    for l in 0..l_paths {
        for k in 0..4 {
            phys[l][k] = kinds[k].denormalize(out[4 * l + k]);
        }
    }

    let c_pow = lambda_phy * weights.lambda[0] / n;
    let c_del = lambda_phy * weights.lambda[1] / n;
    let c_ang = lambda_phy * weights.lambda[2] / n;
    let c_con = lambda_phy * weights.lambda[3] / n;

    // Power constraint (dB²).
    for l in 0..l_paths {
        let p = phys[l][0];
        let mut dp = 0.0;
        for t in 0..4 {
            let prob = probs[4 * l + t];
            let w = weights.w_power[t];
            let (e, de) = if t == 0 {
                let d = p - theory.power_dbm;
                (d * d, 2.0 * d)
            } else {
                let h = (p - (theory.power_dbm + cap_offset_db(t))).max(0.0);
                (h * h, 2.0 * h)
            };
            sums.power += prob * w * e;
            dp += prob * w * de;
            d_probs[4 * l + t] += c_pow * w * e;
        }
        d_out[4 * l] += c_pow * dp * kinds[0].scale;
    }

    // Delay constraint in units of the theoretical LoS delay.
    let tau_th = theory.delay_ns;
    for l in 0..l_paths {
        let ratio = phys[l][1] / tau_th;
        let mut dr = 0.0;
        for t in 0..4 {
            let prob = probs[4 * l + t];
            let w = weights.w_delay[t];
            let (e, de) = if t == 0 {
                let h = (1.0 - ratio).max(0.0);
                let d = ratio - 1.0;
                (h * h + d * d, -2.0 * h + 2.0 * d)
            } else {
                let h = (envelope::DELAY_FLOOR[t] - ratio).max(0.0);
                (h * h, -2.0 * h)
            };
            sums.delay += prob * w * e;
            dr += prob * w * de;
            d_probs[4 * l + t] += c_del * w * e;
        }
        d_out[4 * l + 1] += c_del * (dr / tau_th) * kinds[1].scale;
    }

    // Angular constraint (degrees / degrees²).
    for l in 0..l_paths {
        let r = refl[l];
        let theta = phys[l][2];
        let phi = phys[l][3];
        let d_theta = (theta - theory.elevation_deg).abs();
        let s_theta = (theta - theory.elevation_deg).signum();
        let wrapped = (phi - theory.azimuth_deg).rem_euclid(360.0);
        let (d_phi, s_phi) = if wrapped <= 180.0 {
            (wrapped, 1.0)
        } else {
            (360.0 - wrapped, -1.0)
        };
        let mut g_theta = 0.0;
        let mut g_phi = 0.0;
        let mut g_r = 0.0;
        for t in 0..4 {
            let prob = probs[4 * l + t];
            let w = weights.w_angle[t];
            let (e, de_th, de_ph, de_r) = if t == 0 {
                (d_theta + d_phi, 1.0, 1.0, 0.0)
            } else {
                let tol_t = envelope::ELEVATION_TOL_DEG[t];
                let tol_p = envelope::AZIMUTH_TOL_DEG[t];
                let a = (d_theta - tol_t * r).max(0.0);
                let b = (d_phi - tol_p * r).max(0.0);
                (
                    a * a + b * b,
                    2.0 * a,
                    2.0 * b,
                    -2.0 * a * tol_t - 2.0 * b * tol_p,
                )
            };
            sums.angle += prob * w * e;
            g_theta += prob * w * de_th;
            g_phi += prob * w * de_ph;
            g_r += prob * w * de_r;
            d_probs[4 * l + t] += c_ang * w * e;
        }
        d_out[4 * l + 2] += c_ang * g_theta * s_theta * kinds[2].scale;
        d_out[4 * l + 3] += c_ang * g_phi * s_phi * kinds[3].scale;
        d_refl[l] += c_ang * g_r;
    }

    // Consistency constraint.
    let (consist, cgrad) = consistency_with_grad(&phys, probs, theory);
    sums.consist += consist;
    for l in 0..l_paths {
        d_out[4 * l] += c_con * cgrad.d_power[l] * kinds[0].scale;
    }
    d_out[4 * cgrad.strongest + 1] += c_con * cgrad.d_delay_strongest * kinds[1].scale;
    d_probs[4 * cgrad.strongest] += c_con * cgrad.d_prob_los;

    // Path-type cross-entropy.
    for (l, maybe) in sample.labels.iter().enumerate() {
        if let Some(t) = maybe {
            let p = probs[4 * l + t.index()];
            sums.type_ce -= (p + LOG_FLOOR).ln();
            d_probs[4 * l + t.index()] += lambda_type * (-1.0 / (p + LOG_FLOOR)) / n;
        }
    }

    // Route probability gradients through the softmax rows.
    let mut d_logits = vec![0.0; 4 * l_paths];
    for l in 0..l_paths {
        let row = softmax_backward4(&cache.probs[4 * l..4 * l + 4], &d_probs[4 * l..4 * l + 4]);
        d_logits[4 * l..4 * l + 4].copy_from_slice(&row);
    }

    let seeds = PinnGradSeeds {
        d_out,
        d_logits,
        d_refl,
    };
    pinn_backward(model, cache, &seeds, grads);
    Ok(())
}
