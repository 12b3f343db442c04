//! The predictor network: environment encoder, main trunk with identity
//! skips, path classifier, and reflection-factor head, with a hand-written
//! exact backward pass.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::ndiff::{dropout_mask, Activation, DenseLayer, ParamSet};
use crate::norm::NormStats;

pub(crate) const ENC_HIDDEN: usize = 32;
pub(crate) const ENC_OUT: usize = 16;
pub(crate) const TRUNK: usize = 256;

// Layer order inside the ParamSet.
pub(crate) const L_ENC1: usize = 0;
pub(crate) const L_ENC2: usize = 1;
pub(crate) const L_ENC3: usize = 2;
pub(crate) const L_REFL: usize = 3;
pub(crate) const L_EMBED: usize = 4;
pub(crate) const L_H1: usize = 5;
pub(crate) const L_H2: usize = 6;
pub(crate) const L_H3: usize = 7;
pub(crate) const L_OUT: usize = 8;
pub(crate) const L_CLS: usize = 9;

/// All learnable state of the predictor plus the normalization it was
/// trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnParams {
    pub params: ParamSet,
    pub l_paths: usize,
    pub norm: NormStats,
}

impl PinnParams {
    /// Seeded initialization with the fixed topology for `l_paths` paths.
    ///
    /// The two coordinate-facing layers start with widened weights (and
    /// spread biases): a 2-input dense layer at standard scale leaves the
    /// whole network almost linear in the coordinates, and fine spatial
    /// structure then takes extremely long to emerge. Wide first-layer
    /// weights act like a bank of random hyperplane features over the map.
    pub fn init(l_paths: usize, norm: NormStats, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let cat = TRUNK + ENC_OUT;
        let coord_facing = |out: usize, rng: &mut StdRng| {
            let mut layer = DenseLayer::init_uniform(out, 2, Activation::Relu, rng);
            for w in layer.weights.data_mut() {
                *w *= 6.0;
            }
            for b in layer.bias.iter_mut() {
                *b = rng.random_range(-2.0..2.0);
            }
            layer
        };
        let enc1 = coord_facing(ENC_HIDDEN, &mut rng);
        let enc2 = DenseLayer::init_uniform(ENC_HIDDEN, ENC_HIDDEN, Activation::Relu, &mut rng);
        let enc3 = DenseLayer::init_uniform(ENC_OUT, ENC_HIDDEN, Activation::Relu, &mut rng);
        let refl = DenseLayer::init_uniform(l_paths, ENC_OUT, Activation::Sigmoid, &mut rng);
        let embed = coord_facing(TRUNK, &mut rng);
        let layers = vec![
            enc1,
            enc2,
            enc3,
            refl,
            embed,
            DenseLayer::init_uniform(TRUNK, cat, Activation::Relu, &mut rng),
            DenseLayer::init_uniform(TRUNK, TRUNK, Activation::Relu, &mut rng),
            DenseLayer::init_uniform(TRUNK, TRUNK, Activation::Relu, &mut rng),
            DenseLayer::init_uniform(4 * l_paths, TRUNK, Activation::Identity, &mut rng),
            DenseLayer::init_uniform(4 * l_paths, cat, Activation::Identity, &mut rng),
        ];
        Self {
            params: ParamSet::new(layers),
            l_paths,
            norm,
        }
    }

    fn layer(&self, idx: usize) -> &DenseLayer {
        &self.params.layers[idx]
    }
}

/// Network outputs for one coordinate, in normalized parameter space.
#[derive(Debug, Clone)]
pub struct PinnOutput {
    /// `4L` normalized multipath parameters, `[p, tau, theta, phi]` per path.
    pub params: Vec<f64>,
    /// `4L` type probabilities, one row-stochastic block of 4 per path.
    pub type_probs: Vec<f64>,
    /// `L` reflection characteristic factors in (0, 1).
    pub refl_factors: Vec<f64>,
}

/// Forward intermediates, sufficient for an exact backward pass.
#[derive(Debug, Clone)]
pub struct PinnCache {
    pub(crate) x: [f64; 2],
    e1_raw: Vec<f64>,
    e1: Vec<f64>,
    m_e1: Option<Vec<f64>>,
    e2_raw: Vec<f64>,
    e2: Vec<f64>,
    m_e2: Option<Vec<f64>>,
    fenv: Vec<f64>,
    refl: Vec<f64>,
    m0_raw: Vec<f64>,
    m_m0: Option<Vec<f64>>,
    h1_in: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    m_z1: Option<Vec<f64>>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    m_z2: Option<Vec<f64>>,
    z3: Vec<f64>,
    h3: Vec<f64>,
    m_z3: Option<Vec<f64>>,
    cls_in: Vec<f64>,
    pub(crate) probs: Vec<f64>,
}

/// Dropout behaviour of a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode {
    /// Deterministic, dropout disabled.
    Eval,
    /// Dropout on hidden activations, masks drawn from `seed` (one seed per
    /// sample keeps batches order- and thread-independent).
    Train { dropout: f64, seed: u64 },
}

fn apply_mask(v: &[f64], mask: &Option<Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => v.to_vec(),
    }
}

fn softmax4(logits: &[f64]) -> [f64; 4] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e = [0.0; 4];
    let mut sum = 0.0;
    for k in 0..4 {
        e[k] = (logits[k] - m).exp();
        sum += e[k];
    }
    for v in e.iter_mut() {
        *v /= sum;
    }
    e
}

/// Jacobian-vector product of a 4-way softmax row.
pub(crate) fn softmax_backward4(probs: &[f64], d_probs: &[f64]) -> [f64; 4] {
    let inner: f64 = (0..4).map(|k| d_probs[k] * probs[k]).sum();
    let mut d_logits = [0.0; 4];
    for j in 0..4 {
        d_logits[j] = probs[j] * (d_probs[j] - inner);
    }
    d_logits
}

/// One forward pass on normalized coordinates.
pub fn pinn_forward(
    model: &PinnParams,
    coords_norm: [f64; 2],
    mode: ForwardMode,
) -> Result<(PinnOutput, PinnCache)> {
    let l = model.l_paths;
    if model.layer(L_REFL).out_dim() != l || model.layer(L_OUT).out_dim() != 4 * l {
        return Err(invalid_argument("parameter shapes do not match l_paths"));
    }
    let mut rng = match mode {
        ForwardMode::Train { dropout, seed } if dropout > 0.0 => {
            Some((dropout, StdRng::seed_from_u64(seed)))
        }
        _ => None,
    };
    let mask_for = |len: usize, rng: &mut Option<(f64, StdRng)>| -> Option<Vec<f64>> {
        rng.as_mut()
            .map(|(rate, rng)| dropout_mask(len, *rate, rng))
    };
    let x = coords_norm;

    // Environment encoder.
    let e1_raw = model.layer(L_ENC1).forward(&x)?;
    let m_e1 = mask_for(e1_raw.len(), &mut rng);
    let e1 = apply_mask(&e1_raw, &m_e1);
    let e2_raw = model.layer(L_ENC2).forward(&e1)?;
    let m_e2 = mask_for(e2_raw.len(), &mut rng);
    let e2 = apply_mask(&e2_raw, &m_e2);
    let fenv = model.layer(L_ENC3).forward(&e2)?;
    let refl = model.layer(L_REFL).forward(&fenv)?;

    // Main trunk with identity skips across the 256-wide hidden layers.
    let m0_raw = model.layer(L_EMBED).forward(&x)?;
    let m_m0 = mask_for(m0_raw.len(), &mut rng);
    let m0 = apply_mask(&m0_raw, &m_m0);
    let mut h1_in = m0.clone();
    h1_in.extend_from_slice(&fenv);
    let z1 = model.layer(L_H1).forward(&h1_in)?;
    let m_z1 = mask_for(z1.len(), &mut rng);
    let h1 = apply_mask(&z1, &m_z1);
    let z2 = model.layer(L_H2).forward(&h1)?;
    let m_z2 = mask_for(z2.len(), &mut rng);
    let mut h2 = apply_mask(&z2, &m_z2);
    for (a, b) in h2.iter_mut().zip(&h1) {
        *a += b;
    }
    let z3 = model.layer(L_H3).forward(&h2)?;
    let m_z3 = mask_for(z3.len(), &mut rng);
    let mut h3 = apply_mask(&z3, &m_z3);
    for (a, b) in h3.iter_mut().zip(&h2) {
        *a += b;
    }
    let out = model.layer(L_OUT).forward(&h3)?;

    // Path classifier over trunk + scene features; softmax per path.
    let mut cls_in = h3.clone();
    cls_in.extend_from_slice(&fenv);
    let logits = model.layer(L_CLS).forward(&cls_in)?;
    let mut probs = vec![0.0; 4 * l];
    for path in 0..l {
        let row = softmax4(&logits[4 * path..4 * path + 4]);
        probs[4 * path..4 * path + 4].copy_from_slice(&row);
    }

    let output = PinnOutput {
        params: out,
        type_probs: probs.clone(),
        refl_factors: refl.clone(),
    };
    let cache = PinnCache {
        x,
        e1_raw,
        e1,
        m_e1,
        e2_raw,
        e2,
        m_e2,
        fenv,
        refl,
        m0_raw,
        m_m0,
        h1_in,
        z1,
        h1,
        m_z1,
        z2,
        h2,
        m_z2,
        z3,
        h3,
        m_z3,
        cls_in,
        probs,
    };
    Ok((output, cache))
}

/// Gradient seeds produced by the loss side, in the network's output spaces.
#[derive(Debug, Clone)]
pub struct PinnGradSeeds {
    /// d(loss)/d(params output), normalized space, length `4L`.
    pub d_out: Vec<f64>,
    /// d(loss)/d(classifier logits), length `4L` (softmax already applied).
    pub d_logits: Vec<f64>,
    /// d(loss)/d(reflection factors), length `L`.
    pub d_refl: Vec<f64>,
}

fn mask_grad(g: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (gi, mi) in g.iter_mut().zip(m) {
            *gi *= mi;
        }
    }
}

/// Exact backward pass: accumulates parameter gradients into `grads`.
pub(crate) fn pinn_backward(
    model: &PinnParams,
    cache: &PinnCache,
    seeds: &PinnGradSeeds,
    grads: &mut ParamSet,
) {
    let layers = &model.params.layers;
    let gl = &mut grads.layers;

    // Output head.
    let mut g_h3 = vec![0.0; TRUNK];
    layers[L_OUT].backward(
        &cache.h3,
        // identity activation: output equals preactivation
        &seeds.d_out,
        &seeds.d_out,
        &mut gl[L_OUT],
        Some(&mut g_h3),
    );

    // Classifier; splits into trunk and scene-feature gradients.
    let mut g_cls_in = vec![0.0; TRUNK + ENC_OUT];
    layers[L_CLS].backward(
        &cache.cls_in,
        &seeds.d_logits,
        &seeds.d_logits,
        &mut gl[L_CLS],
        Some(&mut g_cls_in),
    );
    for i in 0..TRUNK {
        g_h3[i] += g_cls_in[i];
    }
    let mut g_fenv: Vec<f64> = g_cls_in[TRUNK..].to_vec();

    // h3 = drop(z3) + h2.
    let mut g_z3 = g_h3.clone();
    mask_grad(&mut g_z3, &cache.m_z3);
    let mut g_h2 = g_h3; // skip branch
    layers[L_H3].backward(&cache.h2, &cache.z3, &g_z3, &mut gl[L_H3], Some(&mut g_h2));

    // h2 = drop(z2) + h1.
    let mut g_z2 = g_h2.clone();
    mask_grad(&mut g_z2, &cache.m_z2);
    let mut g_h1 = g_h2;
    layers[L_H2].backward(&cache.h1, &cache.z2, &g_z2, &mut gl[L_H2], Some(&mut g_h1));

    // h1 = drop(z1).
    let mut g_z1 = g_h1;
    mask_grad(&mut g_z1, &cache.m_z1);
    let mut g_h1_in = vec![0.0; TRUNK + ENC_OUT];
    layers[L_H1].backward(
        &cache.h1_in,
        &cache.z1,
        &g_z1,
        &mut gl[L_H1],
        Some(&mut g_h1_in),
    );
    let mut g_m0: Vec<f64> = g_h1_in[..TRUNK].to_vec();
    for (a, b) in g_fenv.iter_mut().zip(&g_h1_in[TRUNK..]) {
        *a += b;
    }

    // Coordinate embedding.
    mask_grad(&mut g_m0, &cache.m_m0);
    layers[L_EMBED].backward(&cache.x, &cache.m0_raw, &g_m0, &mut gl[L_EMBED], None);

    // Reflection head feeds back into the scene features.
    layers[L_REFL].backward(
        &cache.fenv,
        &cache.refl,
        &seeds.d_refl,
        &mut gl[L_REFL],
        Some(&mut g_fenv),
    );

    // Encoder.
    let mut g_e2 = vec![0.0; ENC_HIDDEN];
    layers[L_ENC3].backward(
        &cache.e2,
        &cache.fenv,
        &g_fenv,
        &mut gl[L_ENC3],
        Some(&mut g_e2),
    );
    mask_grad(&mut g_e2, &cache.m_e2);
    let mut g_e1 = vec![0.0; ENC_HIDDEN];
    layers[L_ENC2].backward(
        &cache.e1,
        &cache.e2_raw,
        &g_e2,
        &mut gl[L_ENC2],
        Some(&mut g_e1),
    );
    mask_grad(&mut g_e1, &cache.m_e1);
    layers[L_ENC1].backward(&cache.x, &cache.e1_raw, &g_e1, &mut gl[L_ENC1], None);
}

/// Convenience: normalized prediction at a physical coordinate, eval mode.
pub fn pinn_predict_norm(model: &PinnParams, x: f64, y: f64) -> Result<PinnOutput> {
    let coords = model.norm.normalize_coords(x, y);
    Ok(pinn_forward(model, coords, ForwardMode::Eval)?.0)
}
