//! Mean-aggregation message-passing layers with skip connections, and the
//! four-layer refinement network built from them.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::SpatialGraph;
use crate::error::{invalid_argument, Result};
use crate::geom::Point2;
use crate::ndiff::{dropout_mask, Activation, DenseLayer, ParamSet};
use crate::norm::NormStats;

pub(crate) const HIDDEN: usize = 128;

/// Parameters of the refinement network.
///
/// Four message-passing layers with widths `in -> 128 -> 128 -> 128 -> out`;
/// each layer holds a self weight, a neighbour weight, a bias, and a learned
/// skip projection where the widths differ (identity skip otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    pub params: ParamSet,
    pub widths: Vec<usize>,
    pub norm: NormStats,
    pub l_paths: usize,
    /// Parameter-layer index of each message-passing layer's (self, neigh,
    /// optional skip) triple.
    layout: Vec<(usize, usize, Option<usize>)>,
    /// When set, the input feature columns `[offset, offset+out_width)` are
    /// added to the network output: the network then learns a residual
    /// correction on top of the upstream prediction it refines, and a
    /// near-zero-initialized output layer makes training start from the
    /// upstream prediction itself.
    residual_columns: Option<usize>,
}

impl GnnParams {
    /// Network over `in_dim = 2 + 4L` node features producing `4L` outputs.
    pub fn init(l_paths: usize, norm: NormStats, seed: u64) -> Self {
        Self::init_with_input(2 + 4 * l_paths, 4 * l_paths, l_paths, norm, seed)
    }

    /// Same topology with custom input/output widths (the single-parameter
    /// ablation pipelines reuse this).
    pub fn init_with_input(
        in_dim: usize,
        out_dim: usize,
        l_paths: usize,
        norm: NormStats,
        seed: u64,
    ) -> Self {
        let widths = vec![in_dim, HIDDEN, HIDDEN, HIDDEN, out_dim];
        let mut rng = StdRng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut layout = Vec::new();
        for i in 0..4 {
            let (fin, fout) = (widths[i], widths[i + 1]);
            let self_idx = layers.len();
            layers.push(DenseLayer::init_uniform(fout, fin, Activation::Identity, &mut rng));
            layers.push(DenseLayer::init_uniform_no_bias(
                fout,
                fin,
                Activation::Identity,
                &mut rng,
            ));
            let skip_idx = if fin != fout {
                layers.push(DenseLayer::init_uniform_no_bias(
                    fout,
                    fin,
                    Activation::Identity,
                    &mut rng,
                ));
                Some(self_idx + 2)
            } else {
                None
            };
            layout.push((self_idx, self_idx + 1, skip_idx));
        }
        Self {
            params: ParamSet::new(layers),
            widths,
            norm,
            l_paths,
            layout,
            residual_columns: None,
        }
    }

    /// Switch to residual refinement: the input columns starting at `offset`
    /// bypass the network and add to its output, and the output layer's
    /// weights zero out so the initial network computes exactly the bypassed
    /// prediction. Combined with init-inclusive validation selection in the
    /// trainer, refinement can then only improve on its input.
    pub fn with_residual(mut self, offset: usize) -> Self {
        let out_dim = *self.widths.last().unwrap();
        debug_assert!(offset + out_dim <= self.widths[0]);
        self.residual_columns = Some(offset);
        let (s, n, k) = self.layout[3];
        for idx in [Some(s), Some(n), k].into_iter().flatten() {
            for w in self.params.layers[idx].weights.data_mut() {
                *w = 0.0;
            }
        }
        self
    }

    pub fn residual_offset(&self) -> Option<usize> {
        self.residual_columns
    }

    fn activation(layer: usize) -> Activation {
        if layer < 3 {
            Activation::Relu
        } else {
            Activation::Identity
        }
    }

    /// The same network with a replaced parameter set (shapes must match);
    /// used by gradient checking to evaluate perturbed copies.
    pub fn with_params(&self, params: ParamSet) -> GnnParams {
        GnnParams {
            params,
            widths: self.widths.clone(),
            norm: self.norm.clone(),
            l_paths: self.l_paths,
            layout: self.layout.clone(),
            residual_columns: self.residual_columns,
        }
    }

    pub(crate) fn layer_refs(&self, i: usize) -> (&DenseLayer, &DenseLayer, Option<&DenseLayer>) {
        let (s, n, k) = self.layout[i];
        (
            &self.params.layers[s],
            &self.params.layers[n],
            k.map(|idx| &self.params.layers[idx]),
        )
    }

    pub(crate) fn layout(&self) -> &[(usize, usize, Option<usize>)] {
        &self.layout
    }
}

/// Node features: normalized coordinates concatenated with `extra_width`
/// normalized multipath features per node (row-major, one row per node).
pub fn node_features(
    coords: &[Point2],
    extra: &[f64],
    extra_width: usize,
    norm: &NormStats,
) -> Vec<f64> {
    debug_assert_eq!(extra.len(), coords.len() * extra_width);
    let f = 2 + extra_width;
    let mut out = vec![0.0; coords.len() * f];
    for (v, c) in coords.iter().enumerate() {
        let cn = norm.normalize_coords(c.x, c.y);
        out[v * f] = cn[0];
        out[v * f + 1] = cn[1];
        out[v * f + 2..v * f + f]
            .copy_from_slice(&extra[v * extra_width..(v + 1) * extra_width]);
    }
    out
}

/// Mean of the neighbours' feature rows; zero vector for an isolated node.
fn neighbor_means(features: &[f64], width: usize, graph: &SpatialGraph) -> Vec<f64> {
    let n = graph.len();
    let mut means = vec![0.0; n * width];
    means
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(v, row)| {
            let nbrs = &graph.neighbors[v];
            if nbrs.is_empty() {
                return;
            }
            for &u in nbrs {
                let src = &features[u as usize * width..(u as usize + 1) * width];
                for (r, s) in row.iter_mut().zip(src) {
                    *r += s;
                }
            }
            let inv = 1.0 / nbrs.len() as f64;
            for r in row.iter_mut() {
                *r *= inv;
            }
        });
    means
}

/// One message-passing layer over explicit parameters:
/// `h'_v = act(W_self h_v + W_neigh mean_{u in N(v)} h_u + b) + skip(h_v)`.
pub fn sage_layer(
    features: &[f64],
    graph: &SpatialGraph,
    self_w: &DenseLayer,
    neigh_w: &DenseLayer,
    skip: Option<&DenseLayer>,
    activation: Activation,
) -> Result<Vec<f64>> {
    let fin = self_w.in_dim();
    let fout = self_w.out_dim();
    if features.len() != graph.len() * fin {
        return Err(invalid_argument(format!(
            "feature width mismatch: expected {} x {}, got {} values",
            graph.len(),
            fin,
            features.len()
        )));
    }
    let means = neighbor_means(features, fin, graph);
    let mut out = vec![0.0; graph.len() * fout];
    out.par_chunks_mut(fout).enumerate().try_for_each(|(v, row)| {
        let h = &features[v * fin..(v + 1) * fin];
        let m = &means[v * fin..(v + 1) * fin];
        let mut pre = vec![0.0; fout];
        self_w.weights.matvec(h, &mut pre);
        let mut nm = vec![0.0; fout];
        neigh_w.weights.matvec(m, &mut nm);
        for i in 0..fout {
            pre[i] += nm[i] + self_w.bias[i];
            row[i] = activation.apply(pre[i]);
        }
        match skip {
            Some(proj) => {
                let mut s = vec![0.0; fout];
                proj.weights.matvec(h, &mut s);
                for i in 0..fout {
                    row[i] += s[i];
                }
            }
            None => {
                if fin == fout {
                    for i in 0..fout {
                        row[i] += h[i];
                    }
                }
            }
        }
        Ok::<(), crate::error::Error>(())
    })?;
    Ok(out)
}

/// Dropout behaviour of a full-network forward pass.
#[derive(Debug, Clone, Copy)]
pub enum SageMode {
    Eval,
    /// Dropout on the three hidden layers' activation parts.
    Train { dropout: f64, seed: u64 },
}

/// Per-layer forward caches for the exact backward pass.
pub(crate) struct SageCache {
    /// Input features of each layer (post-dropout output of the previous).
    pub inputs: Vec<Vec<f64>>,
    /// Neighbour means of each layer's input.
    pub means: Vec<Vec<f64>>,
    /// Activation output (pre-skip, pre-dropout) of each layer.
    pub acts: Vec<Vec<f64>>,
    /// Dropout masks on the activation parts, when training.
    pub masks: Vec<Option<Vec<f64>>>,
}

pub(crate) fn gnn_forward_cached(
    model: &GnnParams,
    features: &[f64],
    graph: &SpatialGraph,
    mode: SageMode,
) -> Result<(Vec<f64>, SageCache)> {
    if features.len() != graph.len() * model.widths[0] {
        return Err(invalid_argument("node count/feature width mismatch"));
    }
    let mut rng = match mode {
        SageMode::Train { dropout, seed } if dropout > 0.0 => {
            Some((dropout, StdRng::seed_from_u64(seed)))
        }
        _ => None,
    };
    let mut cache = SageCache {
        inputs: Vec::with_capacity(4),
        means: Vec::with_capacity(4),
        acts: Vec::with_capacity(4),
        masks: Vec::with_capacity(4),
    };
    let mut h = features.to_vec();
    for i in 0..4 {
        let fin = model.widths[i];
        let fout = model.widths[i + 1];
        let (self_w, neigh_w, skip) = model.layer_refs(i);
        let act = GnnParams::activation(i);

        let means = neighbor_means(&h, fin, graph);
        // Activation part (pre-skip) computed node by node.
        let mut a = vec![0.0; graph.len() * fout];
        a.par_chunks_mut(fout).enumerate().for_each(|(v, row)| {
            let hv = &h[v * fin..(v + 1) * fin];
            let mv = &means[v * fin..(v + 1) * fin];
            let mut pre = vec![0.0; fout];
            self_w.weights.matvec(hv, &mut pre);
            let mut nm = vec![0.0; fout];
            neigh_w.weights.matvec(mv, &mut nm);
            for j in 0..fout {
                row[j] = act.apply(pre[j] + nm[j] + self_w.bias[j]);
            }
        });
        // Hidden layers: dropout on the activation part, then the skip.
        let mask = match (&mut rng, i < 3) {
            (Some((rate, rng)), true) => Some(dropout_mask(a.len(), *rate, rng)),
            _ => None,
        };
        let mut next = match &mask {
            Some(m) => a.iter().zip(m).map(|(x, mm)| x * mm).collect::<Vec<f64>>(),
            None => a.clone(),
        };
        match skip {
            Some(proj) => {
                next.par_chunks_mut(fout).enumerate().for_each(|(v, row)| {
                    let hv = &h[v * fin..(v + 1) * fin];
                    let mut sv = vec![0.0; fout];
                    proj.weights.matvec(hv, &mut sv);
                    for j in 0..fout {
                        row[j] += sv[j];
                    }
                });
            }
            None => {
                debug_assert_eq!(fin, fout);
                for (nv, hv) in next.iter_mut().zip(h.iter()) {
                    *nv += hv;
                }
            }
        }
        cache.inputs.push(h);
        cache.means.push(means);
        cache.acts.push(a);
        cache.masks.push(mask);
        h = next;
    }
    if let Some(offset) = model.residual_columns {
        let in_width = model.widths[0];
        let out_width = *model.widths.last().unwrap();
        for v in 0..graph.len() {
            for c in 0..out_width {
                h[v * out_width + c] += features[v * in_width + offset + c];
            }
        }
    }
    Ok((h, cache))
}

/// Inference forward pass: `N x 4L` refined features in normalized space.
pub fn gnn_forward(model: &GnnParams, features: &[f64], graph: &SpatialGraph) -> Result<Vec<f64>> {
    Ok(gnn_forward_cached(model, features, graph, SageMode::Eval)?.0)
}

/// Backward through the whole network given `d(loss)/d(output)`; accumulates
/// parameter gradients into `grads`.
pub(crate) fn gnn_backward(
    model: &GnnParams,
    graph: &SpatialGraph,
    cache: &SageCache,
    grad_out: &[f64],
    grads: &mut ParamSet,
) {
    let n = graph.len();
    let mut g = grad_out.to_vec();
    for i in (0..4).rev() {
        let fin = model.widths[i];
        let fout = model.widths[i + 1];
        let (s, nb, sk) = model.layout()[i];
        let act = GnnParams::activation(i);
        let inputs = &cache.inputs[i];
        let means = &cache.means[i];
        let acts = &cache.acts[i];

        // Gradient through the activation part (undo dropout first).
        let mut g_pre = vec![0.0; n * fout];
        for e in 0..n * fout {
            let masked = match &cache.masks[i] {
                Some(m) => g[e] * m[e],
                None => g[e],
            };
            g_pre[e] = masked * act.derivative_from_output(acts[e]);
        }

        // Parameter gradients, accumulated node by node in index order.
        {
            let gl_self = &mut grads.layers[s];
            for v in 0..n {
                let gp = &g_pre[v * fout..(v + 1) * fout];
                gl_self
                    .weights
                    .add_outer(gp, &inputs[v * fin..(v + 1) * fin]);
                for (b, d) in gl_self.bias.iter_mut().zip(gp) {
                    *b += d;
                }
            }
        }
        {
            let gl_neigh = &mut grads.layers[nb];
            for v in 0..n {
                let gp = &g_pre[v * fout..(v + 1) * fout];
                gl_neigh
                    .weights
                    .add_outer(gp, &means[v * fin..(v + 1) * fin]);
            }
        }
        if let Some(skip_idx) = sk {
            let gl_skip = &mut grads.layers[skip_idx];
            for v in 0..n {
                gl_skip.weights.add_outer(
                    &g[v * fout..(v + 1) * fout],
                    &inputs[v * fin..(v + 1) * fin],
                );
            }
        }

        // Input gradients: self path + skip path + neighbour redistribution.
        let self_w = &model.params.layers[s];
        let neigh_w = &model.params.layers[nb];
        // P_v = W_neigh^T g_pre_v, then g_h[u] += sum_{v in N(u)} P_v / deg_v
        // (adjacency is symmetric).
        let mut p = vec![0.0; n * fin];
        p.par_chunks_mut(fin).enumerate().for_each(|(v, row)| {
            neigh_w
                .weights
                .matvec_transpose_acc(&g_pre[v * fout..(v + 1) * fout], row);
        });
        let mut g_in = vec![0.0; n * fin];
        g_in.par_chunks_mut(fin).enumerate().for_each(|(u, row)| {
            self_w
                .weights
                .matvec_transpose_acc(&g_pre[u * fout..(u + 1) * fout], row);
            match sk {
                Some(skip_idx) => {
                    model.params.layers[skip_idx]
                        .weights
                        .matvec_transpose_acc(&g[u * fout..(u + 1) * fout], row);
                }
                None => {
                    for j in 0..fin {
                        row[j] += g[u * fout + j];
                    }
                }
            }
            for &v in &graph.neighbors[u] {
                let deg = graph.neighbors[v as usize].len() as f64;
                let src = &p[v as usize * fin..(v as usize + 1) * fin];
                for (r, sv) in row.iter_mut().zip(src) {
                    *r += sv / deg;
                }
            }
        });
        g = g_in;
    }
}
