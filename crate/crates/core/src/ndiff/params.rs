//! Parameter containers with a flat view for the optimizer and checkpointing.

use serde::{Deserialize, Serialize};

use super::layer::DenseLayer;
use crate::error::{invalid_argument, Result};

/// A named auxiliary parameter vector (anything that is not a dense layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxParam {
    pub name: String,
    pub values: Vec<f64>,
}

/// Ordered collection of all learnable parameters of one model.
///
/// The flat view is the concatenation, in order, of each layer's weights
/// (row-major) then bias, followed by each auxiliary vector. Structured and
/// flat forms round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<DenseLayer>,
    pub aux: Vec<AuxParam>,
}

impl ParamSet {
    pub fn new(layers: Vec<DenseLayer>) -> Self {
        Self {
            layers,
            aux: Vec::new(),
        }
    }

    pub fn flat_len(&self) -> usize {
        let layer_len: usize = self
            .layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum();
        layer_len + self.aux.iter().map(|a| a.values.len()).sum::<usize>()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.flat_len());
        for layer in &self.layers {
            flat.extend_from_slice(layer.weights.data());
            flat.extend_from_slice(&layer.bias);
        }
        for aux in &self.aux {
            flat.extend_from_slice(&aux.values);
        }
        flat
    }

    pub fn copy_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(invalid_argument(format!(
                "flat vector has {} entries, parameter set holds {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let wlen = layer.weights.data().len();
            layer
                .weights
                .data_mut()
                .copy_from_slice(&flat[offset..offset + wlen]);
            offset += wlen;
            let blen = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
        for aux in &mut self.aux {
            let alen = aux.values.len();
            aux.values.copy_from_slice(&flat[offset..offset + alen]);
            offset += alen;
        }
        Ok(())
    }

    /// Same shapes, all values zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let mut z = DenseLayer::zeros(l.out_dim(), l.in_dim(), l.activation);
                    if l.bias.is_empty() {
                        z.bias = Vec::new();
                    }
                    z
                })
                .collect(),
            aux: self
                .aux
                .iter()
                .map(|a| AuxParam {
                    name: a.name.clone(),
                    values: vec![0.0; a.values.len()],
                })
                .collect(),
        }
    }

    /// `self += s * other`, blockwise. Shapes must match.
    pub fn add_scaled(&mut self, other: &ParamSet, s: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                *x += s * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += s * y;
            }
        }
        for (a, b) in self.aux.iter_mut().zip(&other.aux) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += s * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_value_mut(|v| *v *= s);
    }

    pub fn for_each_value_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            for v in layer.weights.data_mut() {
                f(v);
            }
            for v in &mut layer.bias {
                f(v);
            }
        }
        for aux in &mut self.aux {
            for v in &mut aux.values {
                f(v);
            }
        }
    }

    /// Human-readable description of the block containing flat index `idx`.
    pub fn describe_index(&self, mut idx: usize) -> String {
        for (i, layer) in self.layers.iter().enumerate() {
            let w = layer.weights.data().len();
            if idx < w {
                return format!("layer{}.weights[{}]", i, idx);
            }
            idx -= w;
            if idx < layer.bias.len() {
                return format!("layer{}.bias[{}]", i, idx);
            }
            idx -= layer.bias.len();
        }
        for aux in &self.aux {
            if idx < aux.values.len() {
                return format!("{}[{}]", aux.name, idx);
            }
            idx -= aux.values.len();
        }
        "out-of-range".to_string()
    }

    /// Flat spans `(start, len)` of each block (per-layer weights, per-layer
    /// bias, each aux vector), used for stratified gradient checking.
    pub fn block_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut offset = 0;
        for layer in &self.layers {
            let w = layer.weights.data().len();
            spans.push((offset, w));
            offset += w;
            if !layer.bias.is_empty() {
                spans.push((offset, layer.bias.len()));
                offset += layer.bias.len();
            }
        }
        for aux in &self.aux {
            spans.push((offset, aux.values.len()));
            offset += aux.values.len();
        }
        spans
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndiff::Activation;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn sample_params() -> ParamSet {
        let mut rng = StdRng::seed_from_u64(1);
        let mut p = ParamSet::new(vec![
            DenseLayer::init_uniform(3, 2, Activation::Relu, &mut rng),
            DenseLayer::init_uniform_no_bias(2, 3, Activation::Identity, &mut rng),
        ]);
        p.aux.push(AuxParam {
            name: "gamma".into(),
            values: vec![0.5, -0.5],
        });
        p
    }

    #[test]
    fn flat_roundtrip_is_identity() {
        let p = sample_params();
        assert_eq!(p.flat_len(), 3 * 2 + 3 + 2 * 3 + 2);
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.flat_len());
        let mut q = p.zeros_like();
        q.copy_from_flat(&flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn flat_length_mismatch_rejected() {
        let mut p = sample_params();
        assert!(p.copy_from_flat(&[0.0; 3]).is_err());
    }

    #[test]
    fn block_spans_cover_everything() {
        let p = sample_params();
        let spans = p.block_spans();
        let total: usize = spans.iter().map(|&(_, len)| len).sum();
        assert_eq!(total, p.flat_len());
        // Spans are contiguous and ordered.
        let mut expect = 0;
        for &(start, len) in &spans {
            assert_eq!(start, expect);
            expect += len;
        }
    }
}
