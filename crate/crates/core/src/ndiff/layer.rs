//! Dense layers, activations, dropout, and the sequential forward/backward
//! pair used by the predictor stacks.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::mat::Mat;
use crate::error::{invalid_argument, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's own output value.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// A fully connected layer `y = act(W x + b)`.
///
/// `bias` may be empty, meaning the layer has no bias term (used for the
/// neighbour/projection weights of graph layers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(out_dim: usize, in_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Mat::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn zeros_no_bias(out_dim: usize, in_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Mat::zeros(out_dim, in_dim),
            bias: Vec::new(),
            activation,
        }
    }

    /// Uniform init in ±sqrt(6 / (fan_in + fan_out)) from a seeded generator.
    pub fn init_uniform(
        out_dim: usize,
        in_dim: usize,
        activation: Activation,
        rng: &mut StdRng,
    ) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Mat::from_fn(out_dim, in_dim, |_, _| rng.random_range(-bound..bound));
        Self {
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn init_uniform_no_bias(
        out_dim: usize,
        in_dim: usize,
        activation: Activation,
        rng: &mut StdRng,
    ) -> Self {
        let mut layer = Self::init_uniform(out_dim, in_dim, activation, rng);
        layer.bias = Vec::new();
        layer
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim() {
            return Err(invalid_argument(format!(
                "layer expects input of length {}, got {}",
                self.in_dim(),
                input.len()
            )));
        }
        let mut out = vec![0.0; self.out_dim()];
        self.weights.matvec(input, &mut out);
        if !self.bias.is_empty() {
            for (o, b) in out.iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        for o in out.iter_mut() {
            *o = self.activation.apply(*o);
        }
        Ok(out)
    }

    /// Backward through this layer given the *post-activation* output and the
    /// incoming gradient. Accumulates parameter gradients into `grads` and,
    /// when requested, the input gradient into `grad_in`.
    pub fn backward(
        &self,
        input: &[f64],
        output: &[f64],
        grad_out: &[f64],
        grads: &mut DenseLayer,
        grad_in: Option<&mut [f64]>,
    ) {
        let mut dpre = vec![0.0; self.out_dim()];
        for i in 0..self.out_dim() {
            dpre[i] = grad_out[i] * self.activation.derivative_from_output(output[i]);
        }
        grads.weights.add_outer(&dpre, input);
        if !grads.bias.is_empty() {
            for (b, d) in grads.bias.iter_mut().zip(&dpre) {
                *b += d;
            }
        }
        if let Some(gi) = grad_in {
            self.weights.matvec_transpose_acc(&dpre, gi);
        }
    }
}

/// Inverted-scaling dropout mask: entries are 0 with probability `rate`,
/// otherwise `1/(1-rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut StdRng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                1.0 / keep
            }
        })
        .collect()
}

/// How a sequential forward should treat dropout.
#[derive(Debug, Clone, Copy)]
pub enum DropoutPlan {
    /// Inference: no dropout, rng-independent.
    Off,
    /// Training: dropout at `rate` on hidden activations, masks drawn from a
    /// generator seeded with `seed`.
    Train { rate: f64, seed: u64 },
}

/// Caches from a sequential forward pass, sufficient for an exact backward.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer (post-dropout output of the previous one).
    pub inputs: Vec<Vec<f64>>,
    /// Post-activation output of each layer (before dropout).
    pub outputs: Vec<Vec<f64>>,
    /// Dropout mask applied after each hidden layer (`None` when off).
    pub masks: Vec<Option<Vec<f64>>>,
}

/// Forward through a stack of layers. Dropout applies to hidden activations
/// only, never to the final layer's output.
pub fn mlp_forward(
    layers: &[DenseLayer],
    input: &[f64],
    dropout: DropoutPlan,
) -> Result<(Vec<f64>, MlpCache)> {
    let mut rng = match dropout {
        DropoutPlan::Train { rate, seed } if rate > 0.0 => Some((rate, StdRng::seed_from_u64(seed))),
        _ => None,
    };
    let mut cache = MlpCache {
        inputs: Vec::with_capacity(layers.len()),
        outputs: Vec::with_capacity(layers.len()),
        masks: Vec::with_capacity(layers.len()),
    };
    let mut x = input.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let out = layer.forward(&x)?;
        let is_hidden = i + 1 < layers.len();
        let (next, mask) = match (&mut rng, is_hidden) {
            (Some((rate, rng)), true) => {
                let mask = dropout_mask(out.len(), *rate, rng);
                let dropped: Vec<f64> = out.iter().zip(&mask).map(|(o, m)| o * m).collect();
                (dropped, Some(mask))
            }
            _ => (out.clone(), None),
        };
        cache.inputs.push(x);
        cache.outputs.push(out);
        cache.masks.push(mask);
        x = next;
    }
    Ok((x, cache))
}

/// Backward through a stack of layers; returns the gradient w.r.t. the input.
pub fn mlp_backward(
    layers: &[DenseLayer],
    cache: &MlpCache,
    grad_out: &[f64],
    grads: &mut [DenseLayer],
) -> Result<Vec<f64>> {
    if cache.inputs.len() != layers.len() || grads.len() != layers.len() {
        return Err(invalid_argument("cache/grads do not match layer stack"));
    }
    let mut g = grad_out.to_vec();
    for i in (0..layers.len()).rev() {
        // Undo dropout applied to this layer's output, if any.
        if let Some(mask) = &cache.masks[i] {
            for (gi, m) in g.iter_mut().zip(mask) {
                *gi *= m;
            }
        }
        let mut g_in = vec![0.0; layers[i].in_dim()];
        layers[i].backward(
            &cache.inputs[i],
            &cache.outputs[i],
            &g,
            &mut grads[i],
            Some(&mut g_in),
        );
        g = g_in;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_layer(n: usize) -> DenseLayer {
        let mut l = DenseLayer::zeros(n, n, Activation::Identity);
        for i in 0..n {
            l.weights.set(i, i, 1.0);
        }
        l
    }

    #[test]
    fn identity_passthrough() {
        let l = identity_layer(3);
        let y = l.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn relu_clamps() {
        let mut l = identity_layer(2);
        l.activation = Activation::Relu;
        let y = l.forward(&[-1.0, 2.0]).unwrap();
        assert_eq!(y, vec![0.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let l = identity_layer(3);
        assert!(l.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        // y = Wx, upstream g: dW = g xᵀ.
        let l = DenseLayer::zeros(2, 3, Activation::Identity);
        let mut grads = DenseLayer::zeros(2, 3, Activation::Identity);
        let x = [1.0, 2.0, 3.0];
        let y = l.forward(&x).unwrap();
        l.backward(&x, &y, &[1.0, -1.0], &mut grads, None);
        assert_eq!(grads.weights.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(grads.weights.row(1), &[-1.0, -2.0, -3.0]);
        assert_eq!(grads.bias, vec![1.0, -1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = StdRng::seed_from_u64(3);
        let l = DenseLayer::init_uniform(4, 5, Activation::Tanh, &mut rng);
        let mut grads = DenseLayer::zeros(4, 5, Activation::Tanh);
        let x: Vec<f64> = (0..5).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y = l.forward(&x).unwrap();
        l.backward(&x, &y, &[0.0; 4], &mut grads, None);
        assert!(grads.weights.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_off_is_rng_independent() {
        let mut rng = StdRng::seed_from_u64(11);
        let layers = vec![
            DenseLayer::init_uniform(8, 4, Activation::Relu, &mut rng),
            DenseLayer::init_uniform(2, 8, Activation::Identity, &mut rng),
        ];
        let x = [0.1, -0.4, 0.7, 0.2];
        let (a, _) = mlp_forward(&layers, &x, DropoutPlan::Off).unwrap();
        let (b, _) = mlp_forward(
            &layers,
            &x,
            DropoutPlan::Train {
                rate: 0.0,
                seed: 999,
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_masks_hidden_only() {
        let mut rng = StdRng::seed_from_u64(5);
        let layers = vec![
            DenseLayer::init_uniform(64, 4, Activation::Relu, &mut rng),
            DenseLayer::init_uniform(3, 64, Activation::Identity, &mut rng),
        ];
        let x = [0.3, 0.1, -0.2, 0.9];
        let (_, cache) = mlp_forward(
            &layers,
            &x,
            DropoutPlan::Train {
                rate: 0.5,
                seed: 42,
            },
        )
        .unwrap();
        assert!(cache.masks[0].is_some());
        assert!(cache.masks[1].is_none());
        let mask = cache.masks[0].as_ref().unwrap();
        assert!(mask.iter().any(|&m| m == 0.0));
        assert!(mask.iter().any(|&m| m == 2.0));
    }
}
