//! Minimal numeric core for the small fixed-topology networks in this crate:
//! dense layers, exact reverse-mode gradients, Adam with decoupled weight
//! decay, a cosine learning-rate schedule, and finite-difference gradient
//! checking.
//!
//! Everything is `f64` and strictly deterministic: fixed summation order,
//! seeded initialization, explicit rng state for dropout.

mod adam;
mod gradcheck;
mod layer;
mod mat;
mod params;

pub use adam::{adam_step, cosine_lr, OptimizerState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layer::{
    dropout_mask, mlp_backward, mlp_forward, Activation, DenseLayer, DropoutPlan, MlpCache,
};
pub use mat::Mat;
pub use params::{AuxParam, ParamSet};
