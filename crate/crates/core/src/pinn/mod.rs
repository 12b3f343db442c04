//! Physics-informed multipath predictor.
//!
//! A coordinate-conditioned model with three parts: an environment encoder
//! (2 -> 32 -> 32 -> 16), a main network (2 -> 256 embed, three 256-wide
//! hidden layers with identity skips, linear head to `L x 4`), and a path
//! classifier over four propagation types. Training minimizes a supervised
//! fit plus power / delay / angle / consistency constraints derived from
//! free-space theory, and a path-type cross-entropy, under dynamic weights.

mod loss;
mod model;
mod theory;
mod train;

pub use loss::{
    angle_errors, composite_loss_grad, label_path_types, loss_angle, loss_consistency, loss_delay,
    loss_power, loss_supervised, loss_type, CompositeMode, LossBreakdown, LossWeights, Sample,
};
pub use model::{
    pinn_forward, pinn_predict_norm, ForwardMode, PinnCache, PinnGradSeeds, PinnOutput, PinnParams,
};
pub(crate) use model::pinn_backward;
pub use theory::{theory_los, TheoryLos};
pub use train::{build_samples, train_pinn, PinnEpochStats, PinnTrainConfig};
