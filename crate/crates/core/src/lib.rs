//! Construction of dense multipath RF maps from sparse samples.
//!
//! The crate models a region as a field of per-location multipath descriptors
//! (received power, delay, elevation and azimuth of arrival for `L` paths) and
//! provides everything needed to rebuild that field from a small fraction of
//! measured locations:
//!
//! - [`geoscene`] — synthetic scenes and a first-order geometric propagation
//!   oracle (free-space, image-method reflections, point scatterers and
//!   diffraction corners) that generates ground-truth datasets,
//! - [`ndiff`] — a minimal dense-layer numeric core with exact reverse-mode
//!   gradients, Adam, and a cosine learning-rate schedule,
//! - [`pinn`] — a physics-informed coordinate-to-multipath predictor trained
//!   with power / delay / angle / consistency constraints,
//! - [`graph`] — k-nearest-neighbour spatial graph plus a mean-aggregation
//!   message-passing network that refines the predictor output,
//! - [`baselines`] — ordinary kriging and the ablation pipelines used for
//!   comparison,
//! - [`eval`] — MSE/RMSE/NMSE metrics, error CDFs, heatmap export, channel
//!   impulse responses and planar-array steering vectors.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod geom;
pub mod geoscene;
pub mod graph;
pub mod ndiff;
pub mod norm;
pub mod pinn;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
