//! Spatial refinement stage: k-nearest-neighbour graph over receiver
//! coordinates and a four-layer mean-aggregation message-passing network
//! with skip connections.

mod knn;
mod sage;
mod train;

pub use knn::{build_knn, knn_brute_force, SpatialGraph};
pub use sage::{gnn_forward, node_features, sage_layer, GnnParams, SageMode};
pub use train::{gnn_loss_grad, refine_full, train_gnn, GnnEpochStats, GnnTrainConfig};
