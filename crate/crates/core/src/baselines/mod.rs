//! Comparison methods: ordinary kriging and the ablation pipelines
//! (per-parameter separate models, graph network alone, predictor alone).

mod kriging;
mod runners;

pub use kriging::{kriging_fit, kriging_predict, KrigingPrediction, VariogramModel};
pub use runners::{
    fit_field_variogram, proposed_as_baseline, run_gnn_only, run_kriging, run_pinn_only,
    run_separate, BaselineResult,
};
