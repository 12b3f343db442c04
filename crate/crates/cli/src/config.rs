//! Run configuration: a versioned JSON file with fail-fast unknown-key
//! handling, mapped onto the core pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rfmap_core::error::{Error, Result};
use rfmap_core::geom::{Point2, Rect};
use rfmap_core::geoscene::{read_scene, synthesize_scene, Scene};
use rfmap_core::pinn::LossWeights;
use rfmap_core::pipeline::PipelineConfig;
use rfmap_core::seed::derive_seed;

pub const CONFIG_VERSION: u32 = 1;

/// Scene source: an existing scene file, or synthesis parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Load this scene JSON instead of synthesizing.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Synthesis seed; defaults to a stream derived from the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_size")]
    pub size_m: f64,
    #[serde(default = "default_walls")]
    pub n_walls: usize,
    #[serde(default = "default_scatterers")]
    pub n_scatterers: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            path: None,
            seed: None,
            size_m: default_size(),
            n_walls: default_walls(),
            n_scatterers: default_scatterers(),
        }
    }
}

fn default_size() -> f64 {
    64.0
}
fn default_walls() -> usize {
    10
}
fn default_scatterers() -> usize {
    5
}
fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_l_paths() -> usize {
    3
}
fn default_rate() -> f64 {
    0.10
}
fn default_grid_spacing() -> f64 {
    1.0
}
fn default_pinn_epochs() -> usize {
    300
}
fn default_gnn_epochs() -> usize {
    800
}
fn default_base_lr() -> f64 {
    0.001
}
fn default_weight_decay() -> f64 {
    1e-5
}
fn default_dropout() -> f64 {
    0.1
}
fn default_k() -> usize {
    8
}
fn default_batch_size() -> usize {
    256
}
fn default_augment_rounds() -> usize {
    5
}
fn default_pinn_patience() -> usize {
    30
}
fn default_gnn_patience() -> usize {
    60
}
fn default_collocation_ratio() -> f64 {
    1.0
}

/// The full run configuration. Unknown keys in the file are errors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub scene: SceneSpec,
    #[serde(default = "default_l_paths")]
    pub l_paths: usize,
    #[serde(default = "default_rate")]
    pub sampling_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_spacing")]
    pub grid_spacing: f64,
    #[serde(default = "default_pinn_epochs")]
    pub pinn_epochs: usize,
    #[serde(default = "default_gnn_epochs")]
    pub gnn_epochs: usize,
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_augment_rounds")]
    pub augment_rounds: usize,
    /// Augmentation jitter sigma in metres; omitted means 0.1 * grid_spacing.
    #[serde(default)]
    pub jitter_sigma: Option<f64>,
    #[serde(default = "default_pinn_patience")]
    pub pinn_patience: usize,
    #[serde(default = "default_gnn_patience")]
    pub gnn_patience: usize,
    /// Label-free physics collocation samples per epoch, as a fraction of
    /// the training-set size.
    #[serde(default = "default_collocation_ratio")]
    pub collocation_ratio: f64,
    #[serde(default)]
    pub loss_weights: Option<LossWeights>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "unsupported config version {} (expected {CONFIG_VERSION})",
                    self.version
                ),
            });
        }
        let positive = [
            (self.sampling_rate > 0.0 && self.sampling_rate < 1.0, "sampling_rate in (0,1)"),
            (self.l_paths >= 1, "l_paths >= 1"),
            (self.grid_spacing > 0.0, "grid_spacing > 0"),
            (self.pinn_epochs >= 1, "pinn_epochs >= 1"),
            (self.gnn_epochs >= 1, "gnn_epochs >= 1"),
            (self.base_lr > 0.0, "base_lr > 0"),
            (self.dropout >= 0.0 && self.dropout < 1.0, "dropout in [0,1)"),
            (self.k >= 1, "k >= 1"),
            (self.batch_size >= 1, "batch_size >= 1"),
        ];
        for (ok, what) in positive {
            if !ok {
                return Err(rfmap_core::error::invalid_argument(format!(
                    "config requires {what}"
                )));
            }
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            l_paths: self.l_paths,
            k: self.k,
            augment_rounds: self.augment_rounds,
            jitter_sigma: self.jitter_sigma,
            pinn_epochs: self.pinn_epochs,
            gnn_epochs: self.gnn_epochs,
            batch_size: self.batch_size,
            base_lr: self.base_lr,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            pinn_patience: self.pinn_patience,
            gnn_patience: self.gnn_patience,
            collocation_ratio: self.collocation_ratio,
            weights: self.loss_weights.clone().unwrap_or_default(),
            seed: self.seed,
        }
    }

    /// Load or synthesize the scene this config describes.
    pub fn resolve_scene(&self) -> Result<Scene> {
        match &self.scene.path {
            Some(path) => read_scene(path),
            None => {
                let seed = self.scene.seed.unwrap_or(derive_seed(self.seed, "scene"));
                let bounds = Rect::new(
                    Point2::new(0.0, 0.0),
                    Point2::new(self.scene.size_m, self.scene.size_m),
                );
                synthesize_scene(seed, bounds, self.scene.n_walls, self.scene.n_scatterers)
            }
        }
    }

    /// FNV-1a hash of the canonical JSON form, recorded in checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let config: RunConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        config.validate().unwrap();
        assert_eq!(config.l_paths, 3);
        assert_eq!(config.pinn_epochs, 300);
        assert_eq!(config.gnn_epochs, 800);
        assert_eq!(config.base_lr, 0.001);
        assert_eq!(config.k, 8);
        assert_eq!(config.sampling_rate, 0.10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"sed": 7}"#);
        assert!(err.is_err(), "typo'd key must fail fast");
    }

    #[test]
    fn roundtrips_through_file_form() {
        let config = RunConfig::default();
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn bad_version_rejected() {
        let config: RunConfig = serde_json::from_str(r#"{"version": 99}"#).unwrap();
        assert!(config.validate().is_err());
    }
}
