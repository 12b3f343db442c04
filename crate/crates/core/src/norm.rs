//! Feature-level normalization shared by the predictor, the graph stage, the
//! baselines and the metrics.
//!
//! Statistics are z-scores fitted on the training split only; the four
//! multipath parameter kinds use valid paths only so the invalid-path
//! sentinel never contaminates them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::geoscene::MultipathRecord;

/// Affine normalization of a single feature: `norm = (v - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: f64,
    pub scale: f64,
}

impl FeatureNorm {
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.scale + self.mean
    }
}

fn fit_feature(values: &[f64]) -> FeatureNorm {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    FeatureNorm {
        mean,
        scale: var.sqrt().max(1e-9),
    }
}

/// Z-score statistics for coordinates and the four multipath parameter kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub x: FeatureNorm,
    pub y: FeatureNorm,
    pub power: FeatureNorm,
    pub delay: FeatureNorm,
    pub elevation: FeatureNorm,
    pub azimuth: FeatureNorm,
}

impl NormStats {
    /// Fit statistics from training records.
    pub fn fit(records: &[&MultipathRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(invalid_argument("cannot fit normalization on empty set"));
        }
        let xs: Vec<f64> = records.iter().map(|r| r.coords.x).collect();
        let ys: Vec<f64> = records.iter().map(|r| r.coords.y).collect();
        let mut power = Vec::new();
        let mut delay = Vec::new();
        let mut elevation = Vec::new();
        let mut azimuth = Vec::new();
        for r in records {
            for p in r.paths.iter().filter(|p| p.valid) {
                power.push(p.power_dbm);
                delay.push(p.delay_ns);
                elevation.push(p.elevation_deg);
                azimuth.push(p.azimuth_deg);
            }
        }
        if power.is_empty() {
            return Err(invalid_argument(
                "training records contain no valid paths to fit normalization",
            ));
        }
        Ok(Self {
            x: fit_feature(&xs),
            y: fit_feature(&ys),
            power: fit_feature(&power),
            delay: fit_feature(&delay),
            elevation: fit_feature(&elevation),
            azimuth: fit_feature(&azimuth),
        })
    }

    pub fn normalize_coords(&self, x: f64, y: f64) -> [f64; 2] {
        [self.x.normalize(x), self.y.normalize(y)]
    }

    /// Per-kind norms in target layout order: power, delay, elevation, azimuth.
    pub fn param_kinds(&self) -> [FeatureNorm; 4] {
        [self.power, self.delay, self.elevation, self.azimuth]
    }

    /// Flatten a record into the `4·L` normalized target vector (layout
    /// `[p, tau, theta, phi]` per path) plus its per-entry validity mask.
    pub fn record_targets(&self, record: &MultipathRecord) -> (Vec<f64>, Vec<bool>) {
        let kinds = self.param_kinds();
        let mut target = Vec::with_capacity(record.paths.len() * 4);
        let mut mask = Vec::with_capacity(record.paths.len() * 4);
        for p in &record.paths {
            let raw = [p.power_dbm, p.delay_ns, p.elevation_deg, p.azimuth_deg];
            for (k, v) in raw.iter().enumerate() {
                target.push(kinds[k].normalize(*v));
                mask.push(p.valid);
            }
        }
        (target, mask)
    }
}
