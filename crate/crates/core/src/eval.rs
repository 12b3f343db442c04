//! Evaluation: MSE/RMSE/NMSE metrics in normalized space, error CDFs,
//! heatmap grids, and physical-layer reconstruction (channel impulse
//! response taps, planar-array steering vectors).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::geoscene::{azimuth_distance_deg, MultipathRecord};
use crate::norm::NormStats;
use crate::SPEED_OF_LIGHT;

/// One mse/rmse/nmse triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub nmse: f64,
}

impl SubMetrics {
    fn from_sums(err_sq: f64, truth_sq: f64, count: usize) -> Result<SubMetrics> {
        if count == 0 {
            return Ok(SubMetrics {
                mse: 0.0,
                rmse: 0.0,
                nmse: 0.0,
            });
        }
        if truth_sq == 0.0 && err_sq > 0.0 {
            return Err(invalid_argument(
                "NMSE undefined: truth has zero norm over the evaluation set",
            ));
        }
        let mse = err_sq / count as f64;
        Ok(SubMetrics {
            mse,
            rmse: mse.sqrt(),
            nmse: if truth_sq == 0.0 { 0.0 } else { err_sq / truth_sq },
        })
    }
}

/// Error metrics over an evaluation set, computed in normalized feature
/// space so the four parameter kinds are commensurate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: SubMetrics,
    pub per_parameter: BTreeMap<String, SubMetrics>,
    pub per_path: Vec<SubMetrics>,
    pub n_eval_points: usize,
    /// Normalization disclosure carried into every report.
    pub space: String,
}

pub const PARAM_NAMES: [&str; 4] = ["power", "delay", "elevation", "azimuth"];

/// Metrics of normalized predictions against truth records. Only entries
/// whose truth path is valid count; `pred_norm` is row-major `M x 4L`.
pub fn compute_metrics(
    pred_norm: &[f64],
    truth: &[&MultipathRecord],
    l_paths: usize,
    norm: &NormStats,
) -> Result<Metrics> {
    let width = 4 * l_paths;
    if truth.is_empty() || pred_norm.len() != truth.len() * width {
        return Err(invalid_argument("prediction/truth shape mismatch"));
    }
    let mut err_sq = 0.0;
    let mut truth_sq = 0.0;
    let mut count = 0usize;
    let mut kind_sums = [(0.0, 0.0, 0usize); 4];
    let mut path_sums = vec![(0.0, 0.0, 0usize); l_paths];

    for (row, rec) in truth.iter().enumerate() {
        let (t_norm, mask) = norm.record_targets(rec);
        for e in 0..width {
            if !mask[e] {
                continue;
            }
            let d = pred_norm[row * width + e] - t_norm[e];
            let sq = d * d;
            let tsq = t_norm[e] * t_norm[e];
            err_sq += sq;
            truth_sq += tsq;
            count += 1;
            let kind = e % 4;
            kind_sums[kind].0 += sq;
            kind_sums[kind].1 += tsq;
            kind_sums[kind].2 += 1;
            let path = e / 4;
            path_sums[path].0 += sq;
            path_sums[path].1 += tsq;
            path_sums[path].2 += 1;
        }
    }

    let mut per_parameter = BTreeMap::new();
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        per_parameter.insert(
            name.to_string(),
            SubMetrics::from_sums(kind_sums[k].0, kind_sums[k].1, kind_sums[k].2)?,
        );
    }
    let per_path = path_sums
        .into_iter()
        .map(|(e, t, c)| SubMetrics::from_sums(e, t, c))
        .collect::<Result<Vec<_>>>()?;

    Ok(Metrics {
        overall: SubMetrics::from_sums(err_sq, truth_sq, count)?,
        per_parameter,
        per_path,
        n_eval_points: truth.len(),
        space: "normalized (z-scores from the training split)".into(),
    })
}

/// Which of the four multipath parameters an export refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Power,
    Delay,
    Elevation,
    Azimuth,
}

impl ParamKind {
    pub fn index(self) -> usize {
        match self {
            ParamKind::Power => 0,
            ParamKind::Delay => 1,
            ParamKind::Elevation => 2,
            ParamKind::Azimuth => 3,
        }
    }

    pub fn name(self) -> &'static str {
        PARAM_NAMES[self.index()]
    }

    pub fn parse(s: &str) -> Option<ParamKind> {
        match s {
            "power" => Some(ParamKind::Power),
            "delay" => Some(ParamKind::Delay),
            "elevation" => Some(ParamKind::Elevation),
            "azimuth" => Some(ParamKind::Azimuth),
            _ => None,
        }
    }

    fn of(self, rec_path: &crate::geoscene::PathComponent) -> f64 {
        match self {
            ParamKind::Power => rec_path.power_dbm,
            ParamKind::Delay => rec_path.delay_ns,
            ParamKind::Elevation => rec_path.elevation_deg,
            ParamKind::Azimuth => rec_path.azimuth_deg,
        }
    }
}

/// Absolute errors (azimuth wraparound-corrected) of one parameter of one
/// path over the evaluation set, sorted ascending with cumulative fractions
/// `i/n` ready for plotting.
pub fn error_cdf(
    pred_phys: &[f64],
    truth: &[&MultipathRecord],
    l_paths: usize,
    kind: ParamKind,
    path_index: usize,
) -> Vec<(f64, f64)> {
    let width = 4 * l_paths;
    let mut errors: Vec<f64> = truth
        .iter()
        .enumerate()
        .filter(|(_, rec)| rec.paths[path_index].valid)
        .map(|(row, rec)| {
            let pred = pred_phys[row * width + 4 * path_index + kind.index()];
            let t = kind.of(&rec.paths[path_index]);
            if kind == ParamKind::Azimuth {
                azimuth_distance_deg(pred, t)
            } else {
                (pred - t).abs()
            }
        })
        .collect();
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = errors.len() as f64;
    errors
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, (i + 1) as f64 / n))
        .collect()
}

/// A uniform planar antenna array in the x-y plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub m: usize,
    pub n: usize,
    pub d_x_m: f64,
    pub d_y_m: f64,
    pub f_c_hz: f64,
}

impl ArrayConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c_hz
    }
}

/// Array response vector for a plane wave from (elevation, azimuth), as
/// (re, im) pairs, row-major over antenna indices (m, n):
/// `e^{-j (2 pi / lambda) (m d_x sin(theta) cos(phi) + n d_y sin(theta) sin(phi))}`.
pub fn steering_vector(array: &ArrayConfig, theta_deg: f64, phi_deg: f64) -> Vec<(f64, f64)> {
    let lambda = array.wavelength();
    let theta = theta_deg.to_radians();
    let phi = phi_deg.to_radians();
    let kx = theta.sin() * phi.cos();
    let ky = theta.sin() * phi.sin();
    let factor = -2.0 * std::f64::consts::PI / lambda;
    let mut out = Vec::with_capacity(array.m * array.n);
    for m in 0..array.m {
        for n in 0..array.n {
            let phase = factor * (m as f64 * array.d_x_m * kx + n as f64 * array.d_y_m * ky);
            out.push((phase.cos(), phase.sin()));
        }
    }
    out
}

/// One impulse-response tap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirTap {
    pub delay_ns: f64,
    /// Linear magnitude `sqrt(p)` with `p = 10^((dBm - 30)/10)` watts.
    pub magnitude: f64,
    /// Carrier phase `-2 pi f_c tau`, reduced to `[0, 2 pi)`.
    pub phase_rad: f64,
    /// Index of the source path slot in the record.
    pub path_index: usize,
}

/// Time-domain channel impulse response of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirProfile {
    pub taps: Vec<CirTap>,
    /// Set when the record had no valid paths at all.
    pub no_valid_paths: bool,
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10.0_f64.powf((p_dbm - 30.0) / 10.0)
}

/// One tap per valid path, sorted by delay.
pub fn reconstruct_cir(record: &MultipathRecord, f_c_hz: f64) -> CirProfile {
    let mut taps: Vec<CirTap> = record
        .paths
        .iter()
        .enumerate()
        .filter(|(_, p)| p.valid)
        .map(|(i, p)| {
            let tau_s = p.delay_ns * 1e-9;
            CirTap {
                delay_ns: p.delay_ns,
                magnitude: dbm_to_watts(p.power_dbm).sqrt(),
                phase_rad: (-2.0 * std::f64::consts::PI * f_c_hz * tau_s)
                    .rem_euclid(2.0 * std::f64::consts::PI),
                path_index: i,
            }
        })
        .collect();
    taps.sort_by(|a, b| {
        a.delay_ns
            .partial_cmp(&b.delay_ns)
            .unwrap()
            .then(a.path_index.cmp(&b.path_index))
    });
    CirProfile {
        no_valid_paths: taps.is_empty(),
        taps,
    }
}

/// Write one parameter of one path as a `x,y,value` grid CSV in physical
/// units. The records must cover a regular grid.
pub fn export_heatmap(
    records: &[MultipathRecord],
    kind: ParamKind,
    path_index: usize,
    out_path: &Path,
) -> Result<()> {
    let mut xs: Vec<f64> = records.iter().map(|r| r.coords.x).collect();
    let mut ys: Vec<f64> = records.iter().map(|r| r.coords.y).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup();
    if xs.len() * ys.len() != records.len() {
        return Err(invalid_argument(
            "points do not form a regular grid; use a scatter export instead",
        ));
    }
    let mut rows: Vec<&MultipathRecord> = records.iter().collect();
    rows.sort_by(|a, b| {
        (a.coords.y, a.coords.x)
            .partial_cmp(&(b.coords.y, b.coords.x))
            .unwrap()
    });
    let mut out = String::from("x,y,value\n");
    for rec in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            rec.coords.x,
            rec.coords.y,
            kind.of(&rec.paths[path_index])
        ));
    }
    let mut file = fs::File::create(out_path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point2;
    use crate::geoscene::{PathComponent, PathType};

    fn record(x: f64, y: f64, power: f64, delay: f64) -> MultipathRecord {
        MultipathRecord {
            coords: Point2::new(x, y),
            paths: vec![
                PathComponent {
                    power_dbm: power,
                    delay_ns: delay,
                    elevation_deg: 85.0,
                    azimuth_deg: 20.0,
                    path_type: PathType::Los,
                    valid: true,
                },
                PathComponent::invalid(),
            ],
        }
    }

    fn norm_for(records: &[MultipathRecord]) -> NormStats {
        let refs: Vec<_> = records.iter().collect();
        NormStats::fit(&refs).unwrap()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let records = vec![record(0.0, 0.0, -40.0, 100.0), record(1.0, 0.0, -60.0, 220.0)];
        let norm = norm_for(&records);
        let refs: Vec<_> = records.iter().collect();
        let mut pred = Vec::new();
        for r in &refs {
            pred.extend(norm.record_targets(r).0);
        }
        let m = compute_metrics(&pred, &refs, 2, &norm).unwrap();
        assert_eq!(m.overall.mse, 0.0);
        assert_eq!(m.overall.rmse, 0.0);
        assert_eq!(m.overall.nmse, 0.0);
    }

    #[test]
    fn single_entry_arithmetic() {
        // One valid entry with truth 2 and prediction 3 in normalized space:
        // MSE 1, RMSE 1, NMSE 0.25. Build it directly through the sums.
        let sub = SubMetrics::from_sums(1.0, 4.0, 1).unwrap();
        assert_eq!(sub.mse, 1.0);
        assert_eq!(sub.rmse, 1.0);
        assert_eq!(sub.nmse, 0.25);
    }

    #[test]
    fn rmse_is_sqrt_mse() {
        let mut records = vec![record(0.0, 0.0, -40.0, 100.0), record(3.0, 1.0, -55.0, 260.0)];
        // Every kind must vary across the set or its normalized truth norm
        // is legitimately zero and NMSE is undefined.
        records[1].paths[0].elevation_deg = 88.0;
        records[1].paths[0].azimuth_deg = -120.0;
        let norm = norm_for(&records);
        let refs: Vec<_> = records.iter().collect();
        let mut pred = Vec::new();
        for r in &refs {
            let (mut t, _) = norm.record_targets(r);
            for (i, v) in t.iter_mut().enumerate() {
                *v += 0.1 * (i as f64 + 1.0);
            }
            pred.extend(t);
        }
        let m = compute_metrics(&pred, &refs, 2, &norm).unwrap();
        assert!((m.overall.rmse * m.overall.rmse - m.overall.mse).abs() < 1e-15);
        assert!(m.overall.nmse > 0.0);
    }

    #[test]
    fn cdf_shape_and_wraparound() {
        let mut records = vec![record(0.0, 0.0, -40.0, 100.0), record(1.0, 0.0, -60.0, 200.0)];
        records[0].paths[0].azimuth_deg = 10.0;
        records[1].paths[0].azimuth_deg = 0.0;
        let refs: Vec<_> = records.iter().collect();
        // Predictions: 350 deg vs truth 10 deg wraps to a 20 deg error.
        let pred = vec![
            -40.0, 100.0, 85.0, 350.0, /* path 2 ignored */ 0.0, 0.0, 0.0, 0.0,
            -60.0, 200.0, 85.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ];
        let cdf = error_cdf(&pred, &refs, 2, ParamKind::Azimuth, 0);
        assert_eq!(cdf.len(), 2);
        assert_eq!(cdf[0].0, 0.0);
        assert!((cdf[1].0 - 20.0).abs() < 1e-12);
        assert!((cdf[1].1 - 1.0).abs() < 1e-15);
        assert!(cdf.windows(2).all(|w| w[0].1 <= w[1].1));

        // All-zero errors jump straight to 1.
        let mut perfect = Vec::new();
        for r in &refs {
            for p in &r.paths {
                perfect.extend([p.power_dbm, p.delay_ns, p.elevation_deg, p.azimuth_deg]);
            }
        }
        let cdf0 = error_cdf(&perfect, &refs, 2, ParamKind::Azimuth, 0);
        assert!(cdf0.iter().all(|&(e, _)| e == 0.0));
        assert_eq!(cdf0.last().unwrap().1, 1.0);
    }

    #[test]
    fn steering_vector_reference_cases() {
        let array = ArrayConfig {
            m: 2,
            n: 2,
            d_x_m: 1.0,
            d_y_m: 1.0,
            f_c_hz: SPEED_OF_LIGHT, // lambda = 1 m
        };
        // theta = 0: all entries are exactly 1.
        for (re, im) in steering_vector(&array, 0.0, 123.0) {
            assert_eq!(re, 1.0);
            assert_eq!(im, 0.0);
        }
        // Unit magnitude always.
        for (re, im) in steering_vector(&array, 63.0, -48.0) {
            assert!((re * re + im * im - 1.0).abs() < 1e-12);
        }
        // Half-wavelength spacing, theta=90, phi=0: phases (0, 0, -pi, -pi).
        let half = ArrayConfig {
            d_x_m: 0.5,
            d_y_m: 0.5,
            ..array
        };
        let v = steering_vector(&half, 90.0, 0.0);
        let phases: Vec<f64> = v.iter().map(|(re, im)| im.atan2(*re)).collect();
        assert!(phases[0].abs() < 1e-12);
        assert!(phases[1].abs() < 1e-12);
        assert!((phases[2].abs() - std::f64::consts::PI).abs() < 1e-9);
        assert!((phases[3].abs() - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn cir_reconstruction() {
        // 0 dBm = 1 mW: magnitude sqrt(0.001) W^1/2.
        let mut rec = record(0.0, 0.0, 0.0, 150.0);
        rec.paths.push(PathComponent {
            power_dbm: -10.0,
            delay_ns: 120.0,
            elevation_deg: 80.0,
            azimuth_deg: 0.0,
            path_type: PathType::Reflection,
            valid: true,
        });
        let cir = reconstruct_cir(&rec, 2.4e9);
        assert_eq!(cir.taps.len(), 2, "one tap per valid path");
        assert!(!cir.no_valid_paths);
        // Sorted by delay: the reflection at 120 ns comes first.
        assert_eq!(cir.taps[0].delay_ns, 120.0);
        assert!((cir.taps[1].magnitude - 0.001_f64.sqrt()).abs() < 1e-12);
        for t in &cir.taps {
            assert!(t.phase_rad >= 0.0 && t.phase_rad < 2.0 * std::f64::consts::PI);
        }

        let empty = MultipathRecord {
            coords: Point2::new(0.0, 0.0),
            paths: vec![PathComponent::invalid()],
        };
        let cir = reconstruct_cir(&empty, 2.4e9);
        assert!(cir.no_valid_paths);
        assert!(cir.taps.is_empty());
    }

    #[test]
    fn heatmap_grid_roundtrip_and_rejection() {
        let dir = std::env::temp_dir().join("rfmap-core-eval-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let records: Vec<MultipathRecord> = (0..6)
            .map(|i| record((i % 3) as f64, (i / 3) as f64, -40.0 - i as f64, 100.0))
            .collect();
        let path = dir.join("heat.csv");
        export_heatmap(&records, ParamKind::Power, 0, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7, "header plus one row per grid point");
        assert_eq!(lines[0], "x,y,value");
        assert!(lines[1].ends_with("-40"));

        // Non-grid points are rejected with a scatter suggestion.
        let mut scatter = records.clone();
        scatter[0].coords = Point2::new(0.123, 0.456);
        let err = export_heatmap(&scatter, ParamKind::Power, 0, &path).unwrap_err();
        assert!(err.to_string().contains("scatter"));
    }
}
