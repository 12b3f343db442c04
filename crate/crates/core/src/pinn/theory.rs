//! Free-space theory at a coordinate: the quantities the physics constraints
//! compare against.
//!
//! This is intentionally a second, independent implementation of the same
//! formulas the scene oracle uses; the test suites check the two code paths
//! against each other.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::geom::Point2;
use crate::geoscene::Scene;
use crate::SPEED_OF_LIGHT;

/// Theoretical line-of-sight quadruple at a receiver coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryLos {
    pub power_dbm: f64,
    pub delay_ns: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

/// Free-space path loss and LoS geometry, regardless of occlusion.
pub fn theory_los(scene: &Scene, coords: Point2) -> Result<TheoryLos> {
    if !scene.bounds.contains(coords) {
        return Err(invalid_argument("coordinate outside scene bounds"));
    }
    theory_los_at(scene, coords)
}

/// Same computation without the bounds check; augmentation jitter may push a
/// training coordinate marginally outside the scene.
pub(crate) fn theory_los_at(scene: &Scene, coords: Point2) -> Result<TheoryLos> {
    let dx = scene.tx.x - coords.x;
    let dy = scene.tx.y - coords.y;
    let dz = scene.tx.z - scene.rx_height;
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    if d == 0.0 {
        return Err(invalid_argument(
            "coordinate coincides with the transmitter",
        ));
    }
    let path_loss_db =
        20.0 * (d * scene.f_c_hz * 4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10();
    let horizontal = (dx * dx + dy * dy).sqrt();
    Ok(TheoryLos {
        power_dbm: scene.tx_power_dbm - path_loss_db,
        delay_ns: d / SPEED_OF_LIGHT * 1e9,
        elevation_deg: horizontal.atan2(dz).to_degrees(),
        azimuth_deg: dy.atan2(dx).to_degrees(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point3, Rect};
    use crate::geoscene::trace_los;

    fn scene_at(f_c_hz: f64, tx: Point3) -> Scene {
        Scene {
            tx,
            rx_height: 1.5,
            bounds: Rect::new(Point2::new(-200.0, -200.0), Point2::new(200.0, 200.0)),
            walls: Vec::new(),
            scatterers: Vec::new(),
            diffraction_edges: Vec::new(),
            f_c_hz,
            tx_power_dbm: 0.0,
        }
    }

    #[test]
    fn path_loss_reference_values() {
        // d = 100 m at 3.5 GHz -> PL = 40 + 190.8814 - 147.5552 = 83.329 dB.
        let scene = scene_at(3.5e9, Point3::new(0.0, 0.0, 1.5));
        let t = theory_los(&scene, Point2::new(100.0, 0.0)).unwrap();
        assert!((-t.power_dbm - 83.329).abs() < 0.005, "pl={}", -t.power_dbm);
        // d = 1 m at 2.4 GHz -> PL = 40.05 dB.
        let scene = scene_at(2.4e9, Point3::new(0.0, 0.0, 1.5));
        let t = theory_los(&scene, Point2::new(1.0, 0.0)).unwrap();
        assert!((-t.power_dbm - 40.05).abs() < 0.005, "pl={}", -t.power_dbm);
    }

    #[test]
    fn agrees_with_oracle_when_unoccluded() {
        let scene = scene_at(3.5e9, Point3::new(12.0, -7.0, 6.0));
        for &(x, y) in &[(30.0, 40.0), (-100.0, 55.5), (12.5, -6.5), (199.0, 199.0)] {
            let rx = Point2::new(x, y);
            let theory = theory_los(&scene, rx).unwrap();
            let traced = trace_los(&scene, rx).unwrap().unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-30);
            assert!(rel(theory.power_dbm, traced.power_dbm) < 1e-12);
            assert!(rel(theory.delay_ns, traced.delay_ns) < 1e-12);
            assert!(rel(theory.elevation_deg, traced.elevation_deg) < 1e-9);
            assert!(rel(theory.azimuth_deg, traced.azimuth_deg) < 1e-9);
        }
    }

    #[test]
    fn transmitter_singularity_rejected() {
        let mut scene = scene_at(2.4e9, Point3::new(0.0, 0.0, 1.5));
        scene.rx_height = 1.5;
        assert!(theory_los(&scene, Point2::new(0.0, 0.0)).is_err());
    }
}
