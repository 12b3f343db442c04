//! Desk-scale scenes and the geometric propagation oracle that generates
//! ground-truth multipath datasets.
//!
//! The oracle is deliberately first-order: free-space line of sight, single
//! image-method reflections off vertical walls, point scatterers, and corner
//! diffraction points with fixed per-object losses. Every traced component is
//! a pure function of the scene geometry, so datasets are exactly
//! reproducible and the generated physics stays inside the constraint
//! envelope the predictor trains against.

mod dataset;
mod io;

pub use dataset::{augment, generate_dataset, sample_split, Dataset, SplitSpec};
pub use io::{
    read_dataset, read_scene, read_split, write_dataset, write_scene, write_split,
};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::geom::{
    line_side, mirror_across_line, point_segment_distance, segment_crossing, Point2, Point3, Rect,
};
use crate::SPEED_OF_LIGHT;

/// Strict-crossing tolerance for the occlusion tests.
const CROSSING_EPS: f64 = 1e-9;

/// Sentinel power carried by invalid (padding) path slots, dBm.
pub const INVALID_POWER_DBM: f64 = -200.0;

/// Propagation mechanism of one multipath component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathType {
    Los,
    Reflection,
    Scattering,
    Diffraction,
}

impl PathType {
    pub const ALL: [PathType; 4] = [
        PathType::Los,
        PathType::Reflection,
        PathType::Scattering,
        PathType::Diffraction,
    ];

    pub fn index(self) -> usize {
        match self {
            PathType::Los => 0,
            PathType::Reflection => 1,
            PathType::Scattering => 2,
            PathType::Diffraction => 3,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            PathType::Los => "LOS",
            PathType::Reflection => "REFL",
            PathType::Scattering => "SCAT",
            PathType::Diffraction => "DIFF",
        }
    }

    pub fn from_code(code: &str) -> Option<PathType> {
        match code {
            "LOS" => Some(PathType::Los),
            "REFL" => Some(PathType::Reflection),
            "SCAT" => Some(PathType::Scattering),
            "DIFF" => Some(PathType::Diffraction),
            _ => None,
        }
    }
}

/// Physics envelope the oracle guarantees and the predictor constrains
/// against, indexed by [`PathType::index`].
pub mod envelope {
    /// NLoS maximum power as a linear fraction of theoretical LoS power.
    pub const POWER_CAP_FACTOR: [f64; 4] = [1.0, 0.7, 0.3, 0.1];
    /// Minimum delay as a multiple of the theoretical LoS delay.
    pub const DELAY_FLOOR: [f64; 4] = [1.0, 1.2, 1.4, 1.6];
    /// Elevation tolerance (degrees) around the LoS arrival direction.
    pub const ELEVATION_TOL_DEG: [f64; 4] = [0.0, 45.0, 90.0, 90.0];
    /// Azimuth tolerance (degrees) around the LoS arrival direction.
    pub const AZIMUTH_TOL_DEG: [f64; 4] = [0.0, 90.0, 180.0, 180.0];
}

/// A vertical wall: a 2D segment extruded to `height`, with an amplitude
/// reflection coefficient in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub a: Point2,
    pub b: Point2,
    pub height: f64,
    pub reflection: f64,
}

/// A point interactor (scatterer or diffraction corner) with an extra loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointObject {
    pub pos: Point3,
    pub loss_db: f64,
}

/// Immutable scene description: transmitter, environment, carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub tx: Point3,
    pub rx_height: f64,
    pub bounds: Rect,
    pub walls: Vec<Wall>,
    pub scatterers: Vec<PointObject>,
    pub diffraction_edges: Vec<PointObject>,
    pub f_c_hz: f64,
    pub tx_power_dbm: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_degenerate() {
            return Err(invalid_argument("scene bounds are degenerate"));
        }
        if !self.bounds.contains(self.tx.xy()) {
            return Err(invalid_argument("transmitter lies outside scene bounds"));
        }
        if self.f_c_hz <= 0.0 {
            return Err(invalid_argument("carrier frequency must be positive"));
        }
        for w in &self.walls {
            if !(w.reflection > 0.0 && w.reflection <= 1.0) {
                return Err(invalid_argument("wall reflection coefficient not in (0,1]"));
            }
            if w.a == w.b {
                return Err(invalid_argument("degenerate wall segment"));
            }
        }
        for o in self.scatterers.iter().chain(&self.diffraction_edges) {
            if o.loss_db < 0.0 {
                return Err(invalid_argument("object loss must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c_hz
    }

    /// The 3D receiver position over a ground-plane coordinate.
    pub fn rx_point(&self, c: Point2) -> Point3 {
        Point3::new(c.x, c.y, self.rx_height)
    }
}

/// One multipath component at a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub power_dbm: f64,
    pub delay_ns: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub path_type: PathType,
    pub valid: bool,
}

impl PathComponent {
    /// Canonical padding slot: sentinel power, zero delay and angles.
    pub fn invalid() -> Self {
        Self {
            power_dbm: INVALID_POWER_DBM,
            delay_ns: 0.0,
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
            path_type: PathType::Los,
            valid: false,
        }
    }
}

/// One receiver location with exactly `L` path slots sorted by descending
/// power, valid slots first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathRecord {
    pub coords: Point2,
    pub paths: Vec<PathComponent>,
}

/// Free-space path loss in dB.
fn path_loss_db(distance_m: f64, f_c_hz: f64) -> f64 {
    20.0 * distance_m.log10()
        + 20.0 * f_c_hz.log10()
        + 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10()
}

/// Arrival angles at the receiver for an incoming direction `v` (pointing
/// from the receiver toward the last interaction point).
fn arrival_angles(v: Point3) -> (f64, f64) {
    let r = (v.x * v.x + v.y * v.y + v.z * v.z).sqrt();
    let elevation = (v.z / r).clamp(-1.0, 1.0).acos().to_degrees();
    let azimuth = v.y.atan2(v.x).to_degrees();
    (elevation, azimuth)
}

/// Whether any wall blocks the straight 3D segment `p -> q`. A wall blocks
/// iff its 2D segment properly crosses the path's ground projection and the
/// path's height at the crossing is below the wall top. `skip` excludes the
/// reflecting wall from its own leg tests.
fn occluded(scene: &Scene, p: Point3, q: Point3, skip: Option<usize>) -> bool {
    for (i, wall) in scene.walls.iter().enumerate() {
        if skip == Some(i) {
            continue;
        }
        if let Some((t, _)) = segment_crossing(p.xy(), q.xy(), wall.a, wall.b, CROSSING_EPS) {
            let z = p.z + t * (q.z - p.z);
            if z <= wall.height {
                return true;
            }
        }
    }
    false
}

fn check_rx(scene: &Scene, rx: Point2) -> Result<()> {
    if !scene.bounds.contains(rx) {
        return Err(invalid_argument(format!(
            "receiver ({}, {}) outside scene bounds",
            rx.x, rx.y
        )));
    }
    Ok(())
}

/// Trace the line-of-sight component, absent when a wall occludes the path.
pub fn trace_los(scene: &Scene, rx: Point2) -> Result<Option<PathComponent>> {
    check_rx(scene, rx)?;
    let rxp = scene.rx_point(rx);
    let d = scene.tx.dist(rxp);
    if d == 0.0 {
        return Err(invalid_argument("receiver coincides with transmitter"));
    }
    if occluded(scene, scene.tx, rxp, None) {
        return Ok(None);
    }
    let (elevation_deg, azimuth_deg) = arrival_angles(Point3::new(
        scene.tx.x - rxp.x,
        scene.tx.y - rxp.y,
        scene.tx.z - rxp.z,
    ));
    Ok(Some(PathComponent {
        power_dbm: scene.tx_power_dbm - path_loss_db(d, scene.f_c_hz),
        delay_ns: d / SPEED_OF_LIGHT * 1e9,
        elevation_deg,
        azimuth_deg,
        path_type: PathType::Los,
        valid: true,
    }))
}

/// First-order image-method reflections, one candidate per wall.
///
/// Only `max_order == 1` is supported; multi-bounce tracing is out of scope.
pub fn trace_reflections(scene: &Scene, rx: Point2, max_order: usize) -> Result<Vec<PathComponent>> {
    check_rx(scene, rx)?;
    if max_order == 0 {
        return Ok(Vec::new());
    }
    if max_order > 1 {
        return Err(invalid_argument(
            "only first-order reflections are supported",
        ));
    }
    let rxp = scene.rx_point(rx);
    let mut out = Vec::new();
    for (i, wall) in scene.walls.iter().enumerate() {
        // Transmitter and receiver must lie strictly on the same side.
        let s_tx = line_side(scene.tx.xy(), wall.a, wall.b);
        let s_rx = line_side(rx, wall.a, wall.b);
        if s_tx * s_rx <= 0.0 {
            continue;
        }
        let image2 = mirror_across_line(scene.tx.xy(), wall.a, wall.b);
        let image = Point3::new(image2.x, image2.y, scene.tx.z);
        // The unfolded path image -> rx crosses the wall at the reflection
        // point; it must land on the wall segment itself.
        let Some((t, u)) = segment_crossing(image.xy(), rxp.xy(), wall.a, wall.b, CROSSING_EPS)
        else {
            continue;
        };
        let _ = u;
        let z = image.z + t * (rxp.z - image.z);
        if z > wall.height {
            continue;
        }
        let rp = Point3::new(
            image.x + t * (rxp.x - image.x),
            image.y + t * (rxp.y - image.y),
            z,
        );
        if occluded(scene, scene.tx, rp, Some(i)) || occluded(scene, rp, rxp, Some(i)) {
            continue;
        }
        let total = image.dist(rxp);
        let (elevation_deg, azimuth_deg) =
            arrival_angles(Point3::new(rp.x - rxp.x, rp.y - rxp.y, rp.z - rxp.z));
        out.push(PathComponent {
            power_dbm: scene.tx_power_dbm - path_loss_db(total, scene.f_c_hz)
                + 20.0 * wall.reflection.log10(),
            delay_ns: total / SPEED_OF_LIGHT * 1e9,
            elevation_deg,
            azimuth_deg,
            path_type: PathType::Reflection,
            valid: true,
        });
    }
    Ok(out)
}

/// Scattered and diffracted components: two-leg paths through each point
/// object, with the object's loss added on top of free-space loss over the
/// full path length.
pub fn trace_scatter_diffract(scene: &Scene, rx: Point2) -> Result<Vec<PathComponent>> {
    check_rx(scene, rx)?;
    let rxp = scene.rx_point(rx);
    let mut out = Vec::new();
    let sources = scene
        .scatterers
        .iter()
        .map(|o| (o, PathType::Scattering))
        .chain(
            scene
                .diffraction_edges
                .iter()
                .map(|o| (o, PathType::Diffraction)),
        );
    for (obj, path_type) in sources {
        let leg2 = obj.pos.dist(rxp);
        if leg2 < 1e-9 {
            continue; // receiver sits on the object
        }
        if occluded(scene, scene.tx, obj.pos, None) || occluded(scene, obj.pos, rxp, None) {
            continue;
        }
        let total = scene.tx.dist(obj.pos) + leg2;
        let (elevation_deg, azimuth_deg) = arrival_angles(Point3::new(
            obj.pos.x - rxp.x,
            obj.pos.y - rxp.y,
            obj.pos.z - rxp.z,
        ));
        out.push(PathComponent {
            power_dbm: scene.tx_power_dbm - path_loss_db(total, scene.f_c_hz) - obj.loss_db,
            delay_ns: total / SPEED_OF_LIGHT * 1e9,
            elevation_deg,
            azimuth_deg,
            path_type,
            valid: true,
        });
    }
    Ok(out)
}

/// Deterministically synthesize a desk-scale scene: random walls that avoid
/// the transmitter, point scatterers, and diffraction corners at wall ends.
///
/// Defaults: transmitter 6 m high slightly off the bounds centre, receivers
/// at 1.5 m, carrier 3.5 GHz, 0 dBm transmit power (so received power equals
/// negative path loss), scattering loss 10 dB, diffraction loss 15 dB.
pub fn synthesize_scene(
    seed: u64,
    bounds: Rect,
    n_walls: usize,
    n_scatterers: usize,
) -> Result<Scene> {
    if bounds.is_degenerate() {
        return Err(invalid_argument("bounds are degenerate"));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let tx = Point3::new(
        bounds.min.x + bounds.width() * 0.43,
        bounds.min.y + bounds.height() * 0.57,
        6.0,
    );
    let rx_height = 1.5;
    let margin = 0.05 * bounds.width().min(bounds.height());

    let mut walls = Vec::with_capacity(n_walls);
    let mut attempts = 0;
    while walls.len() < n_walls && attempts < n_walls * 64 + 64 {
        attempts += 1;
        let cx = rng.random_range(bounds.min.x + margin..bounds.max.x - margin);
        let cy = rng.random_range(bounds.min.y + margin..bounds.max.y - margin);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let half = rng.random_range(4.0_f64..10.0).min(bounds.width() * 0.25);
        let dir = Point2::new(angle.cos(), angle.sin());
        let a = Point2::new(cx - half * dir.x, cy - half * dir.y);
        let b = Point2::new(cx + half * dir.x, cy + half * dir.y);
        if !bounds.contains(a) || !bounds.contains(b) {
            continue;
        }
        // Keep the transmitter clear of every wall.
        if point_segment_distance(tx.xy(), a, b) < 2.0 {
            continue;
        }
        walls.push(Wall {
            a,
            b,
            height: rng.random_range(7.0..10.0),
            reflection: rng.random_range(0.4..0.9),
        });
    }
    if walls.len() < n_walls {
        return Err(invalid_argument(
            "could not place the requested number of walls",
        ));
    }

    let scatterers = (0..n_scatterers)
        .map(|_| PointObject {
            pos: Point3::new(
                rng.random_range(bounds.min.x + margin..bounds.max.x - margin),
                rng.random_range(bounds.min.y + margin..bounds.max.y - margin),
                rng.random_range(1.0..5.0),
            ),
            loss_db: 10.0,
        })
        .collect();

    // Diffraction corners at wall endpoints, just below the wall top.
    let diffraction_edges = walls
        .iter()
        .flat_map(|w| {
            let z = w.height - 0.5;
            [
                PointObject {
                    pos: Point3::new(w.a.x, w.a.y, z),
                    loss_db: 15.0,
                },
                PointObject {
                    pos: Point3::new(w.b.x, w.b.y, z),
                    loss_db: 15.0,
                },
            ]
        })
        .collect();

    let scene = Scene {
        tx,
        rx_height,
        bounds,
        walls,
        scatterers,
        diffraction_edges,
        f_c_hz: 3.5e9,
        tx_power_dbm: 0.0,
    };
    scene.validate()?;
    Ok(scene)
}

/// All components the oracle can trace at one receiver, unfiltered.
pub(crate) fn trace_all(scene: &Scene, rx: Point2) -> Result<Vec<PathComponent>> {
    let mut components = Vec::new();
    if let Some(los) = trace_los(scene, rx)? {
        components.push(los);
    }
    components.extend(trace_reflections(scene, rx, 1)?);
    components.extend(trace_scatter_diffract(scene, rx)?);
    Ok(components)
}

/// Theoretical LoS quantities used by the envelope filter: power, delay and
/// the would-be LoS arrival angles (defined even under occlusion).
pub(crate) fn los_reference(scene: &Scene, rx: Point2) -> (f64, f64, f64, f64) {
    let rxp = scene.rx_point(rx);
    let d = scene.tx.dist(rxp);
    let (elevation, azimuth) = arrival_angles(Point3::new(
        scene.tx.x - rxp.x,
        scene.tx.y - rxp.y,
        scene.tx.z - rxp.z,
    ));
    (
        scene.tx_power_dbm - path_loss_db(d, scene.f_c_hz),
        d / SPEED_OF_LIGHT * 1e9,
        elevation,
        azimuth,
    )
}

/// Minimal circular distance between two azimuths in degrees.
pub fn azimuth_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn open_scene(side: f64) -> Scene {
        Scene {
            tx: Point3::new(side * 0.43, side * 0.57, 6.0),
            rx_height: 1.5,
            bounds: Rect::new(Point2::new(0.0, 0.0), Point2::new(side, side)),
            walls: Vec::new(),
            scatterers: Vec::new(),
            diffraction_edges: Vec::new(),
            f_c_hz: 2.4e9,
            tx_power_dbm: 0.0,
        }
    }

    #[test]
    fn friis_at_one_metre() {
        // PL(1 m, 2.4 GHz) = 40.05 dB.
        let pl = path_loss_db(1.0, 2.4e9);
        assert!((pl - 40.05).abs() < 0.005, "pl={pl}");
    }

    #[test]
    fn los_delay_at_300_metres() {
        let mut scene = open_scene(400.0);
        scene.tx = Point3::new(0.0, 0.0, 1.5); // level with receivers: d is horizontal
        let los = trace_los(&scene, Point2::new(300.0, 0.0)).unwrap().unwrap();
        // 300 m / c = 1000.7 ns.
        assert!((los.delay_ns - 1000.69).abs() < 0.01, "delay={}", los.delay_ns);
    }

    #[test]
    fn wall_occludes_los() {
        let mut scene = open_scene(64.0);
        scene.tx = Point3::new(10.0, 10.0, 6.0);
        scene.walls.push(Wall {
            a: Point2::new(20.0, 0.0),
            b: Point2::new(20.0, 64.0),
            height: 30.0,
            reflection: 0.8,
        });
        assert!(trace_los(&scene, Point2::new(30.0, 10.0)).unwrap().is_none());
        assert!(trace_los(&scene, Point2::new(15.0, 10.0)).unwrap().is_some());
    }

    #[test]
    fn low_wall_does_not_occlude_high_ray() {
        // Transmitter at 6 m, receiver at 1.5 m, 2 m wall midway: the ray
        // clears the top.
        let mut scene = open_scene(64.0);
        scene.tx = Point3::new(10.0, 10.0, 6.0);
        scene.walls.push(Wall {
            a: Point2::new(15.0, 0.0),
            b: Point2::new(15.0, 64.0),
            height: 2.0,
            reflection: 0.8,
        });
        // Crossing at t where x goes 10 -> 20: t = 0.5, z = 6 + 0.5*(1.5-6) = 3.75 > 2.
        assert!(trace_los(&scene, Point2::new(20.0, 10.0)).unwrap().is_some());
    }

    #[test]
    fn rx_outside_bounds_rejected() {
        let scene = open_scene(64.0);
        assert!(trace_los(&scene, Point2::new(-1.0, 5.0)).is_err());
    }

    #[test]
    fn image_method_hand_example() {
        // tx=(0,0), rx=(2,0), wall along y=1 for x in [0,2], equal heights.
        let scene = Scene {
            tx: Point3::new(0.0, 0.0, 1.5),
            rx_height: 1.5,
            bounds: Rect::new(Point2::new(-5.0, -5.0), Point2::new(5.0, 5.0)),
            walls: vec![Wall {
                a: Point2::new(0.0, 1.0),
                b: Point2::new(2.0, 1.0),
                height: 10.0,
                reflection: 1.0,
            }],
            scatterers: Vec::new(),
            diffraction_edges: Vec::new(),
            f_c_hz: 2.4e9,
            tx_power_dbm: 0.0,
        };
        let rx = Point2::new(2.0, 0.0);
        let refl = trace_reflections(&scene, rx, 1).unwrap();
        assert_eq!(refl.len(), 1);
        let total = 2.0 * std::f64::consts::SQRT_2;
        let expect_delay = total / SPEED_OF_LIGHT * 1e9;
        assert!((refl[0].delay_ns - expect_delay).abs() < 1e-9);
        // Coefficient 1: power is Friis at the unfolded length.
        let expect_power = -path_loss_db(total, 2.4e9);
        assert!((refl[0].power_dbm - expect_power).abs() < 1e-9);
        // Arrival from the reflection point (1,1): azimuth = atan2(1,-1) = 135 deg.
        assert!((refl[0].azimuth_deg - 135.0).abs() < 1e-9);
    }

    #[test]
    fn reflection_coefficient_shifts_power() {
        let mut scene = open_scene(64.0);
        scene.tx = Point3::new(20.0, 20.0, 1.5);
        scene.rx_height = 1.5;
        let wall = Wall {
            a: Point2::new(10.0, 30.0),
            b: Point2::new(30.0, 30.0),
            height: 10.0,
            reflection: 1.0,
        };
        scene.walls.push(wall);
        let rx = Point2::new(24.0, 20.0);
        let full = trace_reflections(&scene, rx, 1).unwrap()[0];
        scene.walls[0].reflection = 0.5;
        let half = trace_reflections(&scene, rx, 1).unwrap()[0];
        // 20 log10(0.5) = -6.02 dB.
        assert!((half.power_dbm - (full.power_dbm - 6.0206)).abs() < 1e-3);
        assert_eq!(half.delay_ns, full.delay_ns);
    }

    #[test]
    fn reflection_point_off_segment_rejected() {
        // Short wall whose line would reflect, but the crossing lands off it.
        let scene = Scene {
            tx: Point3::new(0.0, 0.0, 1.5),
            rx_height: 1.5,
            bounds: Rect::new(Point2::new(-5.0, -5.0), Point2::new(15.0, 5.0)),
            walls: vec![Wall {
                a: Point2::new(8.0, 1.0),
                b: Point2::new(10.0, 1.0),
                height: 10.0,
                reflection: 1.0,
            }],
            scatterers: Vec::new(),
            diffraction_edges: Vec::new(),
            f_c_hz: 2.4e9,
            tx_power_dbm: 0.0,
        };
        // Reflection point for rx=(2,0) would be at x=1, far off [8,10].
        assert!(trace_reflections(&scene, Point2::new(2.0, 0.0), 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn multi_order_rejected() {
        let scene = open_scene(64.0);
        assert!(trace_reflections(&scene, Point2::new(5.0, 5.0), 2).is_err());
        assert!(trace_reflections(&scene, Point2::new(5.0, 5.0), 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn collinear_scatterer_matches_los() {
        // Scatterer exactly on the tx-rx line with zero loss: same delay and
        // power as LoS.
        let mut scene = open_scene(64.0);
        scene.tx = Point3::new(10.0, 10.0, 1.5);
        scene.scatterers.push(PointObject {
            pos: Point3::new(20.0, 10.0, 1.5),
            loss_db: 0.0,
        });
        let rx = Point2::new(30.0, 10.0);
        let los = trace_los(&scene, rx).unwrap().unwrap();
        let scat = &trace_scatter_diffract(&scene, rx).unwrap()[0];
        assert!((scat.delay_ns - los.delay_ns).abs() < 1e-9);
        assert!((scat.power_dbm - los.power_dbm).abs() < 1e-9);
    }

    #[test]
    fn scatter_loss_is_additive() {
        let mut scene = open_scene(64.0);
        scene.scatterers.push(PointObject {
            pos: Point3::new(20.0, 15.0, 2.0),
            loss_db: 0.0,
        });
        let rx = Point2::new(30.0, 30.0);
        let base = trace_scatter_diffract(&scene, rx).unwrap()[0];
        scene.scatterers[0].loss_db = 10.0;
        let lossy = trace_scatter_diffract(&scene, rx).unwrap()[0];
        assert!((lossy.power_dbm - (base.power_dbm - 10.0)).abs() < 1e-12);
    }

    #[test]
    fn occluded_scatter_leg_absent() {
        let mut scene = open_scene(64.0);
        scene.tx = Point3::new(10.0, 10.0, 6.0);
        scene.scatterers.push(PointObject {
            pos: Point3::new(40.0, 10.0, 2.0),
            loss_db: 10.0,
        });
        // Tall wall between the scatterer and this receiver.
        scene.walls.push(Wall {
            a: Point2::new(45.0, 0.0),
            b: Point2::new(45.0, 64.0),
            height: 30.0,
            reflection: 0.8,
        });
        let comps = trace_scatter_diffract(&scene, Point2::new(50.0, 10.0)).unwrap();
        assert!(comps.is_empty());
    }

    #[test]
    fn synthesize_is_deterministic_and_seed_sensitive() {
        let bounds = Rect::new(Point2::new(0.0, 0.0), Point2::new(64.0, 64.0));
        let a = synthesize_scene(1, bounds, 4, 2).unwrap();
        let b = synthesize_scene(1, bounds, 4, 2).unwrap();
        assert_eq!(a, b);
        let c = synthesize_scene(2, bounds, 4, 2).unwrap();
        let ser_a = serde_json::to_string(&a).unwrap();
        let ser_c = serde_json::to_string(&c).unwrap();
        assert_ne!(ser_a, ser_c, "different seeds must give different layouts");
    }

    #[test]
    fn open_synthesized_scene_has_los_everywhere() {
        let bounds = Rect::new(Point2::new(0.0, 0.0), Point2::new(32.0, 32.0));
        let scene = synthesize_scene(5, bounds, 0, 0).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let rx = Point2::new(i as f64 + 0.5, j as f64 + 0.5);
                assert!(trace_los(&scene, rx).unwrap().is_some());
            }
        }
    }

    #[test]
    fn occlusion_is_symmetric() {
        let bounds = Rect::new(Point2::new(0.0, 0.0), Point2::new(64.0, 64.0));
        let scene = synthesize_scene(11, bounds, 6, 0).unwrap();
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..500 {
            let p = Point3::new(
                rng.random_range(0.0..64.0),
                rng.random_range(0.0..64.0),
                rng.random_range(0.5..8.0),
            );
            let q = Point3::new(
                rng.random_range(0.0..64.0),
                rng.random_range(0.0..64.0),
                rng.random_range(0.5..8.0),
            );
            assert_eq!(
                occluded(&scene, p, q, None),
                occluded(&scene, q, p, None),
                "occlusion must not depend on direction"
            );
        }
    }

    #[test]
    fn azimuth_distance_wraps() {
        assert!((azimuth_distance_deg(350.0, 10.0) - 20.0).abs() < 1e-12);
        assert!((azimuth_distance_deg(-170.0, 170.0) - 20.0).abs() < 1e-12);
        assert!((azimuth_distance_deg(10.0, 10.0)).abs() < 1e-12);
    }
}
