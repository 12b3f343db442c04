//! Acceptance suite: ten go/no-go checks on gradients, physics consistency,
//! oracle agreement, sampling-rate trends, baseline ordering, kriging
//! properties, graph properties, azimuth wraparound, determinism, and
//! impulse-response sanity.
//!
//! Run with `cargo test -p rfmap-cli --test acceptance -- --nocapture` to
//! see one pass/fail line per criterion. The heavy pipeline artifacts
//! (sweep + five-method comparison) are computed once and shared.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use rfmap_cli::commands::{cmd_baselines, cmd_run, cmd_sweep};
use rfmap_cli::config::RunConfig;
use rfmap_core::eval::{reconstruct_cir, Metrics};
use rfmap_core::geom::{Point2, Rect};
use rfmap_core::geoscene::{
    generate_dataset, read_dataset, read_scene, read_split, synthesize_scene, trace_los,
    PathType,
};
use rfmap_core::graph::{build_knn, gnn_loss_grad, knn_brute_force, node_features, GnnParams};
use rfmap_core::ndiff::{grad_check, ParamSet};
use rfmap_core::norm::NormStats;
use rfmap_core::pinn::{
    angle_errors, build_samples, composite_loss_grad, loss_angle, loss_delay, loss_power,
    theory_los, CompositeMode, LossWeights, PinnParams, TheoryLos,
};
use rfmap_core::SPEED_OF_LIGHT;

/// Master seed of the pinned acceptance scenario.
const ACCEPTANCE_SEED: u64 = 7;

fn acceptance_config() -> RunConfig {
    let mut config = RunConfig::default();
    config.seed = ACCEPTANCE_SEED;
    config.batch_size = 64;
    config.pinn_patience = 60;
    config.gnn_patience = 300;
    config
}

fn pass(criterion: &str, detail: String) {
    println!("[PASS] {criterion}: {detail}");
}

struct Heavy {
    dir: PathBuf,
    sweep: Vec<(f64, Metrics)>,
    sweep_seconds: f64,
    baselines: Vec<(String, Metrics)>,
    baseline_seconds: f64,
}

static HEAVY: OnceLock<Heavy> = OnceLock::new();

fn heavy() -> &'static Heavy {
    HEAVY.get_or_init(|| {
        let dir = std::env::temp_dir().join("rfmap-acceptance");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let config = acceptance_config();

        let t0 = Instant::now();
        let sweep = cmd_sweep(&config, &dir.join("sweep"), &[0.05, 0.10, 0.15, 0.20]).unwrap();
        let sweep_seconds = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let methods: Vec<String> = ["kriging", "separate", "gnn_only", "pinn_only", "proposed"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let baselines = cmd_baselines(&config, &dir.join("baselines"), &methods).unwrap();
        let baseline_seconds = t1.elapsed().as_secs_f64();

        Heavy {
            dir,
            sweep,
            sweep_seconds,
            baselines,
            baseline_seconds,
        }
    })
}

fn nmse_of(heavy: &Heavy, method: &str) -> f64 {
    heavy
        .baselines
        .iter()
        .find(|(m, _)| m == method)
        .unwrap_or_else(|| panic!("method {method} missing"))
        .1
        .overall
        .nmse
}

#[test]
fn criterion_01_gradient_fidelity() {
    let start = Instant::now();
    let bounds = Rect::new(Point2::new(0.0, 0.0), Point2::new(24.0, 24.0));
    let scene = synthesize_scene(13, bounds, 3, 2).unwrap();
    let dataset = generate_dataset(&scene, 3.0, 3).unwrap();
    let records: Vec<_> = dataset.records.iter().step_by(7).take(8).cloned().collect();
    let refs: Vec<_> = records.iter().collect();
    let norm = NormStats::fit(&refs).unwrap();
    let samples = build_samples(&scene, &records, &norm).unwrap();
    let weights = LossWeights::default();

    let mut worst_pinn = 0.0_f64;
    for seed in [1u64, 2, 3] {
        let model = PinnParams::init(3, norm.clone(), seed);
        let loss = |ps: &ParamSet| {
            let m = PinnParams {
                params: ps.clone(),
                l_paths: 3,
                norm: norm.clone(),
            };
            composite_loss_grad(&m, &samples, &weights, 150, 300, CompositeMode::Eval)
                .unwrap()
                .0
                .total
        };
        let grad = |ps: &ParamSet| {
            let m = PinnParams {
                params: ps.clone(),
                l_paths: 3,
                norm: norm.clone(),
            };
            composite_loss_grad(&m, &samples, &weights, 150, 300, CompositeMode::Eval)
                .unwrap()
                .1
        };
        let report = grad_check(loss, grad, &model.params, 5, 1e-5, 1e-4, seed);
        assert!(report.pass(), "predictor seed {seed}: {}", report.worst);
        worst_pinn = worst_pinn.max(report.max_rel);
    }

    let mut worst_gnn = 0.0_f64;
    for seed in [1u64, 2, 3] {
        let mut rng = StdRng::seed_from_u64(seed * 31);
        let n = 8;
        let coords: Vec<Point2> = (0..n)
            .map(|_| Point2::new(rng.random_range(0.0..8.0), rng.random_range(0.0..8.0)))
            .collect();
        let graph = build_knn(&coords, 3).unwrap();
        let y0: Vec<f64> = (0..n * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = (0..n * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let masks = vec![true; n * 12];
        let features = node_features(&coords, &y0, 12, &norm);
        let train_nodes: Vec<usize> = (0..n).collect();
        let model = GnnParams::init(3, norm.clone(), seed).with_residual(2);
        let loss = |ps: &ParamSet| {
            let m = model.with_params(ps.clone());
            gnn_loss_grad(&m, &features, &targets, &masks, &train_nodes, &graph)
                .unwrap()
                .0
        };
        let grad = |ps: &ParamSet| {
            let m = model.with_params(ps.clone());
            gnn_loss_grad(&m, &features, &targets, &masks, &train_nodes, &graph)
                .unwrap()
                .1
        };
        let report = grad_check(loss, grad, &model.params, 5, 1e-5, 1e-4, seed);
        assert!(report.pass(), "refinement seed {seed}: {}", report.worst);
        worst_gnn = worst_gnn.max(report.max_rel);
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient fidelity took {elapsed:.1}s");
    pass(
        "criterion 1 (gradient fidelity)",
        format!(
            "max rel error predictor {worst_pinn:.2e}, refinement {worst_gnn:.2e}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_02_physics_zero_point() {
    let bounds = Rect::new(Point2::new(0.0, 0.0), Point2::new(64.0, 64.0));
    let scene = synthesize_scene(ACCEPTANCE_SEED, bounds, 10, 5).unwrap();
    let dataset = generate_dataset(&scene, 1.0, 3).unwrap();
    let weights = LossWeights::default();
    let mut checked = 0usize;
    for record in &dataset.records {
        let Some(los) = trace_los(&scene, record.coords).unwrap() else {
            continue;
        };
        // The theoretical LoS at an unoccluded point is the traced LoS.
        let theory = TheoryLos {
            power_dbm: los.power_dbm,
            delay_ns: los.delay_ns,
            elevation_deg: los.elevation_deg,
            azimuth_deg: los.azimuth_deg,
        };
        let valid: Vec<_> = record.paths.iter().filter(|p| p.valid).collect();
        if valid.is_empty() {
            continue;
        }
        let phys: Vec<[f64; 4]> = valid
            .iter()
            .map(|p| [p.power_dbm, p.delay_ns, p.elevation_deg, p.azimuth_deg])
            .collect();
        // Correct one-hot types and full reflection tolerance.
        let mut probs = vec![0.0; 4 * valid.len()];
        for (l, p) in valid.iter().enumerate() {
            probs[4 * l + p.path_type.index()] = 1.0;
        }
        let refl = vec![1.0; valid.len()];

        let lp = loss_power(&phys, &probs, &theory, &weights.w_power);
        let ld = loss_delay(&phys, &probs, &theory, &weights.w_delay);
        let la = loss_angle(&phys, &probs, &refl, &theory, &weights.w_angle);
        assert_eq!(lp, 0.0, "power loss must vanish at {:?}", record.coords);
        assert_eq!(ld, 0.0, "delay loss must vanish at {:?}", record.coords);
        assert_eq!(la, 0.0, "angle loss must vanish at {:?}", record.coords);
        checked += 1;
    }
    assert!(checked > 1000, "only {checked} unoccluded records checked");
    pass(
        "criterion 2 (physics zero-point)",
        format!("all three losses exactly zero at {checked} unoccluded points"),
    );
}

#[test]
fn criterion_03_oracle_agreement() {
    let bounds = Rect::new(Point2::new(0.0, 0.0), Point2::new(64.0, 64.0));
    let scene = synthesize_scene(21, bounds, 10, 5).unwrap();
    let mut rng = StdRng::seed_from_u64(77);
    let mut checked = 0usize;
    let mut worst = 0.0_f64;
    while checked < 1000 {
        let rx = Point2::new(rng.random_range(0.1..63.9), rng.random_range(0.1..63.9));
        let Some(traced) = trace_los(&scene, rx).unwrap() else {
            continue;
        };
        let theory = theory_los(&scene, rx).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        for (a, b) in [
            (theory.power_dbm, traced.power_dbm),
            (theory.delay_ns, traced.delay_ns),
            (theory.elevation_deg, traced.elevation_deg),
            (theory.azimuth_deg, traced.azimuth_deg),
        ] {
            let r = rel(a, b);
            worst = worst.max(r);
            assert!(r < 1e-9, "disagreement {r:.2e} at ({}, {})", rx.x, rx.y);
        }
        checked += 1;
    }
    pass(
        "criterion 3 (oracle agreement)",
        format!("1000 unoccluded points, worst relative difference {worst:.2e}"),
    );
}

#[test]
fn criterion_04_sampling_rate_trend() {
    let h = heavy();
    let nmse: Vec<f64> = h.sweep.iter().map(|(_, m)| m.overall.nmse).collect();
    let improvement = (nmse[0] - nmse[1]) / nmse[0];
    assert!(
        improvement >= 0.15,
        "5% -> 10% improvement {improvement:.3} below 15% (nmse {nmse:?})"
    );
    // 10% -> 15% -> 20% should not worsen, allowing one inversion of at most
    // 5% relative.
    let mut inversions = 0;
    for w in nmse[1..].windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            assert!(
                (w[1] - w[0]) / w[0] <= 0.05,
                "inversion beyond 5%: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
    assert!(inversions <= 1, "{inversions} inversions across 15%/20%");
    assert!(
        h.sweep_seconds < 1800.0,
        "sweep took {:.0}s, budget 1800s",
        h.sweep_seconds
    );
    pass(
        "criterion 4 (sampling-rate trend)",
        format!(
            "nmse {:.4}/{:.4}/{:.4}/{:.4}, 5->10 improvement {:.1}%, {:.0}s",
            nmse[0],
            nmse[1],
            nmse[2],
            nmse[3],
            improvement * 100.0,
            h.sweep_seconds
        ),
    );
}

#[test]
fn criterion_05_baseline_ordering() {
    let h = heavy();
    let proposed = nmse_of(h, "proposed");
    let kriging = nmse_of(h, "kriging");
    for method in ["kriging", "separate", "gnn_only", "pinn_only"] {
        let other = nmse_of(h, method);
        assert!(
            proposed < other,
            "proposed {proposed:.5} not below {method} {other:.5}"
        );
    }
    let improvement = (kriging - proposed) / kriging;
    assert!(
        improvement >= 0.20,
        "improvement over kriging {improvement:.3} below 20%"
    );
    assert!(
        h.baseline_seconds < 1800.0,
        "baselines took {:.0}s, budget 1800s",
        h.baseline_seconds
    );
    pass(
        "criterion 5 (baseline ordering)",
        format!(
            "proposed {:.4} < pinn_only {:.4}, gnn_only {:.4}, separate {:.4}, kriging {:.4} ({:.1}% better), {:.0}s",
            proposed,
            nmse_of(h, "pinn_only"),
            nmse_of(h, "gnn_only"),
            nmse_of(h, "separate"),
            kriging,
            improvement * 100.0,
            h.baseline_seconds
        ),
    );
}

#[test]
fn criterion_06_kriging_exactness() {
    use rfmap_core::baselines::{kriging_predict, VariogramModel};
    let mut rng = StdRng::seed_from_u64(5);
    let mut coords = Vec::new();
    for j in 0..12 {
        for i in 0..12 {
            coords.push(Point2::new(i as f64, j as f64));
        }
    }
    let values: Vec<f64> = coords
        .iter()
        .map(|c| (0.3 * c.x).sin() + 0.2 * c.y + rng.random_range(-0.05..0.05))
        .collect();
    let model = VariogramModel {
        nugget: 0.0,
        sill: 2.0,
        range_m: 6.0,
        degenerate: false,
    };
    let at_known = kriging_predict(&model, &coords, &values, &coords).unwrap();
    let mut worst_gap = 0.0_f64;
    for (p, v) in at_known.values.iter().zip(&values) {
        worst_gap = worst_gap.max((p - v).abs());
    }
    assert!(worst_gap < 1e-8, "known-point gap {worst_gap:.2e}");

    let queries: Vec<Point2> = (0..200)
        .map(|_| Point2::new(rng.random_range(0.0..11.0), rng.random_range(0.0..11.0)))
        .collect();
    let at_queries = kriging_predict(&model, &coords, &values, &queries).unwrap();
    let mut worst_w = 0.0_f64;
    for w in at_known.weight_sums.iter().chain(&at_queries.weight_sums) {
        worst_w = worst_w.max((w - 1.0).abs());
    }
    assert!(worst_w < 1e-10, "weight-sum deviation {worst_w:.2e}");
    pass(
        "criterion 6 (kriging exactness)",
        format!("known-point gap {worst_gap:.1e}, weight-sum deviation {worst_w:.1e}"),
    );
}

#[test]
fn criterion_07_graph_properties() {
    // 500 random point sets: the kd-tree construction must match the
    // brute-force oracle.
    let mut rng = StdRng::seed_from_u64(404);
    for trial in 0..500 {
        let n = rng.random_range(10..80);
        let k = rng.random_range(1..(n / 2).min(9));
        let coords: Vec<Point2> = (0..n)
            .map(|_| Point2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
            .collect();
        let graph = build_knn(&coords, k).unwrap();
        let oracle = knn_brute_force(&coords, k);
        let mut expected: Vec<std::collections::BTreeSet<u32>> =
            oracle.iter().map(|l| l.iter().copied().collect()).collect();
        for (v, out) in oracle.iter().enumerate() {
            for &u in out {
                expected[u as usize].insert(v as u32);
            }
        }
        for v in 0..n {
            let got: std::collections::BTreeSet<u32> = graph.neighbors[v].iter().copied().collect();
            assert_eq!(got, expected[v], "trial {trial} node {v}");
        }
    }

    // 100 random graphs: exact permutation equivariance of the forward pass.
    let norm = {
        use rfmap_core::geoscene::{MultipathRecord, PathComponent};
        let records = vec![
            MultipathRecord {
                coords: Point2::new(0.0, 0.0),
                paths: vec![PathComponent {
                    power_dbm: -40.0,
                    delay_ns: 120.0,
                    elevation_deg: 80.0,
                    azimuth_deg: 15.0,
                    path_type: PathType::Los,
                    valid: true,
                }],
            },
            MultipathRecord {
                coords: Point2::new(9.0, 7.0),
                paths: vec![PathComponent {
                    power_dbm: -70.0,
                    delay_ns: 420.0,
                    elevation_deg: 88.0,
                    azimuth_deg: -60.0,
                    path_type: PathType::Los,
                    valid: true,
                }],
            },
        ];
        let refs: Vec<_> = records.iter().collect();
        NormStats::fit(&refs).unwrap()
    };
    for trial in 0..100u64 {
        let n = rng.random_range(10..40);
        let coords: Vec<Point2> = (0..n)
            .map(|_| Point2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)))
            .collect();
        let graph = build_knn(&coords, 3).unwrap();
        let model = GnnParams::init(1, norm.clone(), trial);
        let y0: Vec<f64> = (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let features = node_features(&coords, &y0, 4, &norm);
        let out = rfmap_core::graph::gnn_forward(&model, &features, &graph).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let coords_p: Vec<Point2> = perm.iter().map(|&i| coords[i]).collect();
        let mut y0_p = vec![0.0; n * 4];
        for (new, &old) in perm.iter().enumerate() {
            y0_p[new * 4..(new + 1) * 4].copy_from_slice(&y0[old * 4..(old + 1) * 4]);
        }
        let graph_p = build_knn(&coords_p, 3).unwrap();
        let features_p = node_features(&coords_p, &y0_p, 4, &norm);
        let out_p = rfmap_core::graph::gnn_forward(&model, &features_p, &graph_p).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(
                &out_p[new * 4..(new + 1) * 4],
                &out[old * 4..(old + 1) * 4],
                "trial {trial}: rows must permute exactly"
            );
        }
    }
    pass(
        "criterion 7 (graph properties)",
        "500 kd-tree/brute-force matches, 100 exact equivariance checks".into(),
    );
}

#[test]
fn criterion_08_azimuth_wraparound() {
    let theory = TheoryLos {
        power_dbm: -60.0,
        delay_ns: 100.0,
        elevation_deg: 90.0,
        azimuth_deg: 10.0,
    };
    let (_, d_phi, _, _) = angle_errors(90.0, 350.0, &theory, 1.0);
    assert_eq!(d_phi, 20.0);

    // Brute-force minimal circular distance oracle.
    let brute = |a: f64, b: f64| -> f64 {
        let mut best = f64::INFINITY;
        for k in -3..=3 {
            best = best.min((a - b + 360.0 * k as f64).abs());
        }
        best
    };
    let mut rng = StdRng::seed_from_u64(88);
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let pred = rng.random_range(-720.0..720.0);
        let truth = rng.random_range(-180.0..180.0);
        let th = TheoryLos {
            azimuth_deg: truth,
            ..theory
        };
        let (_, d_phi, _, _) = angle_errors(90.0, pred, &th, 1.0);
        let expect = brute(pred, truth);
        worst = worst.max((d_phi - expect).abs());
        assert!(
            (d_phi - expect).abs() < 1e-9,
            "wraparound mismatch at pred {pred}, truth {truth}: {d_phi} vs {expect}"
        );
    }
    pass(
        "criterion 8 (azimuth wraparound)",
        format!("10000 random pairs, worst gap to oracle {worst:.2e}"),
    );
}

#[test]
fn criterion_09_determinism() {
    let mut config = RunConfig::default();
    config.seed = 11;
    config.scene.size_m = 32.0;
    config.scene.n_walls = 5;
    config.scene.n_scatterers = 2;
    config.sampling_rate = 0.2;
    config.pinn_epochs = 30;
    config.gnn_epochs = 60;
    config.batch_size = 64;

    let base = std::env::temp_dir().join("rfmap-acceptance-determinism");
    let _ = std::fs::remove_dir_all(&base);
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    cmd_run(&config, &dir_a).unwrap();
    cmd_run(&config, &dir_b).unwrap();
    for file in ["metrics.json", "predictions.csv", "predictions_pinn_only.csv"] {
        let a = std::fs::read(dir_a.join(file)).unwrap();
        let b = std::fs::read(dir_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    pass(
        "criterion 9 (determinism)",
        "metrics.json and prediction CSVs byte-identical across reruns".into(),
    );
}

#[test]
fn criterion_10_cir_sanity() {
    let h = heavy();
    let dir = h.dir.join("baselines");
    let scene = read_scene(&dir.join("scene.json")).unwrap();
    let dataset = read_dataset(&dir.join("dataset.csv")).unwrap();
    let split = read_split(&dir.join("split.json")).unwrap();
    let proposed = read_dataset(&dir.join("predictions.csv")).unwrap();
    let kriging = read_dataset(&dir.join("predictions_kriging.csv")).unwrap();

    // 10 random unoccluded unknown points.
    let mut rng = StdRng::seed_from_u64(1234);
    let mut picks: Vec<(usize, usize)> = Vec::new(); // (dataset idx, kriging row)
    let mut tries = 0;
    while picks.len() < 10 && tries < 10_000 {
        tries += 1;
        let row = rng.random_range(0..split.unknown_indices.len());
        let idx = split.unknown_indices[row];
        let coords = dataset.records[idx].coords;
        if trace_los(&scene, coords).unwrap().is_some() && !picks.iter().any(|&(i, _)| i == idx) {
            picks.push((idx, row));
        }
    }
    assert_eq!(picks.len(), 10, "not enough unoccluded evaluation points");

    let mut proposed_worst = 0.0_f64;
    let mut kriging_worst = 0.0_f64;
    for &(idx, row) in &picks {
        let coords = dataset.records[idx].coords;
        let rxp = scene.rx_point(coords);
        let d = scene.tx.dist(rxp);
        let theory_delay_ns = d / SPEED_OF_LIGHT * 1e9;
        let truth_cir = reconstruct_cir(&dataset.records[idx], scene.f_c_hz);
        let truth_first = truth_cir.taps.first().expect("unoccluded point has LoS tap");

        let prop_cir = reconstruct_cir(&proposed.records[idx], scene.f_c_hz);
        let prop_first = prop_cir.taps.first().expect("prediction has taps");
        let delay_dev = (prop_first.delay_ns - theory_delay_ns).abs() / theory_delay_ns;
        assert!(
            delay_dev <= 0.10,
            "first-tap delay off by {:.1}% at ({}, {})",
            delay_dev * 100.0,
            coords.x,
            coords.y
        );
        let truth_power_dbm = 10.0 * (truth_first.magnitude * truth_first.magnitude).log10() + 30.0;
        let prop_power_dbm = 10.0 * (prop_first.magnitude * prop_first.magnitude).log10() + 30.0;
        let power_dev = (prop_power_dbm - truth_power_dbm).abs();
        assert!(
            power_dev <= 3.0,
            "first-tap power off by {power_dev:.2} dB at ({}, {})",
            coords.x,
            coords.y
        );
        proposed_worst = proposed_worst.max(delay_dev);

        let krig_cir = reconstruct_cir(&kriging.records[row], scene.f_c_hz);
        let krig_first = krig_cir.taps.first().expect("kriging prediction has taps");
        kriging_worst =
            kriging_worst.max((krig_first.delay_ns - theory_delay_ns).abs() / theory_delay_ns);
    }
    assert!(
        kriging_worst > proposed_worst,
        "kriging worst-case {kriging_worst:.4} not above proposed {proposed_worst:.4}"
    );
    pass(
        "criterion 10 (CIR sanity)",
        format!(
            "10 points: proposed worst first-tap delay deviation {:.2}%, kriging {:.2}%",
            proposed_worst * 100.0,
            kriging_worst * 100.0
        ),
    );
}
