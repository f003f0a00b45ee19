use approx::assert_relative_eq;
use nalgebra::Vector3;

use kaleidocal::geometry::compose;
use kaleidocal::harness::{error_distance, error_normal, DistanceScale};
use kaleidocal::linalg::null_vector;
use kaleidocal::linear::{
    build_distance_system, calibrate_linear, estimate_normals, normal_rows, triangulate_observation,
};
use kaleidocal::synth::Layout;
use kaleidocal::{
    default_rig, generate, CameraIntrinsics, Error, KaleidoscopicObservation, MirrorPlane, Pixel,
    ReflectionSequence, SceneConfig,
};

fn noiseless(count: usize, layout: Layout) -> SceneConfig {
    let mut scene = default_rig();
    scene.noise_sigma = 0.0;
    scene.points.count = count;
    scene.points.layout = layout;
    scene
}

fn assert_exact(scene: &SceneConfig) {
    let (truth, obs) = generate(scene).unwrap();
    let cal = calibrate_linear(&obs, &scene.intrinsics).unwrap();
    let e_n = error_normal(&cal.mirrors.map(|m| *m.normal()), &truth.normals());
    let e_d = error_distance(&cal.mirrors.map(|m| m.distance()), &truth.distances(), DistanceScale::Relative);
    assert!(e_n < 1e-9, "E_n = {e_n}");
    assert!(e_d < 1e-9, "E_d = {e_d}");
    assert_relative_eq!(cal.mirrors[0].distance(), 1.0);
    let d1 = truth.distances()[0];
    for (p, t) in cal.points.iter().zip(truth.points()) {
        assert!((p * d1 - t).norm() < 1e-9, "point {p} vs {t}");
    }
    assert!(!cal.diagnostics.is_degenerate());
}

#[test]
fn normal_rows_annihilate_true_normals() {
    let scene = noiseless(3, Layout::Random);
    let (truth, obs) = generate(&scene).unwrap();
    for mirror in 1..=3 {
        let rows = normal_rows(&obs, &scene.intrinsics, mirror);
        // Pairs (0, i), (j, ij), (k, ik) for every point.
        assert_eq!(rows.len(), 9);
        for r in rows {
            assert!(r.dot(&truth.normals()[mirror - 1]).abs() < 1e-14 * r.norm().max(1.0));
        }
    }
}

#[test]
fn exact_recovery_single_point() {
    assert_exact(&noiseless(1, Layout::Random));
}

#[test]
fn exact_recovery_several_points() {
    assert_exact(&noiseless(5, Layout::Random));
    assert_exact(&noiseless(5, Layout::Planar));
}

#[test]
fn exact_recovery_with_third_reflection() {
    let mut scene = noiseless(1, Layout::Random);
    scene.sequences.push("123".parse().unwrap());
    assert_exact(&scene);
    let (_, obs) = generate(&scene).unwrap();
    // "123" pairs with "23" for mirror 1.
    assert_eq!(normal_rows(&obs, &scene.intrinsics, 1).len(), 4);
    let system = build_distance_system(&obs, &scene.intrinsics, &default_rig().mirrors.map(|m| *m.normal())).unwrap();
    assert_eq!(system.k.nrows(), 33);
}

#[test]
fn distance_system_rank() {
    let scene = noiseless(4, Layout::Random);
    let (truth, obs) = generate(&scene).unwrap();
    let system = build_distance_system(&obs, &scene.intrinsics, &truth.normals()).unwrap();
    assert_eq!((system.k.nrows(), system.k.ncols()), (120, 15));
    let nv = null_vector(&system.k).unwrap();
    assert_eq!(nv.rank(1e-10), 14);
    for b in 0..system.num_blocks() {
        assert!(null_vector(&system.block(b)).unwrap().rank(1e-10) <= 2);
    }
    // The null vector holds the points and distances up to scale.
    let v = &nv.vector;
    let s = truth.distances()[0] / v[system.distance_column(1)];
    for (k, d) in truth.distances().iter().enumerate() {
        assert_relative_eq!(v[system.distance_column(k + 1)] * s, *d, epsilon = 1e-10);
    }
}

#[test]
fn invariant_to_intrinsics() {
    let mut scene = noiseless(2, Layout::Random);
    let a = calibrate_linear(&generate(&scene).unwrap().1, &scene.intrinsics).unwrap();
    scene.intrinsics = CameraIntrinsics::from_focal(700.0, 310.0, 260.0).unwrap();
    let b = calibrate_linear(&generate(&scene).unwrap().1, &scene.intrinsics).unwrap();
    for (ma, mb) in a.mirrors.iter().zip(&b.mirrors) {
        assert_relative_eq!(ma.normal(), mb.normal(), epsilon = 1e-10);
        assert_relative_eq!(ma.distance(), mb.distance(), epsilon = 1e-10);
    }
}

#[test]
fn invariant_to_global_scale() {
    let mut scene = noiseless(2, Layout::Random);
    let a = calibrate_linear(&generate(&scene).unwrap().1, &scene.intrinsics).unwrap();
    let s = 3.7;
    scene.mirrors = scene.mirrors.map(|m| m.scaled(s).unwrap());
    scene.points.volume.min = scene.points.volume.min.map(|c| c * s);
    scene.points.volume.max = scene.points.volume.max.map(|c| c * s);
    let b = calibrate_linear(&generate(&scene).unwrap().1, &scene.intrinsics).unwrap();
    for (ma, mb) in a.mirrors.iter().zip(&b.mirrors) {
        assert_relative_eq!(ma.normal(), mb.normal(), epsilon = 1e-10);
        assert_relative_eq!(ma.distance(), mb.distance(), epsilon = 1e-10);
    }
}

/// Observations of `points` through exact chambers, bypassing the scene checks.
fn observe(mirrors: &[MirrorPlane; 3], points: &[Vector3<f64>], a: &CameraIntrinsics) -> Vec<KaleidoscopicObservation> {
    points
        .iter()
        .map(|p| {
            ReflectionSequence::default_set()
                .into_iter()
                .map(|s| {
                    let q = a.project(&compose(s.indices(), mirrors).unwrap().apply(p)).unwrap();
                    (s, q)
                })
                .collect()
        })
        .collect()
}

#[test]
fn parallel_mirrors_are_flagged() {
    let rig = default_rig();
    let n = *rig.mirrors[0].normal();
    let points = [Vector3::new(0.01, 0.0, 1.0), Vector3::new(-0.01, 0.01, 1.02)];
    // A second mirror with the normal of mirror 1, further away.
    let twin = MirrorPlane::new(n, 0.3).unwrap();
    let mirrors = [rig.mirrors[0], rig.mirrors[1], twin];
    let obs = observe(&mirrors, &points, &rig.intrinsics);
    let cal = calibrate_linear(&obs, &rig.intrinsics).unwrap();
    assert!(cal.diagnostics.is_degenerate());
    assert!(cal.diagnostics.warnings.iter().any(|w| w.contains("parallel")));
}

#[test]
fn missing_base_chamber() {
    let scene = noiseless(1, Layout::Random);
    let (_, obs) = generate(&scene).unwrap();
    let without: Vec<ReflectionSequence> = ReflectionSequence::default_set().into_iter().skip(1).collect();
    let obs: Vec<_> = obs.iter().map(|o| o.restricted_to(&without)).collect();
    assert!(matches!(calibrate_linear(&obs, &scene.intrinsics), Err(Error::MissingChambers(_))));
}

#[test]
fn too_few_chambers_for_a_normal() {
    let scene = noiseless(1, Layout::Random);
    let (_, obs) = generate(&scene).unwrap();
    let keep: Vec<ReflectionSequence> = ["0", "1", "2", "3", "21", "23"].iter().map(|k| k.parse().unwrap()).collect();
    let obs: Vec<_> = obs.iter().map(|o| o.restricted_to(&keep)).collect();
    // Mirror 1 only relates (0, 1); mirror 3 only (0, 3).
    assert!(matches!(
        estimate_normals(&obs, &scene.intrinsics),
        Err(Error::InsufficientConstraints { mirror: 1, rows: 1 })
    ));
}

#[test]
fn single_view_triangulation_is_refused() {
    let rig = default_rig();
    let q = rig.intrinsics.project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
    let obs: KaleidoscopicObservation = [(ReflectionSequence::base(), q)].into_iter().collect();
    let t = rig.mirrors.map(|m| m.transform());
    assert!(matches!(
        triangulate_observation(&obs, &rig.intrinsics, &t),
        Err(Error::IllPosedTriangulation { .. })
    ));
}

#[test]
fn triangulation_minimizes_the_algebraic_residual() {
    let mut scene = default_rig();
    scene.points.count = 1;
    scene.noise_sigma = 2.0;
    let (truth, obs) = generate(&scene).unwrap();
    let t = truth.mirrors.map(|m| m.transform());
    let a = &scene.intrinsics;
    let residual = |p: &Vector3<f64>| -> f64 {
        obs[0]
            .iter()
            .map(|(s, q): (&ReflectionSequence, &Pixel)| {
                let x = a.normalize(*q).homogeneous();
                x.cross(&compose(s.indices(), &truth.mirrors).unwrap().apply(p)).norm_squared()
            })
            .sum()
    };
    let p = triangulate_observation(&obs[0], a, &t).unwrap();
    let best = residual(&p);
    for d in [Vector3::x(), Vector3::y(), Vector3::z(), Vector3::new(1.0, -1.0, 0.5)] {
        for h in [1e-4, -1e-4, 1e-2] {
            assert!(residual(&(p + h * d)) >= best);
        }
    }
}
