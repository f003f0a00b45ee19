use approx::assert_relative_eq;
use nalgebra::{Rotation3, Vector3};

use kaleidocal::baselines::{
    baseline_calibrate, calibrate_with_reference, estimate_pose, intersection_vectors, pose_landmarks,
    required_chambers, takahashi_calibrate, PosedLandmarks, ReferenceMethod, ReferenceObject,
};
use kaleidocal::harness::{error_distance, error_normal, DistanceScale};
use kaleidocal::synth::Layout;
use kaleidocal::{calibrate_linear, default_rig, generate, Error, MirrorPlane, ReflectionSequence, SceneConfig};

fn noiseless(layout: Layout, count: usize) -> SceneConfig {
    let mut scene = default_rig();
    scene.noise_sigma = 0.0;
    scene.points.layout = layout;
    scene.points.count = count;
    scene
}

fn exact_posed() -> (PosedLandmarks, [MirrorPlane; 3]) {
    let scene = noiseless(Layout::Planar, 6);
    let (truth, _) = generate(&scene).unwrap();
    let posed = PosedLandmarks::from_scene(&truth.mirrors, &truth.points(), &required_chambers()).unwrap();
    (posed, truth.mirrors)
}

fn assert_mirrors_close(est: &[MirrorPlane; 3], truth: &[MirrorPlane; 3], tol: f64) {
    for (e, t) in est.iter().zip(truth) {
        assert_relative_eq!(e.normal(), t.normal(), epsilon = tol);
        assert_relative_eq!(e.distance(), t.distance(), epsilon = tol);
    }
}

#[test]
fn pose_is_exact_on_noiseless_projections() {
    let a = default_rig().intrinsics;
    let board: Vec<Vector3<f64>> = [(-0.03, -0.02), (0.03, -0.03), (0.02, 0.03), (-0.025, 0.02), (0.0, 0.01)]
        .iter()
        .map(|&(x, y)| Vector3::new(x, y, 0.0))
        .collect();
    let object = ReferenceObject::new(board.clone(), true).unwrap();
    let rotations = [
        Rotation3::from_euler_angles(0.1, -0.2, 0.3),
        Rotation3::from_euler_angles(0.1, -0.2, 0.3 + std::f64::consts::PI),
    ];
    for rotation in rotations {
        for mirrored in [false, true] {
            let t = Vector3::new(0.02, -0.01, 1.1);
            // A mirrored chamber sees the board with its handedness flipped.
            let camera: Vec<Vector3<f64>> = board
                .iter()
                .map(|p| rotation * if mirrored { Vector3::new(p.x, -p.y, 0.0) } else { *p } + t)
                .collect();
            let pixels: Vec<_> = camera.iter().map(|p| a.project(p).unwrap()).collect();
            let est = estimate_pose(&pixels, &object, &a, mirrored).unwrap();
            assert!(est.rms_error < 1e-7, "rms {}", est.rms_error);
            for (p, c) in est.points.iter().zip(&camera) {
                assert!((p - c).norm() < 1e-7, "mirrored {mirrored}: {p} vs {c}");
            }
        }
    }
}

#[test]
fn pose_in_real_chambers() {
    let scene = noiseless(Layout::Planar, 5);
    let (truth, obs) = generate(&scene).unwrap();
    let object = truth.reference_object().unwrap();
    let (posed, _) = pose_landmarks(&obs, &object, &scene.intrinsics, &required_chambers()).unwrap();
    let exact = PosedLandmarks::from_scene(&truth.mirrors, &truth.points(), &required_chambers()).unwrap();
    for (s, pts) in exact.iter() {
        for (p, q) in pts.iter().zip(posed.get(s).unwrap()) {
            assert!((p - q).norm() < 1e-7, "chamber {s}");
        }
    }
}

#[test]
fn exact_recovery_from_exact_landmarks() {
    let (posed, truth) = exact_posed();
    assert_mirrors_close(&baseline_calibrate(&posed).unwrap(), &truth, 1e-10);
    assert_mirrors_close(&takahashi_calibrate(&posed).unwrap(), &truth, 1e-10);
}

#[test]
fn distance_formula_matches_midpoint_average() {
    let (posed, truth) = exact_posed();
    let est = baseline_calibrate(&posed).unwrap();
    // Independent check for mirror 1: the midpoints of the pairs (0, 1),
    // (2, 12) and (3, 13) lie on the plane.
    let get = |k: &str| posed.get(&k.parse::<ReflectionSequence>().unwrap()).unwrap().to_vec();
    let n = *truth[0].normal();
    let mut sum = 0.0;
    let mut count = 0.0;
    for (a, b) in [("0", "1"), ("2", "12"), ("3", "13")] {
        for (p, q) in get(a).iter().zip(get(b)) {
            sum += -n.dot(&(0.5 * (p + q)));
            count += 1.0;
        }
    }
    assert_relative_eq!(est[0].distance(), sum / count, epsilon = 1e-12);
}

#[test]
fn intersection_vectors_are_orthogonal_to_both_normals() {
    let (posed, truth) = exact_posed();
    let m = intersection_vectors(&posed).unwrap();
    for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        assert!(m[k].dot(truth[i].normal()).abs() < 1e-10);
        assert!(m[k].dot(truth[j].normal()).abs() < 1e-10);
    }
}

#[test]
fn agrees_with_linear_method_on_exact_input() {
    let scene = noiseless(Layout::Planar, 5);
    let (truth, obs) = generate(&scene).unwrap();
    let object = truth.reference_object().unwrap();
    let linear = calibrate_linear(&obs, &scene.intrinsics).unwrap();
    let d1 = truth.distances()[0];
    let linear_metric = linear.mirrors.map(|m| m.scaled(d1).unwrap());
    for method in [ReferenceMethod::Baseline, ReferenceMethod::Takahashi] {
        let (mirrors, iterations) = calibrate_with_reference(method, &obs, &object, &scene.intrinsics).unwrap();
        assert!(iterations > 0);
        let e_n = error_normal(&mirrors.map(|m| *m.normal()), &linear_metric.map(|m| *m.normal()));
        let e_d = error_distance(
            &mirrors.map(|m| m.distance()),
            &linear_metric.map(|m| m.distance()),
            DistanceScale::Metric,
        );
        assert!(e_n < 1e-8 && e_d < 1e-8, "{method:?}: {e_n} {e_d}");
    }
}

#[test]
fn landmark_order_does_not_matter() {
    let scene = noiseless(Layout::Planar, 5);
    let (truth, _) = generate(&scene).unwrap();
    let chambers = required_chambers();
    let a = PosedLandmarks::from_scene(&truth.mirrors, &truth.points(), &chambers).unwrap();
    let mut reversed = truth.points();
    reversed.reverse();
    let b = PosedLandmarks::from_scene(&truth.mirrors, &reversed, &chambers).unwrap();
    assert_mirrors_close(&baseline_calibrate(&a).unwrap(), &baseline_calibrate(&b).unwrap(), 1e-12);
    assert_mirrors_close(&takahashi_calibrate(&a).unwrap(), &takahashi_calibrate(&b).unwrap(), 1e-12);
}

#[test]
fn object_frame_translation_does_not_matter() {
    let scene = noiseless(Layout::Planar, 5);
    let (truth, obs) = generate(&scene).unwrap();
    let object = truth.reference_object().unwrap();
    let shifted = ReferenceObject::new(
        object.points().iter().map(|p| p + Vector3::new(0.2, -0.1, 0.0)).collect(),
        true,
    )
    .unwrap();
    let a = calibrate_with_reference(ReferenceMethod::Baseline, &obs, &object, &scene.intrinsics).unwrap().0;
    let b = calibrate_with_reference(ReferenceMethod::Baseline, &obs, &shifted, &scene.intrinsics).unwrap().0;
    assert_mirrors_close(&a, &b, 1e-9);
}

#[test]
fn parallel_intersection_lines_are_degenerate() {
    let mirror = |deg: f64, d: f64| {
        let a = f64::to_radians(deg);
        MirrorPlane::new(Vector3::new(a.sin(), 0.0, -a.cos()), d).unwrap()
    };
    let mirrors = [mirror(-35.0, 0.6), mirror(0.0, 1.0), mirror(35.0, 0.6)];
    let points: Vec<Vector3<f64>> = (0..5).map(|k| Vector3::new(0.03 + 0.01 * k as f64, 0.08, 0.6 - 0.005 * k as f64)).collect();
    let posed = PosedLandmarks::from_scene(&mirrors, &points, &required_chambers()).unwrap();
    assert!(matches!(takahashi_calibrate(&posed), Err(Error::DegenerateIntersection(_))));
}

#[test]
fn missing_chambers_are_listed() {
    let scene = noiseless(Layout::Planar, 5);
    let (truth, obs) = generate(&scene).unwrap();
    let keep: Vec<ReflectionSequence> = ReflectionSequence::default_set()
        .into_iter()
        .filter(|s| s.key() != "12" && s.key() != "31")
        .collect();
    let obs: Vec<_> = obs.iter().map(|o| o.restricted_to(&keep)).collect();
    let object = truth.reference_object().unwrap();
    match calibrate_with_reference(ReferenceMethod::Takahashi, &obs, &object, &scene.intrinsics) {
        Err(Error::MissingChambers(keys)) => assert_eq!(keys, ["12", "31"]),
        other => panic!("expected missing chambers, got {other:?}"),
    }
}

#[test]
fn invalid_estimates_are_degenerate() {
    let (posed, _) = exact_posed();
    // Moving every landmark far behind the camera keeps the normals but
    // drives the distances negative.
    let mut shifted = PosedLandmarks::new();
    for (s, pts) in posed.iter() {
        shifted.insert(s.clone(), pts.iter().map(|p| p - Vector3::new(0.0, 0.0, 5.0)).collect());
    }
    assert!(matches!(baseline_calibrate(&shifted), Err(Error::DegenerateConfiguration(_))));
    assert!(matches!(takahashi_calibrate(&shifted), Err(Error::DegenerateConfiguration(_))));
}
