use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;

use kaleidocal::io::{to_json, CalibrationFile, CorrespondenceFile, PointsFile};
use kaleidocal::synth::Layout;
use kaleidocal::{default_rig, MirrorPlane, SceneConfig};

fn run(args: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kaleidocal")).args(args).output().unwrap()
}

fn run_str(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kaleidocal")).args(args).output().unwrap()
}

fn write_scene(dir: &Path, scene: &SceneConfig) -> (PathBuf, PathBuf) {
    let config = dir.join("scene.json");
    std::fs::write(&config, serde_json::to_string_pretty(scene).unwrap()).unwrap();
    let corr = dir.join("obs.json");
    let out = run(&[Path::new("simulate"), &config, &corr]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (config, corr)
}

fn noiseless(layout: Layout, count: usize) -> SceneConfig {
    let mut scene = default_rig();
    scene.noise_sigma = 0.0;
    scene.points.layout = layout;
    scene.points.count = count;
    scene
}

fn summary(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn simulate_writes_round_trippable_files() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corr) = write_scene(dir.path(), &noiseless(Layout::Planar, 5));
    let text = std::fs::read_to_string(&corr).unwrap();
    let parsed: CorrespondenceFile = serde_json::from_str(&text).unwrap();
    assert_eq!(to_json(&parsed), text);
    assert_eq!(parsed.points.len(), 5);
    assert!(dir.path().join("obs.truth.json").exists());
    assert!(dir.path().join("obs.reference.json").exists());
}

#[test]
fn noiseless_single_point_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corr) = write_scene(dir.path(), &noiseless(Layout::Random, 1));
    let cal = dir.path().join("cal.json");
    let truth = dir.path().join("obs.truth.json");
    for ba in ["on", "off"] {
        let out = run_str(&[
            "calibrate",
            corr.to_str().unwrap(),
            cal.to_str().unwrap(),
            "--ba",
            ba,
            "--truth",
            truth.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let s = summary(&out);
        assert!(s["e_rep"].as_f64().unwrap() < 1e-7, "{s}");
        assert!(s["e_n"].as_f64().unwrap() < 1e-9, "{s}");
        let file: CalibrationFile = serde_json::from_str(&std::fs::read_to_string(&cal).unwrap()).unwrap();
        assert!((file.mirrors[0].distance() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn triangulate_recovers_points_up_to_scale() {
    let dir = tempfile::tempdir().unwrap();
    let scene = noiseless(Layout::Random, 4);
    let (_, corr) = write_scene(dir.path(), &scene);
    let cal = dir.path().join("cal.json");
    let pts = dir.path().join("pts.json");
    assert!(run(&[Path::new("calibrate"), &corr, &cal]).status.success());
    assert!(run(&[Path::new("triangulate"), &corr, &cal, &pts]).status.success());
    let points: PointsFile = serde_json::from_str(&std::fs::read_to_string(&pts).unwrap()).unwrap();
    let (truth, _) = kaleidocal::generate(&scene).unwrap();
    let d1 = truth.distances()[0];
    for (p, t) in points.points.iter().zip(truth.points()) {
        assert!((Vector3::from(*p) * d1 - t).norm() < 1e-9);
    }
}

#[test]
fn corrupt_input_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let corr = dir.path().join("obs.json");
    std::fs::write(&corr, "{\"intrinsics\": [[1000, 0").unwrap();
    let cal = dir.path().join("cal.json");
    let out = run(&[Path::new("calibrate"), &corr, &cal]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!cal.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn baseline_requires_reference() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corr) = write_scene(dir.path(), &noiseless(Layout::Planar, 5));
    let cal = dir.path().join("cal.json");
    let out = run_str(&["calibrate", corr.to_str().unwrap(), cal.to_str().unwrap(), "--method", "baseline"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!cal.exists());
}

#[test]
fn missing_chamber_exits_4_and_lists_it() {
    let dir = tempfile::tempdir().unwrap();
    let (_, corr) = write_scene(dir.path(), &noiseless(Layout::Planar, 5));
    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&corr).unwrap()).unwrap();
    for p in value["points"].as_array_mut().unwrap() {
        p.as_object_mut().unwrap().remove("12");
    }
    std::fs::write(&corr, serde_json::to_string(&value).unwrap()).unwrap();
    let cal = dir.path().join("cal.json");
    let reference = dir.path().join("obs.reference.json");
    let out = run_str(&[
        "calibrate",
        corr.to_str().unwrap(),
        cal.to_str().unwrap(),
        "--method",
        "takahashi",
        "--reference",
        reference.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("12"));
}

#[test]
fn takahashi_on_prism_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let mut scene = noiseless(Layout::Planar, 5);
    let mirror = |deg: f64, d: f64| {
        let a = deg.to_radians();
        MirrorPlane::new(Vector3::new(a.sin(), 0.0, -a.cos()), d).unwrap()
    };
    scene.mirrors = [mirror(-35.0, 0.6), mirror(0.0, 1.0), mirror(35.0, 0.6)];
    scene.points.plane.center = [0.03, 0.08, 0.6];
    let (_, corr) = write_scene(dir.path(), &scene);
    let cal = dir.path().join("cal.json");
    let reference = dir.path().join("obs.reference.json");
    let out = run_str(&[
        "calibrate",
        corr.to_str().unwrap(),
        cal.to_str().unwrap(),
        "--method",
        "takahashi",
        "--reference",
        reference.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!cal.exists());
}

#[test]
fn noiseless_sweep_has_exact_normals() {
    let dir = tempfile::tempdir().unwrap();
    let spec = kaleidocal::harness::SweepSpec {
        levels: vec![0.0],
        ..kaleidocal::harness::SweepSpec::noise_sweep(1, 3)
    };
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let csv = dir.path().join("table.csv");
    let out = run(&[Path::new("sweep"), &spec_path, &csv]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), spec.methods.len());
    for row in rows {
        let e_n: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(e_n < 1e-8, "{row}");
    }
}
