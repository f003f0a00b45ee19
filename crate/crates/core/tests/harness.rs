use kaleidocal::harness::{run_sweep, run_trials, SweepAxis, SweepSpec, CSV_HEADER};

fn small(trials: usize, seed: u64) -> SweepSpec {
    SweepSpec {
        levels: vec![0.0, 1.0],
        ..SweepSpec::noise_sweep(trials, seed)
    }
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let spec = small(4, 11);
    let parallel = run_sweep(&spec).unwrap().to_csv();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| run_sweep(&spec)).unwrap().to_csv();
    assert_eq!(parallel, serial);
    assert_eq!(parallel, run_sweep(&spec).unwrap().to_csv());
}

#[test]
fn seed_changes_results() {
    let a = run_sweep(&small(3, 1)).unwrap();
    let b = run_sweep(&small(3, 2)).unwrap();
    let noisy = |t: &kaleidocal::harness::SweepTable| {
        t.rows.iter().filter(|r| r.axis_value == 1.0).map(|r| r.mean_e_rep).collect::<Vec<_>>()
    };
    assert_ne!(noisy(&a), noisy(&b));
}

#[test]
fn noiseless_level_is_exact() {
    let spec = small(3, 42);
    let table = run_sweep(&spec).unwrap();
    for row in table.rows.iter().filter(|r| r.axis_value == 0.0) {
        assert_eq!(row.degenerate_count, 0, "{}", row.method);
        assert!(row.mean_e_n < 1e-8, "{}: E_n {}", row.method, row.mean_e_n);
        assert!(row.mean_e_d < 1e-8, "{}: E_d {}", row.method, row.mean_e_d);
        assert!(row.mean_e_rep < 1e-6, "{}: E_rep {}", row.method, row.mean_e_rep);
    }
}

#[test]
fn csv_layout() {
    let spec = small(2, 3);
    let table = run_sweep(&spec).unwrap();
    let csv = table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + spec.levels.len() * spec.methods.len());
    let columns = CSV_HEADER.split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == columns));
    assert!(table.row(1.0, "proposed-ba/random/5").is_some());
}

#[test]
fn grid_shape() {
    let spec = small(3, 9);
    let grid = run_trials(&spec).unwrap();
    assert_eq!(grid.len(), 2);
    assert!(grid.iter().all(|per_method| per_method.len() == spec.methods.len()));
    assert!(grid.iter().flatten().all(|cell| cell.len() == 3));
}

#[test]
fn point_axis_labels_follow_the_level() {
    let spec = SweepSpec {
        levels: vec![2.0, 3.0],
        ..SweepSpec::point_sweep(1, 5)
    };
    let table = run_sweep(&spec).unwrap();
    assert_eq!(table.axis, SweepAxis::Points);
    assert!(table.row(3.0, "proposed-linear/random/3").is_some());
    assert!(table.to_csv().lines().nth(1).unwrap().starts_with("2,"));
}

#[test]
fn zero_trials_rejected() {
    assert!(run_sweep(&small(0, 1)).is_err());
}

#[test]
fn point_axis_runs_each_configuration_once() {
    let spec = SweepSpec {
        levels: vec![2.0],
        ..SweepSpec::point_sweep(1, 5)
    };
    let table = run_sweep(&spec).unwrap();
    let mut labels: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
    let total = labels.len();
    labels.sort();
    labels.dedup();
    assert_eq!(labels.len(), total);
    assert_eq!(total, spec.active_methods().len());
    assert!(total < spec.methods.len());
}
