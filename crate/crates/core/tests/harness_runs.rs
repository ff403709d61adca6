use std::fs;

use fieldroad::harness::{self, ExperimentConfig, ExperimentKind, OracleInitial, ProfileSpec};

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml(
        r#"
        seed = 42
        n = [8, 12]
        trajectories = 16
        times = [0.02, 0.04]
        [pde]
        cells = 32
        [convergence]
        bins = 2
        "#,
    )
    .unwrap()
}

fn csv_of(e: &harness::Emitted) -> Vec<(String, String)> {
    e.tables.iter().map(|t| (t.name.clone(), t.to_csv())).collect()
}

#[test]
fn worker_count_does_not_change_tables() {
    let mut cfg = small();
    cfg.workers = Some(1);
    let a = harness::run(ExperimentKind::Converge, &cfg).unwrap();
    cfg.workers = Some(3);
    let b = harness::run(ExperimentKind::Converge, &cfg).unwrap();
    assert_eq!(csv_of(&a), csv_of(&b));
    assert_eq!(a.config_hash, b.config_hash);
    cfg.seed += 1;
    let c = harness::run(ExperimentKind::Converge, &cfg).unwrap();
    assert_ne!(csv_of(&a)[2], csv_of(&c)[2]);
    assert_ne!(a.config_hash, c.config_hash);
}

#[test]
fn emitted_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let e = harness::run(ExperimentKind::Simulate, &small()).unwrap();
    let paths = e.write(dir.path()).unwrap();
    assert_eq!(paths.len(), e.tables.len() + 1);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(paths.last().unwrap()).unwrap()).unwrap();
    assert_eq!(json["config_hash"], e.config_hash.as_str());
    assert_eq!(json["version"], fieldroad::VERSION);
    assert!(json["body"]["mean_particles"].is_array());
}

#[test]
fn flat_profile_is_consistent_with_noise() {
    let mut cfg = small();
    cfg.profile = ProfileSpec::Flat { c: 0.5 };
    cfg.trajectories = 64;
    let pool = harness::thread_pool(None).unwrap();
    let (r, _) = harness::run_convergence_study(&cfg, &pool).unwrap();
    assert!(r.flat);
    assert!(r.passed, "{:?}", r.rows);
}

#[test]
fn tabulated_profile_loads_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut field = String::from("x,y,value\n");
    for i in 0..5 {
        for j in 0..5 {
            let (x, y) = (i as f64 / 4.0, j as f64 / 4.0);
            field.push_str(&format!("{x},{y},{}\n", 0.2 + 0.5 * y));
        }
    }
    fs::write(dir.path().join("field.csv"), field).unwrap();
    fs::write(dir.path().join("road.csv"), "0,0.1\n0.5,0.9\n1,0.1\n").unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    fs::write(
        &cfg_path,
        "n = [6]\ntrajectories = 4\n[profile]\npreset = \"tabulated\"\nfield = \"field.csv\"\nroad = \"road.csv\"\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
    let prof = cfg.profile().unwrap();
    assert!((prof.v0(&[0.3], 0.5) - 0.45).abs() < 1e-12);
    assert!((prof.u0(&[0.5]) - 0.9).abs() < 1e-12);
    let h = cfg.hash();
    fs::write(dir.path().join("road.csv"), "0,0.2\n0.5,0.9\n1,0.2\n").unwrap();
    assert_ne!(ExperimentConfig::from_file(&cfg_path).unwrap().hash(), h, "table contents enter the hash");
    assert!(harness::run(ExperimentKind::Simulate, &cfg).unwrap().passed);
}

#[test]
fn oracle_from_a_point_mass() {
    let mut cfg = small();
    cfg.oracle.initial = OracleInitial::Dirac { state: 137 };
    cfg.oracle.trajectories = 20_000;
    let pool = harness::thread_pool(None).unwrap();
    let (r, tables) = harness::run_oracle_comparison(&cfg, &pool).unwrap();
    assert!(r.passed, "{:?}", r.rows);
    assert!(r.rows.iter().all(|x| x.tv <= x.bound && x.sharp_bound < x.bound));
    assert_eq!(tables.len(), 2);
}

#[test]
fn event_cap_stops_long_trajectories() {
    let mut cfg = small();
    cfg.event_cap = 10;
    let err = harness::run(ExperimentKind::Simulate, &cfg).unwrap_err();
    assert!(err.to_string().contains("10"), "{err}");
}
