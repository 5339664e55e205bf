use std::path::Path;

use twlab::error::LabError;
use twlab::harness::*;

fn config(text: &str, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml(text).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn values(rows: &[ResultRow]) -> Vec<(String, Option<usize>, u64, Option<u64>, String)> {
    rows.iter()
        .map(|r| (r.stat.clone(), r.n, r.value.to_bits(), r.stderr.map(f64::to_bits), r.pass.clone()))
        .collect()
}

#[test]
fn defaults_for_every_experiment_validate() {
    for e in EXPERIMENTS {
        let cfg = RunConfig::for_experiment(e).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.workers, 1);
    }
    assert!(matches!(RunConfig::for_experiment("nope"), Err(LabError::Config(_))));
}

#[test]
fn invalid_configurations_are_rejected() {
    let bad = [
        "experiment = \"edge-cdf\"\ntrials = 0",
        "experiment = \"edge-cdf\"\nworkers = 0",
        "experiment = \"edge-cdf\"\n[knobs]\nepsilon = 0.5",
        "experiment = \"edge-cdf\"\n[knobs]\ncentering = \"median\"",
        "experiment = \"edge-cdf\"\n[ensemble]\nbeta = 4",
        "experiment = \"edge-cdf\"\n[ensemble]\nlaw = \"cauchy\"",
        "experiment = \"edge-cdf\"\n[ensemble]\nbeta = 2\ndiagonal = \"doubled\"",
        "experiment = \"edge-cdf\"\nn_list = [7]\n[ensemble]\nprofile = { family = \"block\", blocks = 2, within = 1.5, between = 0.5 }",
    ];
    for text in bad {
        let cfg = RunConfig::from_toml(text).unwrap();
        assert!(cfg.validate().is_err(), "{text}");
    }
    assert!(RunConfig::from_toml("experiment = \"verify\"\ntypo = 1").is_err());
    assert!(RunConfig::from_toml("experiment = \"verify\"\n[knobs]\nalpha = 1").is_err());
}

#[test]
fn toml_round_trip() {
    let text = r#"
experiment = "k3k4"
master_seed = 5
trials = 40
n_list = [10, 12]
[ensemble]
law = "skew_bernoulli(0.2)"
profile = { family = "block", blocks = 2, within = 1.5, between = 0.5 }
[knobs]
t_grid = [1.0]
z_grid = [[2.1, 0.05]]
"#;
    let cfg = RunConfig::from_toml(text).unwrap();
    cfg.validate().unwrap();
    assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
}

#[test]
fn hash_ignores_workers_and_output() {
    let a = RunConfig::for_experiment("edge-cdf").unwrap();
    let mut b = a.clone();
    b.workers = 8;
    b.out_dir = "elsewhere".into();
    assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    assert_eq!(a.hash().unwrap().len(), 16);
    let mut c = a.clone();
    c.master_seed += 1;
    assert_ne!(a.hash().unwrap(), c.hash().unwrap());
}

#[test]
fn rerun_appends_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "experiment = \"edge-cdf\"\ntrials = 300\nn_list = [20]\n[ensemble]\ndiagonal = \"doubled\"\n[knobs]\nbootstrap = 20",
        dir.path(),
    );
    let first = run(&cfg).unwrap();
    let second = run(&cfg).unwrap();
    assert_eq!(first.csv_path, dir.path().join("edge-cdf.csv"));
    let stored = read_rows(&first.csv_path).unwrap();
    assert_eq!(stored.len(), 2 * first.rows.len());
    assert_eq!(values(&stored[..first.rows.len()]), values(&stored[first.rows.len()..]));
    assert_eq!(values(&first.rows), values(&second.rows));
    let text = std::fs::read_to_string(&first.csv_path).unwrap();
    assert_eq!(text.matches("config_hash").count(), 1);
    assert!(stored.iter().all(|r| r.config_hash == first.config_hash && r.experiment == "edge-cdf"));
    assert!(stored.iter().all(|r| r.version == VERSION));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = \"flow-derivative\"\ntrials = 200\nn_list = [8]\n[ensemble]\nprofile = { family = \"block\", blocks = 2, within = 1.5, between = 0.5 }";
    let mut cfg = config(text, dir.path());
    let one = execute(&cfg).unwrap();
    cfg.workers = 4;
    let four = execute(&cfg).unwrap();
    assert_eq!(values(&one), values(&four));
}

#[test]
fn every_experiment_runs_small() {
    let dir = tempfile::tempdir().unwrap();
    let block = "profile = { family = \"block\", blocks = 2, within = 1.5, between = 0.5 }";
    let cases = [
        format!("experiment = \"rate-fit\"\ntrials = 200\nn_list = [10, 20, 40]\n[knobs]\nbootstrap = 10\ncentering = \"fixed_2\""),
        format!("experiment = \"sandwich\"\ntrials = 100\nn_list = [30]\n[ensemble]\ndiagonal = \"doubled\"\n[knobs]\ne_points = 3"),
        format!("experiment = \"k3k4\"\ntrials = 20\nn_list = [10, 12]\n[ensemble]\nlaw = \"skew_bernoulli(0.2)\"\n{block}"),
        format!("experiment = \"gronwall\"\ntrials = 30\nn_list = [10]\n[ensemble]\n{block}\n[knobs]\nt_grid = [0.5, 2.0]"),
        format!("experiment = \"gronwall\"\ntrials = 30\nn_list = [10]\n[ensemble]\nlaw = \"rademacher\"\n{block}\n[knobs]\nflow = \"flow2\""),
        format!("experiment = \"locallaw\"\ntrials = 10\nn_list = [20]\n[knobs]\nz_grid = [[0.0, 1.0]]"),
        format!("experiment = \"edge-bound\"\ntrials = 40\nn_list = [20, 40]"),
    ];
    for text in &cases {
        let cfg = config(text, dir.path());
        let out = run(&cfg).unwrap();
        assert!(!out.rows.is_empty(), "{text}");
        assert!(out.rows.iter().all(|r| r.value.is_finite() || r.stat == "alpha_fit"), "{text}");
        assert!(out.csv_path.exists());
    }
}

#[test]
fn k3_verdicts_only_when_resolved() {
    let text = "experiment = \"k3k4\"\ntrials = 10\nn_list = [10, 12]\n[ensemble]\nlaw = \"rademacher\"\nprofile = { family = \"block\", blocks = 2, within = 1.5, between = 0.5 }";
    let rows = execute(&RunConfig::from_toml(text).unwrap()).unwrap();
    // κ₃ = 0: K₃ vanishes identically and is reported against zero.
    let zero: Vec<&ResultRow> = rows.iter().filter(|r| r.stat == "k3_sigma_from_zero").collect();
    assert_eq!(zero.len(), 2);
    assert!(zero.iter().all(|r| r.value == 0.0 && r.passed() == Some(true)));
    assert!(rows.iter().all(|r| r.stat != "k3_scaled_ratio"));
    for r in rows.iter().filter(|r| r.stat == "k4_scaled_ratio") {
        let resolved = r.extra.contains("resolved=true");
        assert_eq!(r.passed().is_some(), resolved);
    }
}

#[test]
fn tw_table_writes_file_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("experiment = \"tw-table\"", dir.path());
    cfg.knobs.tw_cache = Some(dir.path().join("cache"));
    let out = run(&cfg).unwrap();
    assert!(out.all_pass());
    assert!(dir.path().join("tw_table.csv").exists());
    assert!(dir.path().join("cache").join(twlab::tracy_widom::CACHE_FILE).exists());
    let mean1 = out.rows.iter().find(|r| r.stat == "mean_beta1").unwrap().value;
    assert!((mean1 + 1.2065).abs() < 1e-3);
    // A second run reuses nothing it cannot certify.
    assert!(run(&cfg).unwrap().all_pass());
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&config("experiment = \"verify\"", dir.path())).unwrap();
    assert!(out.rows.len() > 20);
    let failing: Vec<&str> = out.rows.iter().filter(|r| r.passed() != Some(true)).map(|r| r.stat.as_str()).collect();
    assert!(failing.is_empty(), "{failing:?}");
}

#[test]
fn per_dimension_trial_counts() {
    let text = "experiment = \"edge-bound\"\ntrials = 30\ntrials_by_n = [[20, 50]]\nn_list = [20, 40]";
    let cfg = RunConfig::from_toml(text).unwrap();
    assert_eq!((cfg.trials_for(20), cfg.trials_for(40)), (50, 30));
    let rows = execute(&cfg).unwrap();
    let m = |n: usize| rows.iter().find(|r| r.stat == "im_m" && r.n == Some(n)).unwrap().trials;
    assert_eq!((m(20), m(40)), (Some(50), Some(30)));
    let bad = RunConfig::from_toml("experiment = \"edge-bound\"\ntrials_by_n = [[20, 0]]").unwrap();
    assert!(bad.validate().is_err());
}

#[test]
fn spectral_parameter_helpers() {
    let z = default_edge_z(100);
    assert_eq!(z.re, 2.0);
    assert!((z.im - 100f64.powf(-0.8)).abs() < 1e-15);
    let c = edge_corner_z(100, 0.05);
    assert!((c.re - 2.0 - 100f64.powf(-2.0 / 3.0 + 0.05)).abs() < 1e-15);
    assert!((c.im - 100f64.powf(-2.0 / 3.0 - 0.05)).abs() < 1e-15);
}
