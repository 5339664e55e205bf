use twlab::error::LabError;
use twlab::mc::{parallel_mc, Stats};
use twlab::rng::CounterRng;

#[test]
fn uniform_mean_within_four_standard_errors() {
    let out = parallel_mc(1_000_000, 99, 2, |_, seed| Ok(CounterRng::new(seed).open01())).unwrap();
    let s = out.stats();
    assert_eq!(s.count, 1_000_000);
    assert!((s.mean - 0.5).abs() < 4.0 * s.se(), "{} ± {}", s.mean, s.se());
    assert!((s.variance().unwrap() - 1.0 / 12.0).abs() < 1e-3);
}

#[test]
fn single_trial_has_no_stderr() {
    let out = parallel_mc(1, 5, 1, |_, _| Ok(3.0)).unwrap();
    assert_eq!(out.stats().stderr(), None);
    assert!(out.stats().se().is_nan());
}

#[test]
fn zero_trials_rejected() {
    assert!(matches!(parallel_mc(0, 1, 1, |_, _| Ok(0.0)), Err(LabError::Config(_))));
}

#[test]
fn failures_are_isolated() {
    let out = parallel_mc(50, 3, 3, |k, _| {
        if k == 7 {
            panic!("boom");
        }
        if k == 11 {
            return Err(LabError::NumericFailure("bad".into()));
        }
        Ok(k as f64)
    })
    .unwrap();
    assert_eq!(out.completed(), 48);
    let idx: Vec<u64> = out.failures.iter().map(|f| f.index).collect();
    assert_eq!(idx, vec![7, 11]);
    assert!(out.failures[0].message.contains("boom"));
    assert!(out.results[7].is_none() && out.results[8] == Some(8.0));
}

#[test]
fn worker_count_does_not_change_bits() {
    let task = |_: u64, seed: u64| {
        let mut r = CounterRng::new(seed);
        Ok((0..10).map(|_| r.open01().ln()).sum::<f64>())
    };
    let a = parallel_mc(4097, 8, 1, task).unwrap().stats();
    let b = parallel_mc(4097, 8, 4, task).unwrap().stats();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.m2.to_bits(), b.m2.to_bits());
}

#[test]
fn merge_is_consistent_with_direct_summary() {
    let xs: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
    let whole = Stats::from_slice(&xs);
    let split = Stats::merge(Stats::from_slice(&xs[..73]), Stats::from_slice(&xs[73..]));
    assert!((whole.mean - split.mean).abs() < 1e-14);
    assert!((whole.m2 - split.m2).abs() < 1e-12);
}
