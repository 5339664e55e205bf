//! Deterministic parallel Monte Carlo.
//!
//! Trials are addressed by index; trial `k` receives the seed
//! `trial_seed(master, k)`. Results are collected in index order and every
//! statistic is reduced with a fixed pairwise tree, so merged numbers do not
//! depend on the number of workers or on scheduling.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::rng::trial_seed;

/// Count, mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Stats {
    pub fn single(x: f64) -> Self {
        Self { count: 1, mean: x, m2: 0.0 }
    }

    /// Chan et al. combination of two partial summaries.
    pub fn merge(a: Stats, b: Stats) -> Stats {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let n = a.count + b.count;
        let (na, nb) = (a.count as f64, b.count as f64);
        let d = b.mean - a.mean;
        let mean = a.mean + d * nb / n as f64;
        let m2 = a.m2 + b.m2 + d * d * na * nb / n as f64;
        Stats { count: n, mean, m2 }
    }

    /// Pairwise-tree reduction in slice order.
    pub fn from_slice(xs: &[f64]) -> Stats {
        match xs.len() {
            0 => Stats::default(),
            1 => Stats::single(xs[0]),
            n => {
                let (l, r) = xs.split_at(n / 2);
                Stats::merge(Stats::from_slice(l), Stats::from_slice(r))
            }
        }
    }

    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }

    pub fn std_dev(&self) -> Option<f64> {
        self.variance().map(f64::sqrt)
    }

    /// Standard error of the mean; `None` with fewer than two samples.
    pub fn stderr(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.count as f64).sqrt())
    }

    /// Standard error, or NaN when not applicable.
    pub fn se(&self) -> f64 {
        self.stderr().unwrap_or(f64::NAN)
    }
}

/// Per-trial outcomes in index order.
#[derive(Clone, Debug)]
pub struct McOutcome<T> {
    pub results: Vec<Option<T>>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialFailure {
    pub index: u64,
    pub seed: u64,
    pub message: String,
}

impl<T> McOutcome<T> {
    pub fn successes(&self) -> impl Iterator<Item = &T> {
        self.results.iter().flatten()
    }

    pub fn completed(&self) -> usize {
        self.results.iter().filter(|r| r.is_some()).count()
    }
}

impl McOutcome<Vec<f64>> {
    /// Column-wise statistics over the successful trials.
    pub fn column_stats(&self) -> Vec<Stats> {
        column_stats(self.successes())
    }
}

impl McOutcome<f64> {
    pub fn stats(&self) -> Stats {
        let xs: Vec<f64> = self.successes().copied().collect();
        Stats::from_slice(&xs)
    }
}

pub fn column_stats<'a, I: Iterator<Item = &'a Vec<f64>>>(rows: I) -> Vec<Stats> {
    let rows: Vec<&Vec<f64>> = rows.collect();
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    (0..width)
        .map(|c| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            Stats::from_slice(&col)
        })
        .collect()
}

/// Run `task(index, seed)` for every trial on a pool of `workers` threads.
/// A trial that returns an error or panics is recorded as a failure and
/// leaves the other trials untouched.
pub fn parallel_mc<T, F>(trials: usize, master_seed: u64, workers: usize, task: F) -> Result<McOutcome<T>>
where
    T: Send,
    F: Fn(u64, u64) -> Result<T> + Sync,
{
    if trials == 0 {
        return Err(LabError::Config("trials must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    let run = |k: u64| -> std::result::Result<T, TrialFailure> {
        let seed = trial_seed(master_seed, k);
        let out = catch_unwind(AssertUnwindSafe(|| task(k, seed)));
        let message = match out {
            Ok(Ok(v)) => return Ok(v),
            Ok(Err(e)) => e.to_string(),
            Err(p) => p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into()),
        };
        Err(TrialFailure { index: k, seed, message })
    };
    let raw: Vec<std::result::Result<T, TrialFailure>> =
        pool.install(|| (0..trials as u64).into_par_iter().map(run).collect());
    let mut results = Vec::with_capacity(trials);
    let mut failures = Vec::new();
    for r in raw {
        match r {
            Ok(v) => results.push(Some(v)),
            Err(f) => {
                results.push(None);
                failures.push(f);
            }
        }
    }
    Ok(McOutcome { results, failures })
}
