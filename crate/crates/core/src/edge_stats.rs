//! Largest-eigenvalue statistics near the upper spectral edge.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::EnsembleSpec;
use crate::error::{LabError, Result};
use crate::mc::{parallel_mc, Stats, TrialFailure};
use crate::resolvent::quantile;
use crate::rng::CounterRng;
use crate::special::quadrature::GaussLegendre;
use crate::special::Jet;
use crate::tracy_widom::TwDistribution;

pub const DEFAULT_R0: f64 = -3.5;
pub const DKW_95: f64 = 1.36;

/// Where the edge is placed before rescaling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    Fixed2,
    /// √(4 − 2/N), the finite-N GOE edge.
    GoeShift,
    Custom(f64),
}

impl Centering {
    pub fn edge(&self, n: usize) -> f64 {
        match *self {
            Centering::Fixed2 => 2.0,
            Centering::GoeShift => (4.0 - 2.0 / n as f64).sqrt(),
            Centering::Custom(e) => e,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Centering::Fixed2 => "fixed_2".into(),
            Centering::GoeShift => "goe_shift".into(),
            Centering::Custom(e) => format!("custom_{e}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fixed_2" => Ok(Centering::Fixed2),
            "goe_shift" => Ok(Centering::GoeShift),
            other => other
                .strip_prefix("custom_")
                .and_then(|v| v.parse().ok())
                .map(Centering::Custom)
                .ok_or_else(|| LabError::Config(format!("unknown centering '{other}'"))),
        }
    }
}

/// N^{2/3}(λ − E₊) for every sample.
pub fn rescale_lambda_max(samples: &[f64], n: usize, centering: Centering) -> Vec<f64> {
    let scale = (n as f64).powf(2.0 / 3.0);
    let edge = centering.edge(n);
    samples.iter().map(|&l| scale * (l - edge)).collect()
}

/// Largest eigenvalues of `trials` independent samples of one ensemble.
#[derive(Clone, Debug)]
pub struct EdgeExperiment {
    pub n: usize,
    pub beta: u8,
    pub lambda_max: Vec<f64>,
    pub failures: Vec<TrialFailure>,
}

impl EdgeExperiment {
    pub fn run(spec: &EnsembleSpec, trials: usize, master_seed: u64, workers: usize) -> Result<Self> {
        let out = parallel_mc(trials, master_seed, workers, |_, seed| spec.sample(seed).largest_eigenvalue())?;
        let lambda_max = out.successes().copied().collect();
        Ok(Self { n: spec.n(), beta: spec.beta.as_int(), lambda_max, failures: out.failures })
    }

    pub fn rescaled(&self, centering: Centering) -> Vec<f64> {
        rescale_lambda_max(&self.lambda_max, self.n, centering)
    }
}

pub fn dkw_band(m: usize) -> f64 {
    DKW_95 / (m as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupDistance {
    pub d: f64,
    pub dkw: f64,
    /// Abscissa where the supremum is attained.
    pub at: f64,
    pub m: usize,
}

/// sup_{r > r0} |P̂(X < r) − F(r)|. For continuous F the supremum is
/// attained at r0 or at a jump of the empirical CDF, from either side.
pub fn sup_distance(rescaled: &[f64], tw: &TwDistribution, r0: f64) -> Result<SupDistance> {
    if rescaled.len() < 100 {
        return Err(LabError::InsufficientSamples(format!(
            "sup distance needs at least 100 samples, got {}",
            rescaled.len()
        )));
    }
    if rescaled.iter().any(|x| !x.is_finite()) {
        return Err(LabError::NumericFailure("non-finite rescaled sample".into()));
    }
    let mut xs = rescaled.to_vec();
    xs.sort_by(f64::total_cmp);
    let (d, at) = sorted_sup_distance(&xs, |r| tw.cdf(r), r0);
    Ok(SupDistance { d, dkw: dkw_band(xs.len()), at, m: xs.len() })
}

fn sorted_sup_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F, r0: f64) -> (f64, f64) {
    let m = xs.len() as f64;
    let start = xs.partition_point(|&x| x <= r0);
    // Just above r0 the empirical CDF counts every sample ≤ r0.
    let mut best = ((start as f64 / m - cdf(r0)).abs(), r0);
    let mut i = start;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let f = cdf(x);
        // P̂(X < x) = i/m; P̂(X < x⁺) = j/m.
        let gap = (i as f64 / m - f).abs().max((j as f64 / m - f).abs());
        if gap > best.0 {
            best = (gap, x);
        }
        i = j;
    }
    best
}

/// Paired bootstrap of D(a) − D(b) where a[k] and b[k] come from the same
/// trial; returns (point estimate, bootstrap standard error).
pub fn bootstrap_distance_difference(
    a: &[f64],
    b: &[f64],
    tw: &TwDistribution,
    r0: f64,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(LabError::Config("paired samples must have equal length".into()));
    }
    let point = sup_distance(a, tw, r0)?.d - sup_distance(b, tw, r0)?.d;
    let mut rng = CounterRng::new(seed);
    let m = a.len();
    let mut diffs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
        let mut ra: Vec<f64> = idx.iter().map(|&k| a[k]).collect();
        let mut rb: Vec<f64> = idx.iter().map(|&k| b[k]).collect();
        ra.sort_by(f64::total_cmp);
        rb.sort_by(f64::total_cmp);
        let da = sorted_sup_distance(&ra, |r| tw.cdf(r), r0).0;
        let db = sorted_sup_distance(&rb, |r| tw.cdf(r), r0).0;
        diffs.push(da - db);
    }
    Ok((point, Stats::from_slice(&diffs).std_dev().unwrap_or(f64::NAN)))
}

/// Least-squares fit of log D = log c − α log N.
pub fn fit_power_law(ns: &[f64], ds: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
    if ns.len() != ds.len() || ns.len() < 2 {
        return Err(LabError::Config("power-law fit needs at least two (N, D) pairs".into()));
    }
    if ds.iter().chain(ns).any(|&v| !(v > 0.0)) {
        return Err(LabError::NumericFailure("power-law fit needs positive data".into()));
    }
    let x: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = ds.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let log_c = my - slope * mx;
    let residuals = x.iter().zip(&y).map(|(a, b)| b - (log_c + slope * a)).collect();
    Ok((-slope, log_c, residuals))
}

#[derive(Clone, Debug)]
pub struct RateFit {
    pub ns: Vec<usize>,
    pub d: Vec<f64>,
    pub dkw: Vec<f64>,
    pub alpha: f64,
    pub log_c: f64,
    pub residuals: Vec<f64>,
    pub ci: (f64, f64),
}

fn floor_corrected(d: f64, dkw: f64) -> f64 {
    (d * d - dkw * dkw).max(1e-300).sqrt()
}

/// Fit D(N) ~ c N^{−α} after removing the DKW floor in quadrature, with a
/// percentile bootstrap interval for α.
pub fn rate_fit(
    samples: &[(usize, Vec<f64>)],
    tw: &TwDistribution,
    r0: f64,
    reps: usize,
    seed: u64,
) -> Result<RateFit> {
    if samples.len() < 3 {
        return Err(LabError::Config("rate fit needs at least three values of N".into()));
    }
    let ns: Vec<usize> = samples.iter().map(|(n, _)| *n).collect();
    let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let mut d = Vec::new();
    let mut dkw = Vec::new();
    for (n, xs) in samples {
        let sd = sup_distance(xs, tw, r0)?;
        if sd.d <= 2.0 * sd.dkw {
            return Err(LabError::InconclusiveBudget(format!(
                "N = {n}: D = {:.4} is within twice the sampling band {:.4}",
                sd.d, sd.dkw
            )));
        }
        d.push(sd.d);
        dkw.push(sd.dkw);
    }
    let corrected: Vec<f64> = d.iter().zip(&dkw).map(|(&a, &b)| floor_corrected(a, b)).collect();
    let (alpha, log_c, residuals) = fit_power_law(&nf, &corrected)?;
    let mut rng = CounterRng::new(seed);
    let mut alphas = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut ds = Vec::with_capacity(samples.len());
        for (k, (_, xs)) in samples.iter().enumerate() {
            let m = xs.len();
            let mut r: Vec<f64> = (0..m).map(|_| xs[rng.random_range(0..m)]).collect();
            r.sort_by(f64::total_cmp);
            let dk = sorted_sup_distance(&r, |x| tw.cdf(x), r0).0;
            ds.push(floor_corrected(dk, dkw[k]));
        }
        alphas.push(fit_power_law(&nf, &ds)?.0);
    }
    let ci = if alphas.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (quantile(&alphas, 0.025), quantile(&alphas, 0.975))
    };
    Ok(RateFit { ns, d, dkw, alpha, log_c, residuals, ci })
}

/// N^{−1/3+ω} + 1.36/√M.
pub fn rate_bound(n: usize, m: usize, omega: f64) -> f64 {
    (n as f64).powf(-1.0 / 3.0 + omega) + dkw_band(m)
}

/// exp(−1/t) for t > 0, zero otherwise, as a jet in t.
fn bump_jet(t: Jet) -> Jet {
    if t.value() <= 0.0 {
        Jet::constant(0.0)
    } else {
        (-t.recip()).exp()
    }
}

/// C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1.
fn smoothstep_jet(t: Jet) -> Jet {
    let a = bump_jet(t);
    let b = bump_jet(1.0 - t);
    if b.value() == 0.0 {
        return Jet::constant(1.0);
    }
    if a.value() == 0.0 {
        return Jet::constant(0.0);
    }
    a / (a + b)
}

/// Cutoff equal to 1 on |x| ≤ 1/9 and 0 on |x| ≥ 2/9, non-increasing in |x|,
/// with its derivatives in x up to order 4.
pub fn cutoff_jet(x: f64) -> Jet {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let xj = Jet::variable(x);
    // t = 9(2/9 − |x|) = 2 − 9·sign·x
    let t = 2.0 - xj.scale(9.0 * sign);
    smoothstep_jet(t)
}

pub fn cutoff_f(x: f64) -> f64 {
    cutoff_jet(x).value()
}

pub fn cutoff_derivatives(x: f64) -> [f64; 5] {
    cutoff_jet(x).derivatives()
}

/// The Green-function observable bracketing P(λ_N < E).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SandwichObservable {
    pub n: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Replace the cutoff by the constant 1 (test mode).
    pub degenerate: bool,
}

impl SandwichObservable {
    pub fn new(n: usize, epsilon: f64, eta: f64, gamma: f64) -> Result<Self> {
        let max_eta = (n as f64).powf(-2.0 / 3.0 - epsilon);
        if !(eta > 0.0 && eta <= max_eta * (1.0 + 1e-12)) {
            return Err(LabError::DomainViolation(format!(
                "eta = {eta:e} outside (0, N^(-2/3-eps)] = (0, {max_eta:e}]"
            )));
        }
        Ok(Self { n, epsilon, eta, gamma, degenerate: false })
    }

    /// Defaults ε = 0.05, Γ = 3, η = N^{-2}.
    pub fn with_defaults(n: usize) -> Result<Self> {
        Self::new(n, 0.05, (n as f64).powi(-2), 3.0)
    }

    pub fn e_l(&self) -> f64 {
        2.0 + 4.0 * (self.n as f64).powf(-2.0 / 3.0 + self.epsilon)
    }

    pub fn l(&self) -> f64 {
        (self.n as f64).powf(6.0 * self.epsilon) * self.eta
    }

    pub fn penalty(&self) -> f64 {
        (self.n as f64).powf(-self.gamma)
    }

    pub fn f(&self, x: f64) -> f64 {
        if self.degenerate { 1.0 } else { cutoff_f(x) }
    }

    pub fn check_energy(&self, e: f64) -> Result<()> {
        let w = (self.n as f64).powf(-2.0 / 3.0 + self.epsilon);
        if (e - 2.0).abs() > w * (1.0 + 1e-12) {
            return Err(LabError::DomainViolation(format!("|E - 2| = {:e} exceeds {w:e}", (e - 2.0).abs())));
        }
        Ok(())
    }
}

/// Evenly spaced energies across |E − 2| ≤ N^{−2/3+ε}.
pub fn sandwich_e_grid(n: usize, epsilon: f64, points: usize) -> Vec<f64> {
    let w = (n as f64).powf(-2.0 / 3.0 + epsilon);
    if points == 1 {
        return vec![2.0];
    }
    (0..points).map(|k| 2.0 - w + 2.0 * w * k as f64 / (points - 1) as f64).collect()
}

/// N ∫_a^b Im m_N(y + iη) dy in closed form; the quadrature oracle.
pub fn lorentz_integral_exact(eigs: &[f64], a: f64, b: f64, eta: f64) -> f64 {
    eigs.iter()
        .map(|&l| ((b - l) / eta).atan() - ((a - l) / eta).atan())
        .sum()
}

fn lorentz_panels(eigs: &[f64], a: f64, b: f64, eta: f64) -> Vec<f64> {
    let width = b - a;
    let mut breaks = vec![a, b];
    for k in 1..8 {
        breaks.push(a + width * k as f64 / 8.0);
    }
    for &l in eigs {
        if l < a - width || l > b + width {
            continue;
        }
        let c = l.clamp(a, b);
        let mut h = eta;
        while h < width {
            for p in [c - h, c + h] {
                if p > a && p < b {
                    breaks.push(p);
                }
            }
            h *= 4.0;
        }
        if c > a && c < b {
            breaks.push(c);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks
}

fn lorentz_sum(eigs: &[f64], rule: &GaussLegendre, breaks: &[f64], eta: f64) -> f64 {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        for (y, wt) in rule.mapped(w[0], w[1]) {
            let s: f64 = eigs.iter().map(|&l| eta / ((l - y).powi(2) + eta * eta)).sum();
            total += wt * s;
        }
    }
    total
}

/// N ∫_a^b Im m_N(y + iη) dy by 64-node Gauss–Legendre panels graded
/// geometrically around nearby eigenvalues, accepted only if halving every
/// panel changes the result by at most 1e-8 relative.
pub fn lorentz_integral(eigs: &[f64], a: f64, b: f64, eta: f64) -> Result<f64> {
    if !(b > a) {
        return Ok(0.0);
    }
    let rule = GaussLegendre::cached(64);
    let breaks = lorentz_panels(eigs, a, b, eta);
    let coarse = lorentz_sum(eigs, &rule, &breaks, eta);
    let mut fine_breaks = Vec::with_capacity(2 * breaks.len());
    for w in breaks.windows(2) {
        fine_breaks.push(w[0]);
        fine_breaks.push(0.5 * (w[0] + w[1]));
    }
    fine_breaks.push(b);
    let fine = lorentz_sum(eigs, &rule, &fine_breaks, eta);
    let rel = (fine - coarse).abs() / fine.abs().max(1e-14);
    if rel > 1e-8 {
        return Err(LabError::QuadratureFailure(rel));
    }
    Ok(fine)
}

#[derive(Clone, Debug)]
pub struct SandwichPoint {
    pub e: f64,
    /// P̂(λ_N < E)
    pub prob: Stats,
    /// F(N ∫_{E−l}^{E_L} Im m_N)
    pub lower: Stats,
    /// F(N ∫_{E+l}^{E_L} Im m_N)
    pub upper: Stats,
    /// Paired differences lower − 1{λ<E} and 1{λ<E} − upper.
    pub lower_gap: Stats,
    pub upper_gap: Stats,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct SandwichReport {
    pub points: Vec<SandwichPoint>,
    pub failures: Vec<TrialFailure>,
}

impl SandwichReport {
    pub fn holding(&self) -> usize {
        self.points.iter().filter(|p| p.holds).count()
    }

    pub fn fraction(&self) -> f64 {
        self.holding() as f64 / self.points.len().max(1) as f64
    }
}

/// Monte-Carlo estimate of both sides of the sandwich at every energy; an
/// inequality counts as holding when violated by less than two standard
/// errors of the paired difference.
pub fn sandwich_check(
    spec: &EnsembleSpec,
    energies: &[f64],
    obs: &SandwichObservable,
    trials: usize,
    master_seed: u64,
    workers: usize,
) -> Result<SandwichReport> {
    if obs.n != spec.n() {
        return Err(LabError::InvalidDimension(obs.n, spec.n()));
    }
    for &e in energies {
        obs.check_energy(e)?;
    }
    let (e_l, l, eta) = (obs.e_l(), obs.l(), obs.eta);
    let out = parallel_mc(trials, master_seed, workers, |_, seed| {
        let eigs = spec.sample(seed).eigenvalues()?;
        let top = eigs[eigs.len() - 1];
        let mut row = Vec::with_capacity(3 * energies.len());
        for &e in energies {
            let below = if top < e { 1.0 } else { 0.0 };
            let lo = obs.f(lorentz_integral(&eigs, e - l, e_l, eta)?);
            let up = obs.f(lorentz_integral(&eigs, e + l, e_l, eta)?);
            row.extend([below, lo, up]);
        }
        Ok(row)
    })?;
    let rows: Vec<&Vec<f64>> = out.successes().collect();
    let pen = obs.penalty();
    let points = energies
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let col = |c: usize| -> Vec<f64> { rows.iter().map(|r| r[3 * k + c]).collect() };
            let (p, lo, up) = (col(0), col(1), col(2));
            let lower_gap: Vec<f64> = lo.iter().zip(&p).map(|(a, b)| a - b).collect();
            let upper_gap: Vec<f64> = p.iter().zip(&up).map(|(a, b)| a - b).collect();
            let lower_gap = Stats::from_slice(&lower_gap);
            let upper_gap = Stats::from_slice(&upper_gap);
            let ok = |g: &Stats| g.mean - pen <= 2.0 * g.stderr().unwrap_or(0.0);
            SandwichPoint {
                e,
                prob: Stats::from_slice(&p),
                lower: Stats::from_slice(&lo),
                upper: Stats::from_slice(&up),
                holds: ok(&lower_gap) && ok(&upper_gap),
                lower_gap,
                upper_gap,
            }
        })
        .collect();
    Ok(SandwichReport { points, failures: out.failures })
}
