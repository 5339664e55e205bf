//! Deterministic invariant suites: profile algebra, Ward identity, the
//! semicircle self-consistent equation, the resolvent differentiation rule,
//! and the two Tracy–Widom evaluation routes.

use num_complex::Complex64;

use crate::ensembles::{Beta, EnsembleSpec, EntryLaw, HermitianMatrix};
use crate::error::Result;
use crate::flow_lab::{diff_rule_check, diff_rule_residual};
use crate::profile::{ProfileSpec, VarianceProfile};
use crate::resolvent::{eigen_decompose, ward_check};
use crate::rng::{derive_seed, CounterRng};
use crate::semicircle::m_sc;
use crate::tracy_widom::{fredholm_mean, tw_cdf_fredholm, TwDistribution};

/// One named invariant: the observed worst case against its threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(suite: &'static str, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { suite, name: name.into(), value, threshold, pass: value <= threshold }
    }

    fn at_least(suite: &'static str, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { suite, name: name.into(), value, threshold, pass: value >= threshold }
    }
}

pub const WARD_N: usize = 50;
pub const WARD_PAIRS: usize = 50;
pub const POWER_KMAX: usize = 60;

fn uniform(rng: &mut CounterRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.open01()
}

/// Profiles covering the three shipped families.
pub fn reference_profiles() -> Vec<ProfileSpec> {
    vec![
        ProfileSpec::Flat,
        ProfileSpec::Block { blocks: 2, within: 1.5, between: 0.5 },
        ProfileSpec::Block { blocks: 3, within: 2.0, between: 0.5 },
        ProfileSpec::BandedFloor { bandwidth: 6, floor: 0.2 },
    ]
}

/// Doubly stochastic construction and the T = S − Π power suite up to k = 60.
pub fn profile_suite(n: usize) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for spec in reference_profiles() {
        let s = spec.build(n)?;
        let label = spec.label();
        out.push(Check::at_most("profile", format!("{label}:column_residual"), s.column_residual(), 1e-12));
        let centered = s.centered()?;
        let suite = centered.power_suite(&s, POWER_KMAX)?;
        let worst = |f: &dyn Fn(&crate::profile::PowerCheck) -> f64| suite.iter().map(f).fold(0.0, f64::max);
        out.push(Check::at_most("profile", format!("{label}:row_sums"), worst(&|c| c.max_row_sum), 1e-9));
        let norm_excess = worst(&|c| c.op_norm - c.op_bound);
        out.push(Check::at_most("profile", format!("{label}:op_norm_excess"), norm_excess, 1e-12));
        let failed = suite.iter().filter(|c| !c.ok).count() as f64;
        out.push(Check::at_most("profile", format!("{label}:power_failures"), failed, 0.0));
    }
    Ok(out)
}

/// Σ_j |G_ij|² = Im G_ii / η on `WARD_PAIRS` random (sample, z) pairs at
/// N = 50 across GOE, GUE and a block profile with skewed entries.
pub fn ward_suite(seed: u64) -> Result<Vec<Check>> {
    let n = WARD_N;
    let block = ProfileSpec::Block { blocks: 2, within: 1.5, between: 0.5 }.build(n)?;
    let specs = [
        EnsembleSpec::goe(n)?,
        EnsembleSpec::gue(n)?,
        EnsembleSpec::new(Beta::Real, block, EntryLaw::SkewBernoulli { p: 0.2 }),
    ];
    let nf = n as f64;
    let rows: Vec<usize> = (0..n).collect();
    let mut worst = 0.0f64;
    for k in 0..WARD_PAIRS {
        let stream = derive_seed(seed, k as u64);
        let mut rng = CounterRng::new(derive_seed(stream, 1));
        let spec = &specs[k % specs.len()];
        let sample = eigen_decompose(&spec.sample(derive_seed(stream, 0)), true)?;
        let e = uniform(&mut rng, -3.0, 3.0);
        let eta = uniform(&mut rng, nf.powf(-0.95).ln(), 0.0).exp();
        worst = worst.max(ward_check(&sample, Complex64::new(e, eta), &rows)?);
    }
    Ok(vec![Check::at_most("ward", "max_relative_residual", worst, 1e-9)])
}

/// |m² + z m + 1| and Im m > 0 on a 40 × 25 grid covering |E| ≤ 5,
/// 10⁻⁴ ≤ η ≤ 10.
pub fn semicircle_suite() -> Result<Vec<Check>> {
    let mut residual = 0.0f64;
    let mut min_im = f64::INFINITY;
    for i in 0..40 {
        let e = -5.0 + 10.0 * i as f64 / 39.0;
        for k in 0..25 {
            let eta = 10f64.powf(-4.0 + 5.0 * k as f64 / 24.0);
            let z = Complex64::new(e, eta);
            let m = m_sc(z)?;
            residual = residual.max((m * m + z * m + 1.0).norm());
            min_im = min_im.min(m.im);
        }
    }
    Ok(vec![
        Check::at_most("semicircle", "self_consistent_residual", residual, 1e-13),
        Check::at_least("semicircle", "min_im_m", min_im, f64::MIN_POSITIVE),
    ])
}

/// The resolvent differentiation rule at N = 5..=8 for off-diagonal and
/// diagonal perturbations, plus the control that dropping the diagonal
/// factor 1/2 is detected.
pub fn diff_rule_suite(seed: u64) -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    let mut control = f64::INFINITY;
    for n in 5..=8usize {
        for beta in [Beta::Real, Beta::Complex] {
            let stream = derive_seed(seed, (n * 2 + beta.as_int() as usize) as u64);
            let spec = EnsembleSpec::gaussian_invariant(beta, n)?;
            let h = spec.sample(derive_seed(stream, 0));
            let mut rng = CounterRng::new(derive_seed(stream, 1));
            let z = Complex64::new(uniform(&mut rng, -2.5, 2.5), uniform(&mut rng, 0.05, 1.0));
            for _ in 0..6 {
                let pick = |rng: &mut CounterRng| ((rng.open01() * n as f64) as usize).min(n - 1);
                let (a, b, i, j) = (pick(&mut rng), pick(&mut rng), pick(&mut rng), pick(&mut rng));
                if beta == Beta::Complex && a != b {
                    continue;
                }
                worst = worst.max(diff_rule_check(&h, z, (a, b), (i, j))?);
                worst = worst.max(diff_rule_check(&h, z, (a, a), (i, j))?);
                if beta == Beta::Real {
                    worst = worst.max(diff_rule_check(&h, z, (a, (a + 1) % n), (i, j))?);
                }
            }
            if beta == Beta::Real {
                control = control.min(diff_rule_residual(&h, z, (0, 0), (0, 0), false)?);
            }
        }
    }
    let zero = HermitianMatrix::zeros(Beta::Real, 4);
    let at_zero = diff_rule_check(&zero, Complex64::new(0.0, 1.0), (0, 1), (0, 1))?;
    Ok(vec![
        Check::at_most("diff_rule", "max_residual", worst, 1e-6),
        Check::at_most("diff_rule", "zero_matrix_residual", at_zero, 1e-6),
        Check::at_least("diff_rule", "missing_diagonal_factor_detected", control, 1e-2),
    ])
}

/// Painlevé and Fredholm routes against each other, Nyström convergence,
/// table accuracy, and the means of both laws.
pub fn tracy_widom_suite() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for beta in [1u8, 2] {
        let tw = TwDistribution::new(beta)?;
        let mut diff = 0.0f64;
        let mut conv = 0.0f64;
        for k in 0..=240 {
            let s = -8.0 + 0.05 * k as f64;
            let fred = tw_cdf_fredholm(beta, s, 60)?;
            diff = diff.max((tw.cdf(s) - fred).abs());
            if k % 20 == 0 {
                conv = conv.max((tw_cdf_fredholm(beta, s, 30)? - fred).abs());
            }
        }
        out.push(Check::at_most("tracy_widom", format!("beta{beta}:painleve_vs_fredholm"), diff, 1e-6));
        out.push(Check::at_most("tracy_widom", format!("beta{beta}:nystrom_m30_vs_m60"), conv, 1e-9));
        out.push(Check::at_most("tracy_widom", format!("beta{beta}:table_accuracy"), tw.accuracy(), 1e-7));
        let reference = fredholm_mean(beta, 60)?;
        out.push(Check::at_most(
            "tracy_widom",
            format!("beta{beta}:mean_vs_fredholm"),
            (tw.mean() - reference).abs(),
            1e-3,
        ));
        let published = if beta == 1 { -1.2065 } else { -1.7711 };
        out.push(Check::at_most(
            "tracy_widom",
            format!("beta{beta}:fredholm_mean_vs_published"),
            (reference - published).abs(),
            1e-3,
        ));
    }
    Ok(out)
}

/// Every exact-identity suite that runs in seconds.
pub fn identity_suites(seed: u64) -> Result<Vec<Check>> {
    let mut out = profile_suite(60)?;
    out.extend(ward_suite(derive_seed(seed, 1))?);
    out.extend(semicircle_suite()?);
    out.extend(diff_rule_suite(derive_seed(seed, 2))?);
    Ok(out)
}

/// Every reference family has a positive spectral gap at dimension n.
pub fn gap_suite(n: usize) -> Result<Vec<Check>> {
    reference_profiles()
        .into_iter()
        .map(|spec| {
            let s: VarianceProfile = spec.build(n)?;
            let gap = s.centered()?.raw_gap();
            Ok(Check::at_least("profile", format!("{}:spectral_gap", spec.label()), gap, 1e-6))
        })
        .collect()
}
