use num_complex::Complex64;
use proptest::prelude::*;
use twlab::ensembles::{Beta, EnsembleSpec, EntryLaw};
use twlab::profile::ProfileSpec;
use twlab::resolvent::{
    default_probes, delocalization_check, eigen_decompose, generalized_ward_ratios, green_by_solve, green_function,
    im_mn_edge_expectation, locallaw_deviation, reconstruction_error, rigidity_check, ward_check,
};
use twlab::semicircle::{m_sc, EdgeDomainSpec};
use twlab::LabError;

fn skew_block(n: usize) -> EnsembleSpec {
    let p = ProfileSpec::Block { blocks: 2, within: 1.5, between: 0.5 }.build(n).unwrap();
    EnsembleSpec::new(Beta::Real, p, EntryLaw::SkewBernoulli { p: 0.2 })
}

#[test]
fn decomposition_reproduces_the_matrix() {
    for spec in [EnsembleSpec::goe(50).unwrap(), EnsembleSpec::gue(50).unwrap(), skew_block(50)] {
        let h = spec.sample(11);
        let s = eigen_decompose(&h, true).unwrap();
        let sum: f64 = s.eigenvalues.iter().sum();
        assert!((sum - h.trace()).abs() < 1e-10);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(reconstruction_error(&h, &s).unwrap() <= 1e-8 * h.max_abs());
        assert!(s.eigenvectors.as_ref().unwrap().orthonormality_residual() <= 1e-9);
        let plain = eigen_decompose(&h, false).unwrap();
        for (a, b) in plain.eigenvalues.iter().zip(&s.eigenvalues) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn spectral_green_function_matches_linear_solve() {
    for spec in [EnsembleSpec::goe(40).unwrap(), EnsembleSpec::gue(40).unwrap()] {
        let h = spec.sample(3);
        let s = eigen_decompose(&h, true).unwrap();
        let zs = [Complex64::new(0.3, 0.02), Complex64::new(-1.7, 0.5), Complex64::new(2.1, 0.004)];
        let probes = default_probes(40, 30, 1);
        let grid = green_function(&s, &zs, &probes).unwrap();
        for (k, &z) in zs.iter().enumerate() {
            let g = green_by_solve(&h, z).unwrap();
            assert!((grid.m_n[k] - g.trace() / 40.0).norm() < 1e-9);
            for (p, &(i, j)) in probes.iter().enumerate() {
                assert!((grid.probe_values[k][p] - g[(i, j)]).norm() < 1e-9);
            }
            let gm = s.green_matrix(z).unwrap();
            assert!((gm - &g).iter().all(|c| c.norm() < 1e-9));
            let g2 = s.green_power(z, 2).unwrap();
            assert!((g2 - &g * &g).iter().all(|c| c.norm() < 1e-8));
        }
    }
    assert!(matches!(
        green_function(&eigen_decompose(&EnsembleSpec::goe(4).unwrap().sample(0), false).unwrap(), &[Complex64::new(0.0, -1.0)], &[]),
        Err(LabError::WrongHalfPlane { .. })
    ));
}

#[test]
fn large_eta_matches_semicircle() {
    let s = eigen_decompose(&EnsembleSpec::goe(200).unwrap().sample(4), false).unwrap();
    for e in [-1.0, 0.0, 2.0] {
        let z = Complex64::new(e, 10.0);
        assert!((s.m_n(z) - m_sc(z).unwrap()).norm() <= 0.05);
    }
}

#[test]
fn generalized_ward_bound() {
    let n = 100;
    let s = eigen_decompose(&EnsembleSpec::goe(n).unwrap().sample(5), true).unwrap();
    let pairs: Vec<(usize, usize)> = (0..20).map(|k| ((7 * k) % n, (13 * k + 3) % n)).collect();
    let z = Complex64::new(2.0, (n as f64).powf(-0.8));
    for r in generalized_ward_ratios(&s, z, &pairs).unwrap() {
        assert!(r <= (n as f64).powf(0.1), "{r}");
    }
    let rows: Vec<usize> = (0..n).collect();
    assert!(ward_check(&s, z, &rows).unwrap() < 1e-9);
}

#[test]
fn local_law_ratios() {
    let n = 200;
    let spec = EnsembleSpec::goe(n).unwrap();
    let zs = [Complex64::new(0.0, 0.1), Complex64::new(0.0, 10.0)];
    let stats = locallaw_deviation(&spec, &zs, 100, 9, 2, 0.05).unwrap();
    let limit = (n as f64).powf(0.15);
    assert!(stats[0].trace_quantile(0.99) <= limit);
    assert!(stats[1].trace_quantile(0.99) <= limit);
    assert!(stats[1].entry_quantile(0.99) <= limit);
    assert_eq!(stats[0].entry_ratios.len(), 100);
    assert!(matches!(
        locallaw_deviation(&EnsembleSpec::goe(5).unwrap(), &zs, 10, 0, 1, 0.05),
        Err(LabError::InvalidDimension(5, 10))
    ));
    assert!(matches!(
        locallaw_deviation(&spec, &[Complex64::new(0.0, 1e-4)], 10, 0, 1, 0.05),
        Err(LabError::DomainViolation(_))
    ));
}

#[test]
fn rigidity_and_delocalization() {
    let n = 400;
    let nf = n as f64;
    let s = eigen_decompose(&EnsembleSpec::goe(n).unwrap().sample(12), true).unwrap();
    let limit = nf.powf(0.25);
    let rig = rigidity_check(&s).unwrap();
    assert_eq!(rig.len(), n);
    // Individual indices may exceed N^{1/4} at this N; the bulk of them must not.
    let over = rig.iter().filter(|&&r| r > limit).count();
    assert!(over * 10 <= n, "{over} of {n} above {limit}");
    assert!(twlab::resolvent::quantile(&rig, 0.5) <= limit);
    // N max|u_j(i)|² behaves like the maximum of N² χ²₁ variables, 2 ln N² to leading order.
    let deloc = delocalization_check(&s).unwrap();
    assert!(deloc >= 1.0 && deloc <= 2.0 * (nf * nf).ln() + 10.0, "{deloc}");
}

#[test]
fn edge_expectation_guards_the_domain() {
    let n = 200;
    let spec = EnsembleSpec::goe(n).unwrap();
    let dom = EdgeDomainSpec::new(n, 0.05);
    let bad = Complex64::new(2.0, (n as f64).powf(-0.5));
    assert!(matches!(im_mn_edge_expectation(&spec, bad, &dom, 10, 0, 1), Err(LabError::DomainViolation(_))));
    let z = Complex64::new(2.0, (n as f64).powf(-0.8));
    let r = im_mn_edge_expectation(&spec, z, &dom, 50, 0, 1).unwrap();
    assert!(r.mean() > 0.0 && r.failures == 0);
    assert!((r.scaled() - r.mean() * (n as f64).powf(1.0 / 3.0)).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ward_identity_and_positivity(seed in any::<u64>(), e in -4.0f64..4.0, log_eta in -3.0f64..1.0, complex in any::<bool>()) {
        let n = 20;
        let spec = if complex { EnsembleSpec::gue(n).unwrap() } else { skew_block(n) };
        let s = eigen_decompose(&spec.sample(seed), true).unwrap();
        let z = Complex64::new(e, 10f64.powf(log_eta));
        let rows: Vec<usize> = (0..n).collect();
        prop_assert!(ward_check(&s, z, &rows).unwrap() <= 1e-9);
        prop_assert!(s.m_n(z).im > 0.0);
    }
}
