use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use twlab::ensembles::{Beta, EntryLaw, HermitianMatrix};
use twlab::error::LabError;
use twlab::flow_lab::*;
use twlab::profile::{ProfileSpec, VarianceProfile};
use twlab::resolvent::{eigen_decompose, green_by_solve};

fn block(n: usize) -> VarianceProfile {
    ProfileSpec::Block { blocks: 2, within: 1.5, between: 0.5 }.build(n).unwrap()
}

fn flat(n: usize) -> VarianceProfile {
    ProfileSpec::Flat.build(n).unwrap()
}

fn edge_z(n: usize) -> Complex64 {
    Complex64::new(2.0, (n as f64).powf(-0.8))
}

#[test]
fn contracted_rhs_matches_triple_loop() {
    for n in [4usize, 8, 12] {
        for beta in [Beta::Real, Beta::Complex] {
            let spec = FlowSpec::flow1(beta, block(n));
            let t_mat = spec.t_matrix();
            for (k, t) in [0.1, 0.7, 3.0].into_iter().enumerate() {
                let h = sample_flow(&spec, t, 100 + k as u64).unwrap();
                let sample = eigen_decompose(&h, true).unwrap();
                for z in [edge_z(n), Complex64::new(-0.4, 0.05)] {
                    let fast = flow1_rhs(&sample, &t_mat, beta, z, t).unwrap();
                    let g = green_by_solve(&h, z).unwrap();
                    let slow = flow1_rhs_bruteforce(&g, &t_mat, beta, t);
                    assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "n {n} {beta:?}: {fast} {slow}");
                }
            }
        }
    }
}

#[test]
fn flat_profile_has_zero_rhs() {
    for beta in [Beta::Real, Beta::Complex] {
        let spec = FlowSpec::flow1(beta, flat(20));
        let t_mat = spec.t_matrix();
        assert!(t_mat.iter().all(|&v| v.abs() < 1e-15));
        let sample = eigen_decompose(&sample_flow(&spec, 0.5, 3).unwrap(), true).unwrap();
        assert!(flow1_rhs(&sample, &t_mat, beta, edge_z(20), 0.5).unwrap().abs() < 1e-14);
    }
}

#[test]
fn flow_endpoints() {
    let spec = FlowSpec::flow1(Beta::Real, block(10));
    let ends = spec.endpoints(9).unwrap();
    assert_eq!(flow_at(&ends, 0.0).unwrap().max_abs_diff(&ends.0), 0.0);
    assert!(flow_at(&ends, 50.0).unwrap().max_abs_diff(&ends.1) < 1e-10);
    assert!(matches!(sample_flow(&spec, -0.1, 1), Err(LabError::InvalidTime(_))));
    assert!(flow_coefficients(f64::NAN).is_err());
}

#[test]
fn flow_preserves_variances() {
    // e^{-t} S_A + (1 − e^{-t}) S_B, off the diagonal both are the target S.
    let n = 6;
    let prof = block(n);
    let spec = FlowSpec::flow2(Beta::Real, prof.clone(), EntryLaw::Rademacher);
    let trials = 20_000;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for s in 0..trials {
        let h = sample_flow(&spec, 0.8, s).unwrap();
        for i in 0..n {
            for j in 0..n {
                acc[(i, j)] += h.entry(i, j).re.powi(2);
            }
        }
    }
    let s = prof.matrix();
    for i in 0..n {
        for j in 0..n {
            let v = acc[(i, j)] / trials as f64;
            // Fourth moment ≤ 3 S², so the standard error is ≤ 2 S / √trials.
            assert!((v - s[(i, j)]).abs() < 5.0 * 2.0 * s[(i, j)] / (trials as f64).sqrt(), "{i} {j}");
        }
    }
}

#[test]
fn resolvent_differentiation_rule() {
    for n in [4usize, 6, 8] {
        let h = sample_flow(&FlowSpec::flow1(Beta::Real, block(n)), 0.4, n as u64).unwrap();
        let z = Complex64::new(0.3, 0.2);
        for (ab, ij) in [((0, 1), (0, 1)), ((1, 1), (0, 2)), ((0, n - 1), (2, 2))] {
            assert!(diff_rule_check(&h, z, ab, ij).unwrap() < 1e-6);
        }
        // Without the 1/2 on the diagonal the relative residual is exactly 1/2.
        assert!(diff_rule_residual(&h, z, (1, 1), (1, 1), false).unwrap() > 0.4);
    }
    let gue = sample_flow(&FlowSpec::flow1(Beta::Complex, block(6)), 0.4, 2).unwrap();
    assert!(diff_rule_check(&gue, Complex64::new(1.0, 0.3), (2, 2), (0, 4)).unwrap() < 1e-6);
    assert!(diff_rule_check(&gue, Complex64::new(1.0, 0.3), (9, 2), (0, 5)).is_err());
}

#[test]
fn monomial_derivatives_match_finite_differences() {
    for n in [4usize, 6, 8] {
        let h = match sample_flow(&FlowSpec::flow1(Beta::Real, block(n)), 1.0, 30 + n as u64).unwrap() {
            HermitianMatrix::Real(m) => m,
            _ => unreachable!(),
        };
        let z = Complex64::new(1.2, 0.4);
        let g = green_by_solve(&HermitianMatrix::Real(h.clone()), z).unwrap();
        let g2 = &g * &g;
        for (a, b) in [(0, 1), (2, n - 1), (1, 1)] {
            for order in 1..=3 {
                let analytic = analytic_product_derivative(&g, &g2, a, b, order);
                let fd = fd_product_derivative(&h, z, a, b, order, 2e-2).unwrap();
                let rel = (analytic - fd).norm() / analytic.norm().max(1e-12);
                assert!(rel < 1e-5, "n {n} ({a},{b}) order {order}: {analytic} {fd}");
            }
        }
    }
}

#[test]
fn monomial_counts_and_weights() {
    // Each differentiation of a k-factor product produces 2k terms
    // (off-diagonal) before merging, so the coefficient sums are 1, -4, 24, -192.
    let sums: Vec<f64> = (0..4).map(|k| green_product_derivative(k, false).iter().map(|m| m.coef).sum()).collect();
    assert_eq!(sums, vec![1.0, -4.0, 24.0, -192.0]);
    let diag: Vec<f64> = (0..4).map(|k| green_product_derivative(k, true).iter().map(|m| m.coef).sum()).collect();
    assert_eq!(diag, vec![1.0, -2.0, 6.0, -24.0]);
}

#[test]
fn gaussian_law_has_no_higher_cumulant_terms() {
    let spec = FlowSpec::flow2(Beta::Real, block(12), EntryLaw::Gaussian);
    let r = k3_k4_terms(&spec, edge_z(12), 1.0, 20, 5, 1).unwrap();
    assert_eq!(r.k3.mean, 0.0);
    assert_eq!(r.k4.mean, 0.0);
    assert!(r.im_m.mean > 0.0);
}

#[test]
fn rademacher_has_no_third_order_term() {
    let spec = FlowSpec::flow2(Beta::Real, block(12), EntryLaw::Rademacher);
    let r = k3_k4_terms(&spec, edge_z(12), 1.0, 20, 5, 1).unwrap();
    assert_eq!(r.k3.mean, 0.0);
    assert!(r.k4.mean != 0.0);
}

#[test]
fn scaled_cumulants() {
    let prof = block(8);
    let n = 8.0;
    let law = EntryLaw::SkewBernoulli { p: 0.2 };
    let c = law.cumulants().unwrap();
    let s2 = scaled_cumulant(&prof, law, 2, 0.3).unwrap();
    let s3 = scaled_cumulant(&prof, law, 3, 40.0).unwrap();
    let s = prof.matrix();
    assert!((s2[(0, 1)] - n * s[(0, 1)] * c.get(2)).abs() < 1e-12);
    assert!((s3[(0, 1)] - (n * s[(0, 1)]).powf(1.5) * c.get(3)).abs() < 1e-12);
    assert_eq!(scaled_cumulant(&prof, law, 3, 0.0).unwrap()[(0, 1)], 0.0);
}

#[test]
fn derivative_identity_on_a_block_profile() {
    let n = 10;
    let spec = FlowSpec::flow1(Beta::Real, block(n));
    for t in [0.02, 0.5] {
        let r = flow_derivative_check(&spec, edge_z(n), t, 0.05, 4000, 77, 1).unwrap();
        assert!(r.passes(), "t {t}: lhs {} rhs {} se {} rich {}", r.lhs.mean, r.rhs.mean, r.joint_stderr(), r.richardson);
        assert!(r.rhs.mean.abs() > 3.0 * r.rhs.se(), "rhs not resolved");
    }
}

#[test]
fn derivative_identity_for_complex_hermitian() {
    let n = 10;
    let spec = FlowSpec::flow1(Beta::Complex, block(n));
    let r = flow_derivative_check(&spec, edge_z(n), 0.5, 0.05, 4000, 78, 1).unwrap();
    assert!(r.passes(), "lhs {} rhs {} se {}", r.lhs.mean, r.rhs.mean, r.joint_stderr());
}

#[test]
fn gronwall_band_on_flat_profile() {
    // Both endpoints are GUE, so E[Im m_N] is constant along the flow.
    let n = 30;
    let spec = FlowSpec::flow1(Beta::Complex, flat(n));
    let r = gronwall_band(&spec, edge_z(n), &[0.5, 2.0, 8.0], 400, 3, 1).unwrap();
    assert!(r.passes());
    for s in &r.means {
        assert!((s.mean - r.initial.mean).abs() < 5.0 * s.se().max(r.initial.se()));
    }
}

#[test]
fn guards() {
    let z = edge_z(8);
    let f1 = FlowSpec::flow1(Beta::Real, block(8));
    let f2 = FlowSpec::flow2(Beta::Real, block(8), EntryLaw::Rademacher);
    assert!(matches!(flow_derivative_check(&f2, z, 0.5, 0.05, 1000, 1, 1), Err(LabError::Config(_))));
    assert!(matches!(flow_derivative_check(&f1, z, 0.5, 0.05, 50, 1, 1), Err(LabError::InconclusiveBudget(_))));
    assert!(flow_derivative_check(&f1, z, 0.5, 0.0, 1000, 1, 1).is_err());
    assert!(k3_k4_terms(&f1, z, 1.0, 10, 1, 1).is_err());
    let complex = FlowSpec::flow2(Beta::Complex, block(8), EntryLaw::Rademacher);
    assert!(k3_k4_terms(&complex, z, 1.0, 10, 1, 1).is_err());
    assert!(gronwall_band(&f1, z, &[-1.0], 10, 1, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rhs_oracle_agreement(seed in any::<u64>(), k in 2usize..5, t in 0.0f64..4.0, e in -2.5f64..2.5, eta in 0.01f64..1.0) {
        let n = 2 * k;
        let spec = FlowSpec::flow1(Beta::Real, block(n));
        let h = sample_flow(&spec, t, seed).unwrap();
        let z = Complex64::new(e, eta);
        let fast = flow1_rhs(&eigen_decompose(&h, true).unwrap(), &spec.t_matrix(), Beta::Real, z, t).unwrap();
        let slow = flow1_rhs_bruteforce(&green_by_solve(&h, z).unwrap(), &spec.t_matrix(), Beta::Real, t);
        prop_assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0));
    }

    #[test]
    fn flow_is_hermitian(seed in any::<u64>(), t in 0.0f64..10.0) {
        let h = sample_flow(&FlowSpec::flow2(Beta::Complex, block(6), EntryLaw::Rademacher), t, seed).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((h.entry(i, j) - h.entry(j, i).conj()).norm() < 1e-15);
            }
        }
    }
}
