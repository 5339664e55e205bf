use nalgebra::DMatrix;
use proptest::prelude::*;
use twlab::profile::{sinkhorn_symmetric, ProfileSpec, VarianceProfile};
use twlab::LabError;

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

#[test]
fn flat_profile_entries_and_spectrum() {
    let s = VarianceProfile::flat(4).unwrap();
    assert!(s.matrix().iter().all(|&v| v == 0.25));
    let two = VarianceProfile::flat(2).unwrap().eigenvalues().unwrap();
    assert!(two[0].abs() < 1e-15 && (two[1] - 1.0).abs() < 1e-15);
    assert!(VarianceProfile::flat(100).unwrap().second_abs_eigenvalue().unwrap() < 1e-12);
    assert!(matches!(VarianceProfile::flat(1), Err(LabError::InvalidDimension(1, 2))));
}

#[test]
fn block_profile_examples() {
    let s = VarianceProfile::block(4, 2, 0.35, 0.15).unwrap();
    assert!(s.column_residual() < 1e-15);
    let flat = VarianceProfile::block(6, 3, 1.0 / 6.0, 1.0 / 6.0).unwrap();
    assert!(max_diff(flat.matrix(), VarianceProfile::flat(6).unwrap().matrix()) < 1e-16);
    assert!(VarianceProfile::block(4, 2, 0.4, 0.15).is_err());
    assert!(VarianceProfile::block(5, 2, 0.35, 0.15).is_err());
    assert!(VarianceProfile::block(4, 2, 0.6, -0.1).is_err());
}

#[test]
fn block_second_eigenvalue_matches_closed_form() {
    let n = 200;
    let s = ProfileSpec::Block { blocks: 2, within: 1.4, between: 0.6 }.build(n).unwrap();
    let (w, b) = (1.4 / n as f64, 0.6 / n as f64);
    let vals = s.eigenvalues().unwrap();
    assert!((vals[n - 2] - (w - b) * n as f64 / 2.0).abs() < 1e-10);
    assert!((s.c_inf() - 0.6).abs() < 1e-12 && (s.c_sup() - 1.4).abs() < 1e-12);
}

#[test]
fn banded_floor_examples() {
    let full = VarianceProfile::banded_floor(8, 8, 0.01).unwrap();
    assert!(max_diff(full.matrix(), VarianceProfile::flat(8).unwrap().matrix()) < 1e-14);
    let n = 50;
    let s = VarianceProfile::banded_floor(n, 5, 0.2 / n as f64).unwrap();
    for i in 0..n {
        let row: f64 = s.matrix().row(i).iter().sum();
        assert!((row - 1.0).abs() <= 1e-12);
    }
    assert!(s.c_inf() >= 0.2 - 1e-9);
    assert!(s.validate().unwrap().ok);
}

#[test]
fn sinkhorn_reports_failure() {
    // A reducible kernel with a zero row cannot be balanced.
    let mut k = DMatrix::from_element(3, 3, 1.0);
    for j in 0..3 {
        k[(0, j)] = 0.0;
        k[(j, 0)] = 0.0;
    }
    assert!(matches!(sinkhorn_symmetric(&k, 1e-12, 50), Err(LabError::BalancingFailure { .. }) | Err(LabError::InvalidProfile(_))));
}

#[test]
fn modified_profile_is_flagged_and_diagonal() {
    let s = ProfileSpec::Block { blocks: 2, within: 1.5, between: 0.5 }.build(6).unwrap();
    let m = s.modified();
    assert!(!m.is_doubly_stochastic());
    let d = m.matrix() - s.matrix();
    for i in 0..6 {
        for j in 0..6 {
            let want = if i == j { s.get(i, i) } else { 0.0 };
            assert_eq!(d[(i, j)], want);
        }
    }
}

#[test]
fn centered_profile_examples() {
    let flat = VarianceProfile::flat(5).unwrap().centered().unwrap();
    assert!(flat.matrix().iter().all(|&v| v == 0.0));
    let block = VarianceProfile::block(4, 2, 0.35, 0.15).unwrap();
    let t = block.centered().unwrap();
    for i in 0..4 {
        assert!(t.matrix().row(i).iter().sum::<f64>().abs() < 1e-14);
    }
    for spec in [
        ProfileSpec::Block { blocks: 2, within: 1.5, between: 0.5 },
        ProfileSpec::BandedFloor { bandwidth: 4, floor: 0.3 },
    ] {
        let s = spec.build(40).unwrap();
        let c = s.centered().unwrap();
        assert!(c.c0() >= s.c_inf() * (1.0 - 1e-6));
        let t30 = c.spectral_power(30).unwrap();
        let norm = twlab::linalg::sym_eigenvalues(&t30).unwrap().iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(norm <= (1.0 - c.c0()).powi(30) * (1.0 + 1e-9) + 1e-300);
        let k = c.k_threshold();
        assert!(c.spectral_power(k).unwrap().amax() <= (40f64).powi(-10));
    }
}

#[test]
fn time_profile_examples() {
    let s = VarianceProfile::block(4, 2, 0.35, 0.15).unwrap();
    let flat = VarianceProfile::flat(4).unwrap();
    assert!(max_diff(s.time_profile(0.0).unwrap().matrix(), flat.matrix()) < 1e-16);
    assert!(max_diff(s.time_profile(50.0).unwrap().matrix(), s.matrix()) < 1e-20);
    let half = s.time_profile(2f64.ln()).unwrap();
    let want = (flat.matrix() + s.matrix()) * 0.5;
    assert!(max_diff(half.matrix(), &want) < 1e-16);
    assert!(matches!(s.time_profile(-1.0), Err(LabError::InvalidTime(_))));
}

#[test]
fn csv_export_is_row_major() {
    let s = VarianceProfile::block(4, 2, 0.35, 0.15).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,s_ij"));
    let parse = |line: &str| -> (String, f64) {
        let (key, v) = line.rsplit_once(',').unwrap();
        (key.to_string(), v.parse().unwrap())
    };
    assert_eq!(parse(lines.next().unwrap()), ("0,0".into(), 0.35));
    assert_eq!(parse(lines.next().unwrap()), ("0,1".into(), 0.35));
    assert_eq!(parse(lines.next().unwrap()), ("0,2".into(), 0.15));
    assert_eq!(text.lines().count(), 17);
}

#[test]
fn profile_spec_round_trips_through_toml() {
    #[derive(serde::Serialize, serde::Deserialize, PartialEq, Debug)]
    struct Wrap {
        profile: ProfileSpec,
    }
    let w = Wrap { profile: ProfileSpec::BandedFloor { bandwidth: 5, floor: 0.2 } };
    let text = toml::to_string(&w).unwrap();
    assert!(text.contains("banded_floor"));
    assert_eq!(toml::from_str::<Wrap>(&text).unwrap(), w);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn time_profile_relations(t in 0.0f64..6.0, within in 1.05f64..1.9) {
        let s = ProfileSpec::Block { blocks: 2, within, between: 2.0 - within }.build(10).unwrap();
        let st = s.time_profile(t).unwrap();
        let c = s.centered().unwrap();
        let tm = c.matrix();
        let pi = DMatrix::from_element(10, 10, 0.1);
        let a = 1.0 - (-t).exp();
        prop_assert!(max_diff(st.matrix(), &(tm * a + &pi)) < 1e-12);
        prop_assert!(max_diff(&(st.matrix() * tm), &(tm * tm * a)) < 1e-12);
        prop_assert!(st.column_residual() < 1e-12);
    }

    #[test]
    fn power_suite_holds_for_block_and_banded(blocks in 1usize..4, bw in 1usize..8, floor in 0.05f64..0.9) {
        let n = 24;
        let within = 1.0 + 0.5 * (blocks as f64 - 1.0);
        let between = if blocks == 1 { within } else { (blocks as f64 - within) / (blocks as f64 - 1.0) };
        for spec in [ProfileSpec::Block { blocks, within, between }, ProfileSpec::BandedFloor { bandwidth: bw, floor }] {
            let s = spec.build(n).unwrap();
            prop_assert!(s.validate().unwrap().ok, "{}", spec.label());
            let suite = s.centered().unwrap().power_suite(&s, 12).unwrap();
            prop_assert!(suite.iter().all(|c| c.ok), "{}", spec.label());
        }
    }
}
