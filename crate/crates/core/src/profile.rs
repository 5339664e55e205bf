//! Variance profiles: doubly stochastic matrices of entry variances and the
//! centered matrix T = S - Π.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{sym_eigen, sym_eigenvalues};

/// Column-sum tolerance for a doubly stochastic profile.
pub const STOCHASTIC_TOL: f64 = 1e-12;
const SINKHORN_MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    n: usize,
    s: DMatrix<f64>,
    c_inf: f64,
    c_sup: f64,
    doubly_stochastic: bool,
}

/// Serializable description of a profile family; `build` instantiates it at
/// a given dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProfileSpec {
    Flat,
    /// Block profile with `blocks` equal blocks; `within` and `between` are
    /// the values of N·S_ij, so (within + (blocks-1)·between) / blocks = 1.
    Block { blocks: usize, within: f64, between: f64 },
    BandedFloor { bandwidth: usize, floor: f64 },
}

impl ProfileSpec {
    /// Instantiate at dimension n. Block and banded parameters are given in
    /// units of 1/n.
    pub fn build(&self, n: usize) -> Result<VarianceProfile> {
        let nf = n as f64;
        match *self {
            ProfileSpec::Flat => VarianceProfile::flat(n),
            ProfileSpec::Block { blocks, within, between } => {
                VarianceProfile::block(n, blocks, within / nf, between / nf)
            }
            ProfileSpec::BandedFloor { bandwidth, floor } => {
                VarianceProfile::banded_floor(n, bandwidth.min(n), floor / nf)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ProfileSpec::Flat => "flat".into(),
            ProfileSpec::Block { blocks, within, between } => {
                format!("block(k={blocks};w={within};b={between})")
            }
            ProfileSpec::BandedFloor { bandwidth, floor } => {
                format!("banded(w={bandwidth};floor={floor})")
            }
        }
    }
}

impl VarianceProfile {
    pub fn flat(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(LabError::InvalidDimension(n, 2));
        }
        let s = DMatrix::from_element(n, n, 1.0 / n as f64);
        Ok(Self { n, s, c_inf: 1.0, c_sup: 1.0, doubly_stochastic: true })
    }

    /// `within`/`between` are the raw entries S_ij inside and across blocks.
    pub fn block(n: usize, k_blocks: usize, within: f64, between: f64) -> Result<Self> {
        if n < 2 {
            return Err(LabError::InvalidDimension(n, 2));
        }
        if k_blocks == 0 || n % k_blocks != 0 {
            return Err(LabError::InvalidProfile(format!(
                "{n} is not divisible into {k_blocks} blocks"
            )));
        }
        if !(within > 0.0 && between > 0.0) || !within.is_finite() || !between.is_finite() {
            return Err(LabError::InvalidProfile(
                "block variances must be positive".into(),
            ));
        }
        let m = n / k_blocks;
        let col = m as f64 * within + (n - m) as f64 * between;
        if (col - 1.0).abs() > 1e-9 {
            return Err(LabError::InvalidProfile(format!(
                "block columns sum to {col}, expected 1"
            )));
        }
        let (within, between) = if col == 1.0 {
            (within, between)
        } else {
            (within / col, between / col)
        };
        let s = DMatrix::from_fn(n, n, |i, j| if i / m == j / m { within } else { between });
        let nf = n as f64;
        Ok(Self {
            n,
            s,
            c_inf: nf * within.min(between),
            c_sup: nf * within.max(between),
            doubly_stochastic: true,
        })
    }

    /// S = floor·J + (1 - n·floor)·B where B is the Sinkhorn-balanced
    /// indicator kernel of the band |i - j| < bandwidth.
    pub fn banded_floor(n: usize, bandwidth: usize, floor: f64) -> Result<Self> {
        if n < 2 {
            return Err(LabError::InvalidDimension(n, 2));
        }
        let nf = n as f64;
        if bandwidth == 0 || bandwidth > n {
            return Err(LabError::InvalidProfile(format!(
                "bandwidth {bandwidth} outside 1..={n}"
            )));
        }
        if !(floor > 0.0 && floor * nf <= 1.0) {
            return Err(LabError::InvalidProfile(format!(
                "floor {floor} must satisfy 0 < n·floor <= 1"
            )));
        }
        let kernel = DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) < bandwidth { 1.0 } else { 0.0 }
        });
        let b = sinkhorn_symmetric(&kernel, STOCHASTIC_TOL, SINKHORN_MAX_SWEEPS)?;
        let rest = 1.0 - nf * floor;
        let s = b.map(|v| floor + rest * v);
        Self::from_matrix(s)
    }

    /// Validate an arbitrary symmetric doubly stochastic matrix.
    pub fn from_matrix(s: DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        if n < 2 || s.ncols() != n {
            return Err(LabError::InvalidDimension(n, 2));
        }
        for i in 0..n {
            for j in 0..i {
                if s[(i, j)] != s[(j, i)] {
                    return Err(LabError::InvalidProfile(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        let residual = column_residual(&s);
        if residual > STOCHASTIC_TOL {
            return Err(LabError::InvalidProfile(format!(
                "column sums deviate from 1 by {residual:e}"
            )));
        }
        let nf = n as f64;
        let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(lo > 0.0) {
            return Err(LabError::InvalidProfile("entries must be strictly positive".into()));
        }
        Ok(Self { n, s, c_inf: nf * lo, c_sup: nf * hi, doubly_stochastic: true })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[(i, j)]
    }

    pub fn c_inf(&self) -> f64 {
        self.c_inf
    }

    pub fn c_sup(&self) -> f64 {
        self.c_sup
    }

    /// False for the diagonal-doubled profile of the Gaussian flow endpoints.
    pub fn is_doubly_stochastic(&self) -> bool {
        self.doubly_stochastic
    }

    pub fn is_flat(&self) -> bool {
        let v = 1.0 / self.n as f64;
        self.doubly_stochastic && self.s.iter().all(|&x| x == v)
    }

    /// max_j |Σ_i S_ij - 1|.
    pub fn column_residual(&self) -> f64 {
        column_residual(&self.s)
    }

    /// S̃_ab = S_ab(1 + δ_ab).
    pub fn modified(&self) -> Self {
        let mut s = self.s.clone();
        for i in 0..self.n {
            s[(i, i)] *= 2.0;
        }
        let nf = self.n as f64;
        let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self { n: self.n, s, c_inf: nf * lo, c_sup: nf * hi, doubly_stochastic: false }
    }

    /// S(t) = e^{-t}Π + (1 - e^{-t})S.
    pub fn time_profile(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(LabError::InvalidTime(t));
        }
        let e = (-t).exp();
        let nf = self.n as f64;
        let s = self.s.map(|v| e / nf + (1.0 - e) * v);
        let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(Self {
            n: self.n,
            s,
            c_inf: nf * lo,
            c_sup: nf * hi,
            doubly_stochastic: self.doubly_stochastic,
        })
    }

    /// Ascending eigenvalues of S.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        sym_eigenvalues(&self.s)
    }

    /// Largest |eigenvalue| after removing the Perron eigenvalue 1.
    pub fn second_abs_eigenvalue(&self) -> Result<f64> {
        let vals = self.eigenvalues()?;
        // Drop the eigenvalue closest to 1.
        let top = vals
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1.0).abs().total_cmp(&(b.1 - 1.0).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(vals
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max))
    }

    pub fn centered(&self) -> Result<CenteredProfile> {
        let nf = self.n as f64;
        let pi = 1.0 / nf;
        let t = self.s.map(|v| v - pi);
        let gap = 1.0 - self.second_abs_eigenvalue()?;
        let c0 = gap.clamp(self.c_inf.min(1.0), 1.0);
        Ok(CenteredProfile { n: self.n, t, c0, c_big: 2.0 * (self.c_sup + 1.0), raw_gap: gap })
    }

    /// Check symmetry, stochasticity, entry bounds and the spectral gap.
    pub fn validate(&self) -> Result<ProfileReport> {
        let n = self.n;
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                asym = asym.max((self.s[(i, j)] - self.s[(j, i)]).abs());
            }
        }
        let nf = n as f64;
        let (lo, hi) = self
            .s
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(nf * v), hi.max(nf * v)));
        let vals = self.eigenvalues()?;
        let second = self.second_abs_eigenvalue()?;
        let top = vals.last().copied().unwrap_or(0.0);
        let column_residual = self.column_residual();
        let ok = asym == 0.0
            && column_residual <= STOCHASTIC_TOL
            && lo >= self.c_inf * (1.0 - 1e-12)
            && hi <= self.c_sup * (1.0 + 1e-12)
            && self.c_inf > 0.0
            && (top - 1.0).abs() <= 1e-10
            && vals.iter().rev().nth(1).copied().unwrap_or(0.0) <= 1.0 - self.c_inf + 1e-8
            && vals[0] >= -1.0 + self.c_inf - 1e-8;
        Ok(ProfileReport {
            asymmetry: asym,
            column_residual,
            min_scaled: lo,
            max_scaled: hi,
            top_eigenvalue: top,
            second_abs_eigenvalue: second,
            ok,
        })
    }

    /// CSV with header `i,j,s_ij`, row-major.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "s_ij"])?;
        for i in 0..self.n {
            for j in 0..self.n {
                out.write_record([i.to_string(), j.to_string(), format!("{:e}", self.s[(i, j)])])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ProfileReport {
    pub asymmetry: f64,
    pub column_residual: f64,
    pub min_scaled: f64,
    pub max_scaled: f64,
    pub top_eigenvalue: f64,
    pub second_abs_eigenvalue: f64,
    pub ok: bool,
}

fn column_residual(s: &DMatrix<f64>) -> f64 {
    s.column_iter()
        .map(|c| (c.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Symmetric Sinkhorn balancing: find positive d with D K D doubly
/// stochastic, iterating d ← sqrt(d / (K d)).
pub fn sinkhorn_symmetric(k: &DMatrix<f64>, tol: f64, max_sweeps: usize) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    let mut d = vec![1.0 / (n as f64).sqrt(); n];
    let balanced = |d: &[f64]| DMatrix::from_fn(n, n, |i, j| (d[i] * d[j]) * k[(i, j)]);
    let mut residual = f64::INFINITY;
    for _ in 0..max_sweeps {
        let kd: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[(i, j)] * d[j]).sum::<f64>())
            .collect();
        // Row sums of D K D are d_i (K d)_i.
        residual = (0..n).map(|i| (d[i] * kd[i] - 1.0).abs()).fold(0.0, f64::max);
        if residual <= tol * 1e-2 {
            break;
        }
        for i in 0..n {
            if kd[i] <= 0.0 {
                return Err(LabError::BalancingFailure { iterations: 0, residual: f64::INFINITY });
            }
            d[i] = (d[i] / kd[i]).sqrt();
        }
    }
    let b = balanced(&d);
    let final_residual = b
        .row_iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    if final_residual > tol {
        return Err(LabError::BalancingFailure {
            iterations: max_sweeps,
            residual: final_residual.max(residual.min(f64::MAX)),
        });
    }
    Ok(b)
}

/// T = S - Π with its gap constants.
#[derive(Clone, Debug)]
pub struct CenteredProfile {
    n: usize,
    t: DMatrix<f64>,
    c0: f64,
    c_big: f64,
    raw_gap: f64,
}

#[derive(Clone, Debug)]
pub struct PowerCheck {
    pub k: usize,
    pub max_row_sum: f64,
    pub max_entry: f64,
    pub op_norm: f64,
    pub op_bound: f64,
    pub s_power_residual: f64,
    pub ok: bool,
}

impl CenteredProfile {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// 1 - (second largest |eigenvalue| of S) before clamping.
    pub fn raw_gap(&self) -> f64 {
        self.raw_gap
    }

    /// C₀ = 2(c_sup + 1).
    pub fn c_big(&self) -> f64 {
        self.c_big
    }

    /// Smallest K with (1 - c0)^K ≤ N^{-10}.
    pub fn k_threshold(&self) -> usize {
        if self.c0 >= 1.0 {
            return 1;
        }
        let nf = self.n as f64;
        (-10.0 * nf.ln() / (1.0 - self.c0).ln()).ceil().max(1.0) as usize
    }

    /// T^k through the spectral decomposition of T; stable for large k where
    /// repeated products would be dominated by rounding.
    pub fn spectral_power(&self, k: usize) -> Result<DMatrix<f64>> {
        let (vals, u) = sym_eigen(&self.t)?;
        let mut scaled = u.clone();
        for (j, &v) in vals.iter().enumerate() {
            let p = v.powi(k as i32);
            scaled.column_mut(j).scale_mut(p);
        }
        Ok(scaled * u.transpose())
    }

    /// The power suite for k = 1..=kmax: vanishing row sums of T^k, the
    /// entrywise bound C₀/N, the operator bound (1 - c0)^k, and the relations
    /// T^k = S^k - Π, T·S^k = T^{k+1}.
    pub fn power_suite(&self, s: &VarianceProfile, kmax: usize) -> Result<Vec<PowerCheck>> {
        let n = self.n;
        let nf = n as f64;
        let pi = DMatrix::from_element(n, n, 1.0 / nf);
        let mut tk = self.t.clone();
        let mut sk = s.matrix().clone();
        let mut out = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            let max_row_sum = tk
                .row_iter()
                .map(|r| r.iter().sum::<f64>().abs())
                .fold(0.0, f64::max);
            let max_entry = tk.amax();
            let vals = sym_eigenvalues(&tk)?;
            let op_norm = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let op_bound = (1.0 - self.c0).powi(k as i32);
            let s_power_residual = (&tk - (&sk - &pi)).amax();
            let next_t = &tk * &self.t;
            let ts = &self.t * &sk;
            let rel = (&ts - &next_t).amax();
            let ok = max_row_sum <= 1e-9
                && max_entry <= self.c_big / nf
                && op_norm <= op_bound * (1.0 + 1e-9) + 1e-14
                && s_power_residual <= 1e-10
                && rel <= 1e-10;
            out.push(PowerCheck {
                k,
                max_row_sum,
                max_entry,
                op_norm,
                op_bound,
                s_power_residual: s_power_residual.max(rel),
                ok,
            });
            tk = next_t;
            sk = &sk * s.matrix();
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_profile_basics() {
        let s = VarianceProfile::flat(4).unwrap();
        assert!(s.matrix().iter().all(|&v| v == 0.25));
        let s2 = VarianceProfile::flat(2).unwrap();
        let vals = s2.eigenvalues().unwrap();
        assert!((vals[0]).abs() < 1e-15 && (vals[1] - 1.0).abs() < 1e-15);
        assert!(matches!(VarianceProfile::flat(1), Err(LabError::InvalidDimension(1, 2))));
        let t = s.centered().unwrap();
        assert!(t.matrix().iter().all(|&v| v == 0.0));
        assert_eq!(t.c0(), 1.0);
        assert_eq!(t.k_threshold(), 1);
    }

    #[test]
    fn block_profile_degenerates_to_flat() {
        let b = VarianceProfile::block(6, 3, 1.0 / 6.0, 1.0 / 6.0).unwrap();
        let f = VarianceProfile::flat(6).unwrap();
        assert!((b.matrix() - f.matrix()).amax() < 1e-16);
    }

    #[test]
    fn block_rejects_bad_parameters() {
        assert!(VarianceProfile::block(5, 2, 0.2, 0.2).is_err());
        assert!(VarianceProfile::block(4, 2, -0.1, 0.6).is_err());
        assert!(VarianceProfile::block(4, 2, 0.3, 0.3).is_err());
    }

    #[test]
    fn banded_full_width_is_flat() {
        let b = VarianceProfile::banded_floor(8, 8, 0.01).unwrap();
        assert!((b.matrix().map(|v| v - 0.125)).amax() < 1e-15);
    }

    #[test]
    fn modified_profile_doubles_the_diagonal() {
        let s = VarianceProfile::flat(4).unwrap().modified();
        assert!(!s.is_doubly_stochastic());
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(s.get(i, j), if i == j { 0.5 } else { 0.25 });
            }
        }
    }

    #[test]
    fn time_profile_limits() {
        let s = VarianceProfile::block(4, 2, 0.35, 0.15).unwrap();
        let t0 = s.time_profile(0.0).unwrap();
        assert!(t0.matrix().iter().all(|&v| (v - 0.25).abs() < 1e-16));
        let t50 = s.time_profile(50.0).unwrap();
        assert!((t50.matrix() - s.matrix()).amax() <= 1e-20);
        let half = s.time_profile(std::f64::consts::LN_2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((half.get(i, j) - (0.5 * 0.25 + 0.5 * s.get(i, j))).abs() < 1e-16);
            }
        }
        assert!(matches!(s.time_profile(-1.0), Err(LabError::InvalidTime(_))));
    }

    #[test]
    fn sinkhorn_reports_failure_on_budget() {
        let k = DMatrix::from_fn(30, 30, |i, j| if i.abs_diff(j) < 2 { 1.0 } else { 0.0 });
        let err = sinkhorn_symmetric(&k, 1e-12, 1).unwrap_err();
        assert!(matches!(err, LabError::BalancingFailure { .. }));
    }
}
