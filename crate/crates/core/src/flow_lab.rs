//! Interpolating matrix flows H(t) = e^{-t/2} A + √(1 − e^{-t}) B and the
//! exact and approximate identities governing d/dt E[Im m_N(t, z)].
//!
//! Flow 1 runs from the Gaussian invariant ensemble to a Gaussian matrix with
//! profile S (doubled diagonal for β = 1). Flow 2 runs from the Gaussian
//! matrix with profile S to a matrix with the same profile and an arbitrary
//! entry law.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensembles::{Beta, EnsembleSpec, EntryLaw, HermitianMatrix};
use crate::error::{LabError, Result};
use crate::mc::{parallel_mc, Stats, TrialFailure};
use crate::profile::VarianceProfile;
use crate::resolvent::{eigen_decompose, green_by_solve, im_m_n, SpectralSample};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Flow1,
    Flow2,
}

#[derive(Clone, Debug)]
pub struct FlowSpec {
    pub kind: FlowKind,
    pub beta: Beta,
    pub profile: Arc<VarianceProfile>,
    /// Entry law of the generic endpoint of flow 2; ignored by flow 1.
    pub law: EntryLaw,
}

impl FlowSpec {
    pub fn flow1(beta: Beta, profile: VarianceProfile) -> Self {
        Self { kind: FlowKind::Flow1, beta, profile: Arc::new(profile), law: EntryLaw::Gaussian }
    }

    pub fn flow2(beta: Beta, profile: VarianceProfile, law: EntryLaw) -> Self {
        Self { kind: FlowKind::Flow2, beta, profile: Arc::new(profile), law }
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }

    fn gaussian(&self, profile: Arc<VarianceProfile>) -> EnsembleSpec {
        EnsembleSpec { beta: self.beta, profile, law: EntryLaw::Gaussian, diagonal_law: EntryLaw::Gaussian }
    }

    /// Ensemble at t = 0.
    pub fn start_spec(&self) -> Result<EnsembleSpec> {
        match self.kind {
            FlowKind::Flow1 => EnsembleSpec::gaussian_invariant(self.beta, self.n()),
            FlowKind::Flow2 => Ok(self.gaussian(self.profile.clone())),
        }
    }

    /// Ensemble reached as t → ∞.
    pub fn end_spec(&self) -> Result<EnsembleSpec> {
        match (self.kind, self.beta) {
            (FlowKind::Flow1, Beta::Real) => Ok(self.gaussian(Arc::new(self.profile.modified()))),
            (FlowKind::Flow1, Beta::Complex) => Ok(self.gaussian(self.profile.clone())),
            (FlowKind::Flow2, _) => Ok(EnsembleSpec {
                beta: self.beta,
                profile: self.profile.clone(),
                law: self.law,
                diagonal_law: self.law,
            }),
        }
    }

    /// Both endpoints, drawn from independent sub-streams of `seed`.
    pub fn endpoints(&self, seed: u64) -> Result<(HermitianMatrix, HermitianMatrix)> {
        let a = self.start_spec()?.sample(derive_seed(seed, 0));
        let b = self.end_spec()?.sample(derive_seed(seed, 1));
        Ok((a, b))
    }

    /// T = S − Π.
    pub fn t_matrix(&self) -> DMatrix<f64> {
        let inv = 1.0 / self.n() as f64;
        self.profile.matrix().map(|s| s - inv)
    }
}

pub fn flow_coefficients(t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(LabError::InvalidTime(t));
    }
    Ok(((-0.5 * t).exp(), (-(-t).exp_m1()).sqrt()))
}

pub fn flow_at(endpoints: &(HermitianMatrix, HermitianMatrix), t: f64) -> Result<HermitianMatrix> {
    let (ca, cb) = flow_coefficients(t)?;
    endpoints.0.combine(ca, &endpoints.1, cb)
}

pub fn sample_flow(spec: &FlowSpec, t: f64, seed: u64) -> Result<HermitianMatrix> {
    flow_coefficients(t)?;
    flow_at(&spec.endpoints(seed)?, t)
}

/// e^{-t}(1/N) Σ_{v,a,b} T_ab Im(G_vb G_bv G_aa + G_va G_ab G_bv) for β = 1,
/// and e^{-t}(1/N) Σ_{v,a,b} T_ab Im(G_vb G_bv G_aa) for β = 2, contracted to
/// diag(G)ᵀ T diag(G²) + Σ_ab T_ab G_ab (G²)_ba.
pub fn flow1_rhs(sample: &SpectralSample, t_mat: &DMatrix<f64>, beta: Beta, z: Complex64, t: f64) -> Result<f64> {
    let g = sample.green_matrix(z)?;
    let g2 = sample.green_power(z, 2)?;
    Ok(flow1_rhs_from(&g, &g2, t_mat, beta, t))
}

fn flow1_rhs_from(g: &DMatrix<Complex64>, g2: &DMatrix<Complex64>, t_mat: &DMatrix<f64>, beta: Beta, t: f64) -> f64 {
    let n = g.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for b in 0..n {
        let g2bb = g2[(b, b)];
        for a in 0..n {
            let tab = t_mat[(a, b)];
            if tab == 0.0 {
                continue;
            }
            let mut term = g[(a, a)] * g2bb;
            if beta == Beta::Real {
                term += g[(a, b)] * g2[(b, a)];
            }
            acc += term * tab;
        }
    }
    (-t).exp() * acc.im / n as f64
}

/// The same right-hand side by the literal triple sum; test oracle.
pub fn flow1_rhs_bruteforce(g: &DMatrix<Complex64>, t_mat: &DMatrix<f64>, beta: Beta, t: f64) -> f64 {
    let n = g.nrows();
    let mut acc = 0.0;
    for v in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut term = g[(v, b)] * g[(b, v)] * g[(a, a)];
                if beta == Beta::Real {
                    term += g[(v, a)] * g[(a, b)] * g[(b, v)];
                }
                acc += t_mat[(a, b)] * term.im;
            }
        }
    }
    (-t).exp() * acc / n as f64
}

#[derive(Clone, Debug)]
pub struct FlowDerivativeReport {
    pub kind: FlowKind,
    pub n: usize,
    pub z: Complex64,
    pub t: f64,
    pub dt: f64,
    /// Finite-difference derivative at step dt.
    pub lhs: Stats,
    /// Same at step dt/2.
    pub lhs_half: Stats,
    pub rhs: Stats,
    /// Paired per-trial difference lhs − rhs.
    pub difference: Stats,
    /// (4/3)|D(dt) − D(dt/2)|, the Richardson estimate of the O(dt²) bias.
    pub richardson: f64,
    pub failures: Vec<TrialFailure>,
}

impl FlowDerivativeReport {
    pub fn joint_stderr(&self) -> f64 {
        self.difference.se()
    }

    pub fn sigma_distance(&self) -> f64 {
        (self.lhs.mean - self.rhs.mean).abs() / self.joint_stderr()
    }

    pub fn passes(&self) -> bool {
        (self.lhs.mean - self.rhs.mean).abs() <= 3.0 * self.joint_stderr() + self.richardson
    }
}

fn derivative_stencil(f: &dyn Fn(f64) -> Result<f64>, t: f64, h: f64) -> Result<f64> {
    if t >= h {
        Ok((f(t + h)? - f(t - h)?) / (2.0 * h))
    } else {
        Ok((-3.0 * f(t)? + 4.0 * f(t + h)? - f(t + 2.0 * h)?) / (2.0 * h))
    }
}

/// Compare the finite-difference time derivative of E[Im m_N] along flow 1
/// with the Monte-Carlo average of its exact right-hand side. Both sides use
/// the same endpoint pair in every trial.
pub fn flow_derivative_check(
    spec: &FlowSpec,
    z: Complex64,
    t: f64,
    dt: f64,
    trials: usize,
    master_seed: u64,
    workers: usize,
) -> Result<FlowDerivativeReport> {
    if spec.kind != FlowKind::Flow1 {
        return Err(LabError::Config(
            "the exact derivative identity needs Gaussian endpoints (flow 1)".into(),
        ));
    }
    flow_coefficients(t)?;
    if !(dt > 0.0) {
        return Err(LabError::Config(format!("dt must be positive, got {dt}")));
    }
    if trials < 100 {
        return Err(LabError::InconclusiveBudget(format!(
            "{trials} trials cannot resolve a derivative; use at least 100"
        )));
    }
    let t_mat = spec.t_matrix();
    let out = parallel_mc(trials, master_seed, workers, |_, seed| {
        let ends = spec.endpoints(seed)?;
        let im_m = |s: f64| -> Result<f64> {
            let eig = eigen_decompose(&flow_at(&ends, s)?, false)?;
            Ok(im_m_n(&eig.eigenvalues, z.re, z.im))
        };
        let d1 = derivative_stencil(&im_m, t, dt)?;
        let d2 = derivative_stencil(&im_m, t, 0.5 * dt)?;
        let sample = eigen_decompose(&flow_at(&ends, t)?, true)?;
        let rhs = flow1_rhs(&sample, &t_mat, spec.beta, z, t)?;
        Ok(vec![d1, d2, rhs, d1 - rhs, d1 - d2])
    })?;
    let cols = out.column_stats();
    if cols.is_empty() || cols[3].stderr().is_none() {
        return Err(LabError::InconclusiveBudget("fewer than two successful trials".into()));
    }
    Ok(FlowDerivativeReport {
        kind: spec.kind,
        n: spec.n(),
        z,
        t,
        dt,
        lhs: cols[0],
        lhs_half: cols[1],
        rhs: cols[2],
        difference: cols[3],
        richardson: 4.0 / 3.0 * cols[4].mean.abs(),
        failures: out.failures,
    })
}

/// Index placeholders of a Green-function monomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ix {
    V,
    A,
    B,
}

/// coef · Π G_{xy}; factors are unordered pairs since G is symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub factors: Vec<(Ix, Ix)>,
}

fn canonical(mut f: Vec<(Ix, Ix)>) -> Vec<(Ix, Ix)> {
    for p in f.iter_mut() {
        if p.0 > p.1 {
            *p = (p.1, p.0);
        }
    }
    f.sort();
    f
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |x: Ix| match x {
            Ix::V => 'v',
            Ix::A => 'a',
            Ix::B => 'b',
        };
        write!(f, "{:+}", self.coef)?;
        for &(x, y) in &self.factors {
            write!(f, " G_{}{}", name(x), name(y))?;
        }
        Ok(())
    }
}

/// ∂/∂h_ab of a sum of monomials for real symmetric H:
/// ∂G_xy/∂h_ab = −(G_xa G_by + G_xb G_ay) for a ≠ b, and −G_xa G_ay on the
/// diagonal (where B stands for the same index as A).
pub fn differentiate(poly: &[Monomial], diagonal: bool) -> Vec<Monomial> {
    let mut acc: BTreeMap<Vec<(Ix, Ix)>, f64> = BTreeMap::new();
    for m in poly {
        for k in 0..m.factors.len() {
            let (x, y) = m.factors[k];
            let rest: Vec<(Ix, Ix)> = m
                .factors
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &p)| p)
                .collect();
            let replacements: Vec<[(Ix, Ix); 2]> = if diagonal {
                vec![[(x, Ix::A), (Ix::A, y)]]
            } else {
                vec![[(x, Ix::A), (Ix::B, y)], [(x, Ix::B), (Ix::A, y)]]
            };
            for r in replacements {
                let mut f = rest.clone();
                f.extend(r);
                *acc.entry(canonical(f)).or_insert(0.0) -= m.coef;
            }
        }
    }
    acc.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(factors, coef)| Monomial { coef, factors })
        .collect()
}

/// ∂^k(G_va G_bv)/∂h_ab^k as an explicit monomial list.
pub fn green_product_derivative(order: usize, diagonal: bool) -> Vec<Monomial> {
    let b = if diagonal { Ix::A } else { Ix::B };
    let mut poly = vec![Monomial { coef: 1.0, factors: canonical(vec![(Ix::V, Ix::A), (b, Ix::V)]) }];
    for _ in 0..order {
        poly = differentiate(&poly, diagonal);
    }
    poly
}

/// Σ_v of a monomial at fixed (a, b): the two factors touching v contract to
/// an entry of G².
pub fn contract_monomial(m: &Monomial, g: &DMatrix<Complex64>, g2: &DMatrix<Complex64>, a: usize, b: usize) -> Complex64 {
    let idx = |x: Ix| if x == Ix::A { a } else { b };
    let mut prod = Complex64::new(m.coef, 0.0);
    let mut ends = [0usize; 2];
    let mut k = 0;
    for &(x, y) in &m.factors {
        match (x, y) {
            (Ix::V, Ix::V) => unreachable!("v is only ever paired with a or b"),
            (Ix::V, o) | (o, Ix::V) => {
                ends[k] = idx(o);
                k += 1;
            }
            _ => prod *= g[(idx(x), idx(y))],
        }
    }
    debug_assert_eq!(k, 2);
    prod * g2[(ends[0], ends[1])]
}

/// Σ_v ∂^k(G_va G_bv)/∂h_ab^k from the monomial list.
pub fn analytic_product_derivative(g: &DMatrix<Complex64>, g2: &DMatrix<Complex64>, a: usize, b: usize, order: usize) -> Complex64 {
    green_product_derivative(order, a == b)
        .iter()
        .map(|m| contract_monomial(m, g, g2, a, b))
        .sum()
}

/// The same quantity by finite differences of the resolvent under the
/// symmetric perturbation h_ab = h_ba → h_ab + δ, Richardson-extrapolated.
pub fn fd_product_derivative(h: &DMatrix<f64>, z: Complex64, a: usize, b: usize, order: usize, delta: f64) -> Result<Complex64> {
    let f = |d: f64| -> Result<Complex64> {
        let mut p = h.clone();
        p[(a, b)] += d;
        if a != b {
            p[(b, a)] += d;
        }
        let g = green_by_solve(&HermitianMatrix::Real(p), z)?;
        Ok((0..h.nrows()).map(|v| g[(v, a)] * g[(b, v)]).sum())
    };
    let stencil = |d: f64| -> Result<Complex64> {
        Ok(match order {
            0 => f(0.0)?,
            1 => (f(-2.0 * d)? - f(2.0 * d)? + (f(d)? - f(-d)?) * 8.0) / (12.0 * d),
            2 => (-f(2.0 * d)? + f(d)? * 16.0 - f(0.0)? * 30.0 + f(-d)? * 16.0 - f(-2.0 * d)?) / (12.0 * d * d),
            3 => (f(2.0 * d)? - f(d)? * 2.0 + f(-d)? * 2.0 - f(-2.0 * d)?) / (2.0 * d * d * d),
            _ => return Err(LabError::Config(format!("derivative order {order} not supported"))),
        })
    };
    let coarse = stencil(delta)?;
    let fine = stencil(0.5 * delta)?;
    let p = if order == 3 { 4.0 } else { 16.0 };
    Ok((fine * p - coarse) / (p - 1.0))
}

/// s^{(k)}_ab(t) = (1 − e^{-t})^{(k−2)/2} c^{(k)}(√N h_ab) for the generic
/// endpoint, whose entries are √S_ab times a draw of `law`.
pub fn scaled_cumulant(profile: &VarianceProfile, law: EntryLaw, k: usize, t: f64) -> Result<DMatrix<f64>> {
    let kappa = law.cumulants()?.get(k);
    let n = profile.n() as f64;
    let time = (-(-t).exp_m1()).powf((k as f64 - 2.0) / 2.0);
    Ok(profile.matrix().map(|s| time * (n * s).powf(k as f64 / 2.0) * kappa))
}

#[derive(Clone, Debug)]
pub struct K3K4Report {
    pub n: usize,
    pub z: Complex64,
    pub t: f64,
    pub k3: Stats,
    pub k4: Stats,
    pub im_m: Stats,
    /// Contribution of every off-diagonal monomial (diagonal a = b terms
    /// are folded into the totals only).
    pub k3_families: Vec<(String, Stats)>,
    pub k4_families: Vec<(String, Stats)>,
    pub failures: Vec<TrialFailure>,
}

impl K3K4Report {
    /// N^{1/2}|K₃|
    pub fn k3_scaled(&self) -> f64 {
        (self.n as f64).sqrt() * self.k3.mean.abs()
    }

    /// (Nη / E[Im m_N]) |K₄|
    pub fn k4_scaled(&self) -> f64 {
        self.n as f64 * self.z.im / self.im_m.mean * self.k4.mean.abs()
    }
}

/// Monte-Carlo estimates of
///   K₃ = N^{-5/2} Σ s⁽³⁾_ab E[Im ∂²(G_va G_bv)/∂h_ab²],
///   K₄ = N^{-3}   Σ s⁽⁴⁾_ab E[Im ∂³(G_va G_bv)/∂h_ab³]
/// along flow 2 at time t.
pub fn k3_k4_terms(spec: &FlowSpec, z: Complex64, t: f64, trials: usize, master_seed: u64, workers: usize) -> Result<K3K4Report> {
    if spec.kind != FlowKind::Flow2 {
        return Err(LabError::Config("third and fourth order terms belong to flow 2".into()));
    }
    if spec.beta != Beta::Real {
        return Err(LabError::Config("the monomial expansion is implemented for real symmetric matrices".into()));
    }
    flow_coefficients(t)?;
    let s3 = scaled_cumulant(&spec.profile, spec.law, 3, t)?;
    let s4 = scaled_cumulant(&spec.profile, spec.law, 4, t)?;
    let n = spec.n();
    let nf = n as f64;
    let off3 = green_product_derivative(2, false);
    let off4 = green_product_derivative(3, false);
    let dia3 = green_product_derivative(2, true);
    let dia4 = green_product_derivative(3, true);
    let (w3, w4) = (nf.powf(-2.5), nf.powi(-3));
    let out = parallel_mc(trials, master_seed, workers, |_, seed| {
        let h = sample_flow(spec, t, seed)?;
        let sample = eigen_decompose(&h, true)?;
        let g = sample.green_matrix(z)?;
        let g2 = sample.green_power(z, 2)?;
        let mut fam3 = vec![0.0; off3.len()];
        let mut fam4 = vec![0.0; off4.len()];
        let (mut d3, mut d4) = (0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                let (c3, c4) = (s3[(a, b)], s4[(a, b)]);
                if a == b {
                    let v3: Complex64 = dia3.iter().map(|m| contract_monomial(m, &g, &g2, a, a)).sum();
                    let v4: Complex64 = dia4.iter().map(|m| contract_monomial(m, &g, &g2, a, a)).sum();
                    d3 += c3 * v3.im;
                    d4 += c4 * v4.im;
                    continue;
                }
                if c3 != 0.0 {
                    for (k, m) in off3.iter().enumerate() {
                        fam3[k] += c3 * contract_monomial(m, &g, &g2, a, b).im;
                    }
                }
                if c4 != 0.0 {
                    for (k, m) in off4.iter().enumerate() {
                        fam4[k] += c4 * contract_monomial(m, &g, &g2, a, b).im;
                    }
                }
            }
        }
        let k3 = w3 * (fam3.iter().sum::<f64>() + d3);
        let k4 = w4 * (fam4.iter().sum::<f64>() + d4);
        let mut row = vec![k3, k4, sample.m_n(z).im];
        row.extend(fam3.iter().map(|v| w3 * v));
        row.extend(fam4.iter().map(|v| w4 * v));
        Ok(row)
    })?;
    let cols = out.column_stats();
    if cols.is_empty() {
        return Err(LabError::InconclusiveBudget("every trial failed".into()));
    }
    let k3_families = off3.iter().enumerate().map(|(k, m)| (m.to_string(), cols[3 + k])).collect();
    let k4_families = off4
        .iter()
        .enumerate()
        .map(|(k, m)| (m.to_string(), cols[3 + off3.len() + k]))
        .collect();
    Ok(K3K4Report {
        n,
        z,
        t,
        k3: cols[0],
        k4: cols[1],
        im_m: cols[2],
        k3_families,
        k4_families,
        failures: out.failures,
    })
}

#[derive(Clone, Debug)]
pub struct GronwallReport {
    pub n: usize,
    pub z: Complex64,
    pub times: Vec<f64>,
    pub means: Vec<Stats>,
    pub initial: Stats,
    pub bound: f64,
    pub failures: Vec<TrialFailure>,
}

impl GronwallReport {
    pub fn max_mean(&self) -> f64 {
        self.means.iter().map(|s| s.mean).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_mean() <= self.bound
    }
}

/// E[Im m_N(t, z)] along a time grid with common endpoints per trial;
/// passes when the maximum stays below C·E[Im m_N(0, z)] + c·N^{-1/3}.
pub fn gronwall_band(
    spec: &FlowSpec,
    z: Complex64,
    times: &[f64],
    trials: usize,
    master_seed: u64,
    workers: usize,
) -> Result<GronwallReport> {
    const C: f64 = 3.0;
    const C_SMALL: f64 = 3.0;
    for &t in times {
        flow_coefficients(t)?;
    }
    let out = parallel_mc(trials, master_seed, workers, |_, seed| {
        let ends = spec.endpoints(seed)?;
        let mut row = Vec::with_capacity(times.len() + 1);
        for &t in std::iter::once(&0.0).chain(times) {
            let eig = eigen_decompose(&flow_at(&ends, t)?, false)?;
            row.push(im_m_n(&eig.eigenvalues, z.re, z.im));
        }
        Ok(row)
    })?;
    let cols = out.column_stats();
    if cols.is_empty() {
        return Err(LabError::InconclusiveBudget("every trial failed".into()));
    }
    let initial = cols[0];
    let n = spec.n();
    Ok(GronwallReport {
        n,
        z,
        times: times.to_vec(),
        means: cols[1..].to_vec(),
        initial,
        bound: C * initial.mean + C_SMALL * (n as f64).powf(-1.0 / 3.0),
        failures: out.failures,
    })
}

/// Relative residual between ∂G_ij/∂h_ab = −(G_ia G_bj + G_ib G_aj)/(1 + δ_ab)
/// and a fourth-order central difference of the resolvent.
pub fn diff_rule_check(h: &HermitianMatrix, z: Complex64, ab: (usize, usize), ij: (usize, usize)) -> Result<f64> {
    diff_rule_residual(h, z, ab, ij, true)
}

/// As `diff_rule_check`, optionally dropping the 1/(1 + δ_ab) factor.
pub fn diff_rule_residual(h: &HermitianMatrix, z: Complex64, ab: (usize, usize), ij: (usize, usize), halve_diagonal: bool) -> Result<f64> {
    let (a, b) = ab;
    let (i, j) = ij;
    let n = h.n();
    if a >= n || b >= n || i >= n || j >= n {
        return Err(LabError::InvalidDimension(a.max(b).max(i).max(j), n));
    }
    let g = green_by_solve(h, z)?;
    let factor = if a == b && halve_diagonal { 0.5 } else { 1.0 };
    let analytic = -(g[(i, a)] * g[(b, j)] + g[(i, b)] * g[(a, j)]) * factor;
    let scale = h.max_abs().max(1.0);
    let d = 1e-3 * scale;
    let entry = |delta: f64| -> Result<Complex64> {
        let mut p = h.as_complex();
        p[(a, b)] += delta;
        if a != b {
            p[(b, a)] += delta;
        }
        let hp = match h {
            HermitianMatrix::Real(_) => HermitianMatrix::Real(p.map(|c| c.re)),
            HermitianMatrix::Complex(_) => HermitianMatrix::Complex(p),
        };
        Ok(green_by_solve(&hp, z)?[(i, j)])
    };
    let fd = (entry(-2.0 * d)? - entry(2.0 * d)? + (entry(d)? - entry(-d)?) * 8.0) / (12.0 * d);
    Ok((fd - analytic).norm() / analytic.norm().max(1e-300))
}
