//! Generalized Wigner ensembles: entry laws, their cumulants, and sampling.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{LabError, Result};
use crate::linalg;
use crate::profile::VarianceProfile;
use crate::rng::{derive_seed, CounterRng};
use crate::special::quadrature::{panels, GaussLegendre};

/// Law of the standardized entry √N·h_ij (mean 0, variance 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum EntryLaw {
    Gaussian,
    Rademacher,
    /// Uniform on [-√3, √3].
    Uniform,
    /// (B - p)/√(p(1-p)) with B ~ Bernoulli(p).
    SkewBernoulli { p: f64 },
}

impl EntryLaw {
    pub fn name(&self) -> String {
        match self {
            EntryLaw::Gaussian => "gaussian".into(),
            EntryLaw::Rademacher => "rademacher".into(),
            EntryLaw::Uniform => "uniform".into(),
            EntryLaw::SkewBernoulli { p } => format!("skew_bernoulli({p})"),
        }
    }

    /// Parse `gaussian`, `rademacher`, `uniform` or `skew_bernoulli(p)`.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let law = match t.as_str() {
            "gaussian" | "normal" => EntryLaw::Gaussian,
            "rademacher" => EntryLaw::Rademacher,
            "uniform" => EntryLaw::Uniform,
            _ => {
                let inner = t
                    .strip_prefix("skew_bernoulli(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| LabError::UnsupportedLaw(s.to_string()))?;
                let p: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| LabError::UnsupportedLaw(s.to_string()))?;
                EntryLaw::SkewBernoulli { p }
            }
        };
        law.check()?;
        Ok(law)
    }

    pub fn check(&self) -> Result<()> {
        if let EntryLaw::SkewBernoulli { p } = *self {
            if !(p > 0.0 && p < 1.0) {
                return Err(LabError::UnsupportedLaw(format!("skew_bernoulli({p})")));
            }
        }
        Ok(())
    }

    /// Atoms and probabilities for the discrete laws.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            EntryLaw::Rademacher => Some(vec![(1.0, 0.5), (-1.0, 0.5)]),
            EntryLaw::SkewBernoulli { p } => {
                let sd = (p * (1.0 - p)).sqrt();
                Some(vec![((1.0 - p) / sd, p), (-p / sd, 1.0 - p)])
            }
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EntryLaw::Gaussian => rng.sample(StandardNormal),
            EntryLaw::Rademacher => {
                if rng.next_u64() >> 63 == 1 { 1.0 } else { -1.0 }
            }
            EntryLaw::Uniform => {
                let u: f64 = rng.random();
                (2.0 * u - 1.0) * 3f64.sqrt()
            }
            EntryLaw::SkewBernoulli { p } => {
                let u: f64 = rng.random();
                let sd = (p * (1.0 - p)).sqrt();
                if u < p { (1.0 - p) / sd } else { -p / sd }
            }
        }
    }

    /// E[X^k], exact.
    pub fn moment(&self, k: u32) -> f64 {
        match *self {
            EntryLaw::Gaussian => {
                if k % 2 == 1 {
                    0.0
                } else {
                    (1..k).step_by(2).map(|j| j as f64).product()
                }
            }
            EntryLaw::Uniform => {
                if k % 2 == 1 {
                    0.0
                } else {
                    3f64.powi(k as i32 / 2) / (k as f64 + 1.0)
                }
            }
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .map(|&(x, w)| w * x.powi(k as i32))
                .sum(),
        }
    }

    /// E|X|^k.
    pub fn abs_moment(&self, k: u32) -> f64 {
        match *self {
            EntryLaw::Gaussian => {
                // 2^{k/2} Γ((k+1)/2) / √π
                let kf = k as f64;
                2f64.powf(kf / 2.0) * gamma((kf + 1.0) / 2.0) / PI.sqrt()
            }
            EntryLaw::Uniform => 3f64.powf(k as f64 / 2.0) / (k as f64 + 1.0),
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .map(|&(x, w)| w * x.abs().powi(k as i32))
                .sum(),
        }
    }

    /// Cumulants of the standardized variable up to order 8.
    pub fn cumulants(&self) -> Result<EntryCumulants> {
        self.check()?;
        let k = match self {
            EntryLaw::Gaussian => {
                let mut k = [0.0; 9];
                k[2] = 1.0;
                k
            }
            _ => cumulants_from_moments(|j| self.moment(j)),
        };
        Ok(EntryCumulants { c2: k[2], c3: k[3], c4: k[4], higher: k[5..].to_vec() })
    }

    /// E[g(X)] exactly for discrete laws, by Gauss–Legendre otherwise.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        match *self {
            EntryLaw::Gaussian => {
                let rule = GaussLegendre::cached(64);
                let c = 1.0 / (2.0 * PI).sqrt();
                panels(&rule, -12.0, 12.0, 24, |x| c * (-0.5 * x * x).exp() * g(x))
            }
            EntryLaw::Uniform => {
                let r = 3f64.sqrt();
                let rule = GaussLegendre::cached(64);
                panels(&rule, -r, r, 8, |x| g(x) / (2.0 * r))
            }
            _ => self.atoms().unwrap().iter().map(|&(x, w)| w * g(x)).sum(),
        }
    }
}

/// κ_n = m_n - Σ_{k=1}^{n-1} C(n-1, k-1) κ_k m_{n-k}.
pub fn cumulants_from_moments<M: Fn(u32) -> f64>(moment: M) -> [f64; 9] {
    let m: Vec<f64> = (0..=8).map(&moment).collect();
    let mut k = [0.0; 9];
    for n in 1..=8usize {
        let mut s = m[n];
        for j in 1..n {
            s -= binom(n - 1, j - 1) * k[j] * m[n - j];
        }
        k[n] = s;
    }
    k
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Cumulants c^(p) of √N·h_ij.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryCumulants {
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Orders 5 through 8.
    pub higher: Vec<f64>,
}

impl EntryCumulants {
    pub fn get(&self, p: usize) -> f64 {
        match p {
            1 => 0.0,
            2 => self.c2,
            3 => self.c3,
            4 => self.c4,
            5..=8 => self.higher[p - 5],
            _ => f64::NAN,
        }
    }
}

pub fn cumulants(law: EntryLaw) -> Result<EntryCumulants> {
    law.cumulants()
}

/// Symmetry class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Beta {
    #[serde(rename = "1")]
    Real,
    #[serde(rename = "2")]
    Complex,
}

impl Beta {
    pub fn from_int(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Beta::Real),
            2 => Ok(Beta::Complex),
            _ => Err(LabError::Config(format!("beta must be 1 or 2, got {b}"))),
        }
    }

    pub fn as_int(&self) -> u8 {
        match self {
            Beta::Real => 1,
            Beta::Complex => 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub beta: Beta,
    pub profile: Arc<VarianceProfile>,
    pub law: EntryLaw,
    pub diagonal_law: EntryLaw,
}

impl EnsembleSpec {
    pub fn new(beta: Beta, profile: VarianceProfile, law: EntryLaw) -> Self {
        Self { beta, profile: Arc::new(profile), law, diagonal_law: law }
    }

    /// GOE: flat profile with doubled diagonal, Gaussian entries.
    pub fn goe(n: usize) -> Result<Self> {
        Ok(Self::new(Beta::Real, VarianceProfile::flat(n)?.modified(), EntryLaw::Gaussian))
    }

    /// GUE: flat profile, complex Gaussian off-diagonal, real N(0, 1/N) diagonal.
    pub fn gue(n: usize) -> Result<Self> {
        Ok(Self::new(Beta::Complex, VarianceProfile::flat(n)?, EntryLaw::Gaussian))
    }

    /// Gaussian invariant ensemble of the given symmetry class.
    pub fn gaussian_invariant(beta: Beta, n: usize) -> Result<Self> {
        match beta {
            Beta::Real => Self::goe(n),
            Beta::Complex => Self::gue(n),
        }
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }

    pub fn sample(&self, seed: u64) -> HermitianMatrix {
        sample_matrix(self, seed)
    }
}

/// A dense Hermitian matrix, real symmetric for β = 1.
#[derive(Clone, Debug, PartialEq)]
pub enum HermitianMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl HermitianMatrix {
    pub fn n(&self) -> usize {
        match self {
            HermitianMatrix::Real(m) => m.nrows(),
            HermitianMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn zeros(beta: Beta, n: usize) -> Self {
        match beta {
            Beta::Real => HermitianMatrix::Real(DMatrix::zeros(n, n)),
            Beta::Complex => HermitianMatrix::Complex(DMatrix::zeros(n, n)),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        match self {
            HermitianMatrix::Real(m) => Complex64::new(m[(i, j)], 0.0),
            HermitianMatrix::Complex(m) => m[(i, j)],
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.entry(i, i).re).sum()
    }

    /// a·self + b·other.
    pub fn combine(&self, a: f64, other: &HermitianMatrix, b: f64) -> Result<Self> {
        match (self, other) {
            (HermitianMatrix::Real(x), HermitianMatrix::Real(y)) => {
                Ok(HermitianMatrix::Real(x * a + y * b))
            }
            (HermitianMatrix::Complex(x), HermitianMatrix::Complex(y)) => {
                Ok(HermitianMatrix::Complex(x * Complex64::from(a) + y * Complex64::from(b)))
            }
            _ => Err(LabError::Config("cannot combine real and complex matrices".into())),
        }
    }

    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        let n = self.n();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                m = m.max((self.entry(i, j) - other.entry(i, j)).norm());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            HermitianMatrix::Real(m) => m.amax(),
            HermitianMatrix::Complex(m) => m.iter().map(|c| c.norm()).fold(0.0, f64::max),
        }
    }

    pub fn as_complex(&self) -> DMatrix<Complex64> {
        match self {
            HermitianMatrix::Real(m) => m.map(|v| Complex64::new(v, 0.0)),
            HermitianMatrix::Complex(m) => m.clone(),
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        match self {
            HermitianMatrix::Real(m) => linalg::sym_eigenvalues(m),
            HermitianMatrix::Complex(m) => linalg::herm_eigenvalues(m),
        }
    }

    pub fn largest_eigenvalue(&self) -> Result<f64> {
        self.eigenvalues()?
            .last()
            .copied()
            .ok_or_else(|| LabError::InvalidDimension(0, 1))
    }
}

/// Sample H with entries addressed by the counter-based streams of `seed`:
/// entry (i, j), i ≤ j, draws from stream (seed, i, j).
pub fn sample_matrix(spec: &EnsembleSpec, seed: u64) -> HermitianMatrix {
    let n = spec.n();
    let s = spec.profile.matrix();
    match spec.beta {
        Beta::Real => {
            let mut h = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                for i in 0..=j {
                    let mut rng = CounterRng::for_entry(seed, i, j);
                    let law = if i == j { spec.diagonal_law } else { spec.law };
                    let v = s[(i, j)].sqrt() * law.sample(&mut rng);
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
            HermitianMatrix::Real(h)
        }
        Beta::Complex => {
            let mut h = DMatrix::<Complex64>::zeros(n, n);
            for j in 0..n {
                for i in 0..=j {
                    let mut rng = CounterRng::for_entry(seed, i, j);
                    if i == j {
                        let v = s[(i, i)].sqrt() * spec.diagonal_law.sample(&mut rng);
                        h[(i, i)] = Complex64::new(v, 0.0);
                    } else {
                        let sd = (0.5 * s[(i, j)]).sqrt();
                        let re = sd * spec.law.sample(&mut rng);
                        let im = sd * spec.law.sample(&mut rng);
                        h[(i, j)] = Complex64::new(re, im);
                        h[(j, i)] = Complex64::new(re, -im);
                    }
                }
            }
            HermitianMatrix::Complex(h)
        }
    }
}

pub fn sample_goe(n: usize, seed: u64) -> Result<HermitianMatrix> {
    Ok(sample_matrix(&EnsembleSpec::goe(n)?, seed))
}

pub fn sample_gue(n: usize, seed: u64) -> Result<HermitianMatrix> {
    Ok(sample_matrix(&EnsembleSpec::gue(n)?, seed))
}

/// Smooth test functions with closed-form derivatives of every order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    Sin,
    /// 1/(x² + 1)
    Lorentzian,
}

impl TestFunction {
    pub fn derivative(&self, p: u32, x: f64) -> f64 {
        match self {
            TestFunction::Sin => (x + p as f64 * PI / 2.0).sin(),
            TestFunction::Lorentzian => {
                // 1/(1+x²) = Im 1/(x - i); d^p/dx^p (x - i)^{-1} = (-1)^p p! (x - i)^{-(p+1)}
                let fact: f64 = (1..=p).map(|i| i as f64).product();
                let w = Complex64::new(x, -1.0).powi(-(p as i32 + 1));
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact * w.im
            }
        }
    }

    /// sup_x |f^(p)(x)|, evaluated on a fine grid (attained near the origin).
    pub fn sup_derivative(&self, p: u32) -> f64 {
        match self {
            TestFunction::Sin => 1.0,
            TestFunction::Lorentzian => (0..=4000)
                .map(|i| self.derivative(p, -4.0 + 0.002 * i as f64).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Request for the truncated cumulant expansion check of
/// E[h f(h)] = Σ_{p=0}^{l-1} c^{(p+1)}(h)/p! E[f^{(p)}(h)] + R_{l+1}
/// with h = scale·X.
#[derive(Clone, Debug)]
pub struct CumulantCheck {
    pub law: EntryLaw,
    pub f: TestFunction,
    /// Highest cumulant order kept.
    pub l: usize,
    pub scale: f64,
    pub samples: usize,
    pub seed: u64,
    /// Reject the request if the 95% half-width would exceed this.
    pub max_ci_halfwidth: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CumulantReport {
    /// Monte-Carlo estimate of E[h f(h)] minus the truncated expansion.
    pub mc_residual: f64,
    pub mc_stderr: f64,
    /// Same residual with E[h f(h)] evaluated exactly (or by quadrature).
    pub exact_residual: f64,
    /// E|h|^{l+1} sup|f^{(l)}|, the scale of the remainder bound.
    pub envelope: f64,
}

pub fn verify_cumulant_expansion(req: &CumulantCheck) -> Result<CumulantReport> {
    let law = req.law;
    let l = req.l;
    if l == 0 || l > 8 {
        return Err(LabError::Config(format!("truncation order {l} outside 1..=8")));
    }
    if req.samples < 2 {
        return Err(LabError::InsufficientSamples(format!("{} samples", req.samples)));
    }
    let cum = law.cumulants()?;
    let s = req.scale;
    let f = req.f;
    let lhs_exact = law.expect(|x| s * x * f.derivative(0, s * x));
    let second = law.expect(|x| (s * x * f.derivative(0, s * x)).powi(2));
    let predicted_se = ((second - lhs_exact * lhs_exact).max(0.0) / req.samples as f64).sqrt();
    if let Some(hw) = req.max_ci_halfwidth {
        if 1.96 * predicted_se > hw {
            return Err(LabError::InsufficientSamples(format!(
                "{} samples give a 95% half-width of {:.3e}, requested {hw:e}",
                req.samples,
                1.96 * predicted_se
            )));
        }
    }
    let mut expansion = 0.0;
    let mut fact = 1.0;
    for p in 0..l {
        if p > 0 {
            fact *= p as f64;
        }
        let c = cum.get(p + 1) * s.powi(p as i32 + 1);
        if c != 0.0 {
            expansion += c / fact * law.expect(|x| f.derivative(p as u32, s * x));
        }
    }
    let stream = derive_seed(req.seed, 0xC0DE);
    let mut rng = CounterRng::new(stream);
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..req.samples {
        let h = s * law.sample(&mut rng);
        let v = h * f.derivative(0, h);
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let var = m2 / (req.samples - 1) as f64;
    Ok(CumulantReport {
        mc_residual: mean - expansion,
        mc_stderr: (var / req.samples as f64).sqrt(),
        exact_residual: lhs_exact - expansion,
        envelope: s.powi(l as i32 + 1) * law.abs_moment(l as u32 + 1) * f.sup_derivative(l as u32),
    })
}
