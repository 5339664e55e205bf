//! Green functions G(z) = (H - z)^{-1} from one eigen-decomposition, and the
//! diagnostics built on them: Ward identities, local-law deviations,
//! rigidity, delocalization and the edge expectation of Im m_N.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::ensembles::{EnsembleSpec, HermitianMatrix};
use crate::error::{LabError, Result};
use crate::linalg;
use crate::mc::{parallel_mc, Stats};
use crate::rng::CounterRng;
use crate::semicircle::{classical_location, in_global_domain, m_sc, EdgeDomainSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum Eigenvectors {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl Eigenvectors {
    /// Component i of eigenvector k.
    #[inline]
    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        match self {
            Eigenvectors::Real(u) => Complex64::new(u[(i, k)], 0.0),
            Eigenvectors::Complex(u) => u[(i, k)],
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Eigenvectors::Real(u) => u.nrows(),
            Eigenvectors::Complex(u) => u.nrows(),
        }
    }

    /// max |U*U - I|.
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.n();
        match self {
            Eigenvectors::Real(u) => (u.transpose() * u - DMatrix::identity(n, n)).amax(),
            Eigenvectors::Complex(u) => (u.adjoint() * u - DMatrix::<Complex64>::identity(n, n))
                .iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max),
        }
    }
}

/// Sorted eigenvalues, optional eigenvectors, and the seed they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSample {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<Eigenvectors>,
    pub seed: Option<u64>,
}

impl SpectralSample {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("empty spectrum")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn vectors(&self) -> Result<&Eigenvectors> {
        self.eigenvectors
            .as_ref()
            .ok_or_else(|| LabError::Config("this operation needs eigenvectors".into()))
    }

    /// m_N(z) = (1/N) Σ 1/(λ_j - z).
    pub fn m_n(&self, z: Complex64) -> Complex64 {
        m_n(&self.eigenvalues, z)
    }

    /// G_ij(z) = Σ_k u_k(i) conj(u_k(j)) / (λ_k - z).
    pub fn green_entry(&self, z: Complex64, i: usize, j: usize) -> Result<Complex64> {
        let u = self.vectors()?;
        Ok(self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| u.get(i, k) * u.get(j, k).conj() / (l - z))
            .sum())
    }

    /// Row i of G(z).
    pub fn green_row(&self, z: Complex64, i: usize) -> Result<Vec<Complex64>> {
        let u = self.vectors()?;
        let n = self.n();
        let w: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| u.get(i, k) / (l - z))
            .collect();
        Ok((0..n)
            .map(|j| (0..n).map(|k| w[k] * u.get(j, k).conj()).sum())
            .collect())
    }

    /// Column j of G(z).
    pub fn green_column(&self, z: Complex64, j: usize) -> Result<Vec<Complex64>> {
        let u = self.vectors()?;
        let n = self.n();
        let w: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| u.get(j, k).conj() / (l - z))
            .collect();
        Ok((0..n)
            .map(|i| (0..n).map(|k| u.get(i, k) * w[k]).sum())
            .collect())
    }

    /// Σ_k w_k u_k u_k^*.
    pub fn spectral_function(&self, weights: &[Complex64]) -> Result<DMatrix<Complex64>> {
        let u = self.vectors()?;
        let n = self.n();
        Ok(match u {
            Eigenvectors::Real(u) => {
                let mut ur = u.clone();
                let mut ui = u.clone();
                for (k, w) in weights.iter().enumerate() {
                    ur.column_mut(k).scale_mut(w.re);
                    ui.column_mut(k).scale_mut(w.im);
                }
                let ut = u.transpose();
                let re = ur * &ut;
                let im = ui * &ut;
                DMatrix::from_fn(n, n, |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
            }
            Eigenvectors::Complex(u) => {
                let mut uw = u.clone();
                for (k, w) in weights.iter().enumerate() {
                    for x in uw.column_mut(k).iter_mut() {
                        *x *= *w;
                    }
                }
                uw * u.adjoint()
            }
        })
    }

    /// Full G(z).
    pub fn green_matrix(&self, z: Complex64) -> Result<DMatrix<Complex64>> {
        let w: Vec<Complex64> = self.eigenvalues.iter().map(|&l| (l - z).inv()).collect();
        self.spectral_function(&w)
    }

    /// G(z)^p.
    pub fn green_power(&self, z: Complex64, p: i32) -> Result<DMatrix<Complex64>> {
        let w: Vec<Complex64> = self.eigenvalues.iter().map(|&l| (l - z).powi(-p)).collect();
        self.spectral_function(&w)
    }
}

pub fn m_n(eigenvalues: &[f64], z: Complex64) -> Complex64 {
    let s: Complex64 = eigenvalues.iter().map(|&l| (l - z).inv()).sum();
    s / eigenvalues.len() as f64
}

/// Im m_N(z) without forming complex numbers: (1/N) Σ η / ((λ - E)² + η²).
pub fn im_m_n(eigenvalues: &[f64], e: f64, eta: f64) -> f64 {
    let s: f64 = eigenvalues.iter().map(|&l| eta / ((l - e).powi(2) + eta * eta)).sum();
    s / eigenvalues.len() as f64
}

pub fn eigen_decompose(h: &HermitianMatrix, with_vectors: bool) -> Result<SpectralSample> {
    let (eigenvalues, eigenvectors) = match (h, with_vectors) {
        (HermitianMatrix::Real(m), false) => (linalg::sym_eigenvalues(m)?, None),
        (HermitianMatrix::Complex(m), false) => (linalg::herm_eigenvalues(m)?, None),
        (HermitianMatrix::Real(m), true) => {
            let (v, u) = linalg::sym_eigen(m)?;
            (v, Some(Eigenvectors::Real(u)))
        }
        (HermitianMatrix::Complex(m), true) => {
            let (v, u) = linalg::herm_eigen(m)?;
            (v, Some(Eigenvectors::Complex(u)))
        }
    };
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(LabError::NumericFailure("non-finite eigenvalue".into()));
    }
    Ok(SpectralSample { eigenvalues, eigenvectors, seed: None })
}

/// max |H - U Λ U^*|.
pub fn reconstruction_error(h: &HermitianMatrix, sample: &SpectralSample) -> Result<f64> {
    let w: Vec<Complex64> = sample.eigenvalues.iter().map(|&l| Complex64::new(l, 0.0)).collect();
    let r = sample.spectral_function(&w)?;
    let n = h.n();
    let mut m = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            m = m.max((r[(i, j)] - h.entry(i, j)).norm());
        }
    }
    Ok(m)
}

/// Direct complex solve of (H - z) X = I; the independent route to G.
pub fn green_by_solve(h: &HermitianMatrix, z: Complex64) -> Result<DMatrix<Complex64>> {
    let n = h.n();
    let mut a = h.as_complex();
    for i in 0..n {
        a[(i, i)] -= z;
    }
    a.lu()
        .try_inverse()
        .ok_or_else(|| LabError::NumericFailure("singular resolvent system".into()))
}

/// The full diagonal plus `extra` distinct off-diagonal pairs (i < j), drawn
/// from the stream of `seed`.
pub fn default_probes(n: usize, extra: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let total = n * (n - 1) / 2;
    let want = extra.min(total);
    let mut rng = CounterRng::new(seed);
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < want {
        let i = (rng.open01() * n as f64) as usize;
        let j = (rng.open01() * n as f64) as usize;
        if i != j {
            seen.insert((i.min(j), i.max(j)));
        }
    }
    out.extend(seen);
    out
}

/// m_N and selected G_ij over a list of spectral parameters.
#[derive(Clone, Debug)]
pub struct ResolventGrid {
    pub zs: Vec<Complex64>,
    pub m_n: Vec<Complex64>,
    pub probes: Vec<(usize, usize)>,
    /// probe_values[z_index][probe_index]
    pub probe_values: Vec<Vec<Complex64>>,
    pub seed: Option<u64>,
}

pub fn green_function(sample: &SpectralSample, zs: &[Complex64], probes: &[(usize, usize)]) -> Result<ResolventGrid> {
    let mut m = Vec::with_capacity(zs.len());
    let mut vals = Vec::with_capacity(zs.len());
    for &z in zs {
        if !(z.im > 0.0) {
            return Err(LabError::WrongHalfPlane { re: z.re, im: z.im });
        }
        m.push(sample.m_n(z));
        let row: Result<Vec<Complex64>> = probes.iter().map(|&(i, j)| sample.green_entry(z, i, j)).collect();
        vals.push(if probes.is_empty() { Vec::new() } else { row? });
    }
    Ok(ResolventGrid {
        zs: zs.to_vec(),
        m_n: m,
        probes: probes.to_vec(),
        probe_values: vals,
        seed: sample.seed,
    })
}

/// Largest relative residual of Σ_j |G_ij|² = Im G_ii / η over `rows`.
pub fn ward_check(sample: &SpectralSample, z: Complex64, rows: &[usize]) -> Result<f64> {
    if !(z.im > 0.0) {
        return Err(LabError::WrongHalfPlane { re: z.re, im: z.im });
    }
    let mut worst = 0.0f64;
    for &i in rows {
        let row = sample.green_row(z, i)?;
        let lhs: f64 = row.iter().map(|g| g.norm_sqr()).sum();
        let rhs = row[i].im / z.im;
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    Ok(worst)
}

/// (1/N) Σ_b |G_ab G_bc|² divided by Im m_N/(Nη), for each pair (a, c).
pub fn generalized_ward_ratios(sample: &SpectralSample, z: Complex64, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let n = sample.n() as f64;
    let scale = sample.m_n(z).im / (n * z.im);
    pairs
        .iter()
        .map(|&(a, c)| {
            let ra = sample.green_row(z, a)?;
            let cc = sample.green_column(z, c)?;
            let s: f64 = ra.iter().zip(&cc).map(|(x, y)| (x * y).norm_sqr()).sum();
            Ok(s / n / scale)
        })
        .collect()
}

/// Normalized rigidity statistics |λ_j - γ_j| N^{2/3} min(j, N-j+1)^{1/3}.
pub fn rigidity_check(sample: &SpectralSample) -> Result<Vec<f64>> {
    let n = sample.n();
    let nf = n as f64;
    (1..=n)
        .map(|j| {
            let g = classical_location(j, n)?;
            let k = j.min(n - j + 1) as f64;
            Ok((sample.eigenvalues[j - 1] - g).abs() * nf.powf(2.0 / 3.0) * k.powf(1.0 / 3.0))
        })
        .collect()
}

/// max_j N·max_i |u_j(i)|².
pub fn delocalization_check(sample: &SpectralSample) -> Result<f64> {
    let u = sample.vectors()?;
    let n = sample.n();
    let mut m = 0.0f64;
    for k in 0..n {
        for i in 0..n {
            m = m.max(u.get(i, k).norm_sqr());
        }
    }
    Ok(m * n as f64)
}

/// Quantiles of the local-law ratios at one spectral parameter.
#[derive(Clone, Debug)]
pub struct LocalLawStats {
    pub z: Complex64,
    /// max_ij |G_ij - δ_ij m_sc| / (√(Im m_sc/(Nη)) + 1/(Nη)), one per trial.
    pub entry_ratios: Vec<f64>,
    /// |m_N - m_sc| · Nη, one per trial.
    pub trace_ratios: Vec<f64>,
}

impl LocalLawStats {
    pub fn entry_quantile(&self, q: f64) -> f64 {
        quantile(&self.entry_ratios, q)
    }

    pub fn trace_quantile(&self, q: f64) -> f64 {
        quantile(&self.trace_ratios, q)
    }
}

/// Empirical quantile (nearest rank).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

pub const LOCALLAW_MIN_N: usize = 10;

/// Local-law deviation ratios over `trials` samples. Entries are examined
/// in full for N ≤ 1000 and through the default probe set above that.
pub fn locallaw_deviation(
    spec: &EnsembleSpec,
    zs: &[Complex64],
    trials: usize,
    master_seed: u64,
    workers: usize,
    epsilon: f64,
) -> Result<Vec<LocalLawStats>> {
    let n = spec.n();
    if n < LOCALLAW_MIN_N {
        return Err(LabError::InvalidDimension(n, LOCALLAW_MIN_N));
    }
    for &z in zs {
        if !in_global_domain(z, n, epsilon) {
            return Err(LabError::DomainViolation(format!("{z} is outside |E| <= 5, N^(-1+eps) <= eta <= 10")));
        }
    }
    let nf = n as f64;
    let msc: Vec<Complex64> = zs.iter().map(|&z| m_sc(z)).collect::<Result<_>>()?;
    let probes = if n > 1000 { Some(default_probes(n, 200, master_seed ^ 0x5EED)) } else { None };
    let out = parallel_mc(trials, master_seed, workers, |_, seed| {
        let h = spec.sample(seed);
        let sample = eigen_decompose(&h, true)?;
        let mut row = Vec::with_capacity(2 * zs.len());
        for (&z, &m) in zs.iter().zip(&msc) {
            let eta = z.im;
            let env = (m.im / (nf * eta)).sqrt() + 1.0 / (nf * eta);
            let dev = match &probes {
                None => {
                    let g = sample.green_matrix(z)?;
                    let mut d = 0.0f64;
                    for i in 0..n {
                        for j in 0..n {
                            let t = if i == j { g[(i, j)] - m } else { g[(i, j)] };
                            d = d.max(t.norm());
                        }
                    }
                    d
                }
                Some(p) => p
                    .iter()
                    .map(|&(i, j)| {
                        let g = sample.green_entry(z, i, j)?;
                        Ok(if i == j { (g - m).norm() } else { g.norm() })
                    })
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(0.0, f64::max),
            };
            row.push(dev / env);
            row.push((sample.m_n(z) - m).norm() * nf * eta);
        }
        Ok(row)
    })?;
    if out.completed() == 0 {
        return Err(LabError::NumericFailure("every local-law trial failed".into()));
    }
    Ok(zs
        .iter()
        .enumerate()
        .map(|(k, &z)| LocalLawStats {
            z,
            entry_ratios: out.successes().map(|r| r[2 * k]).collect(),
            trace_ratios: out.successes().map(|r| r[2 * k + 1]).collect(),
        })
        .collect())
}

/// Monte-Carlo mean of Im m_N(z) at an edge spectral parameter.
#[derive(Clone, Debug)]
pub struct EdgeExpectation {
    pub n: usize,
    pub z: Complex64,
    pub stats: Stats,
    pub failures: usize,
}

impl EdgeExpectation {
    pub fn mean(&self) -> f64 {
        self.stats.mean
    }

    pub fn stderr(&self) -> f64 {
        self.stats.se()
    }

    /// N^{1/3} E[Im m_N].
    pub fn scaled(&self) -> f64 {
        self.stats.mean * (self.n as f64).powf(1.0 / 3.0)
    }
}

pub fn im_mn_edge_expectation(
    spec: &EnsembleSpec,
    z: Complex64,
    domain: &EdgeDomainSpec,
    trials: usize,
    master_seed: u64,
    workers: usize,
) -> Result<EdgeExpectation> {
    if !domain.contains(z) {
        return Err(LabError::DomainViolation(format!(
            "{z} is outside the edge domain at N = {}",
            domain.n
        )));
    }
    let out = parallel_mc(trials, master_seed, workers, |_, seed| {
        let ev = spec.sample(seed).eigenvalues()?;
        Ok(im_m_n(&ev, z.re, z.im))
    })?;
    Ok(EdgeExpectation { n: spec.n(), z, stats: out.stats(), failures: out.failures.len() })
}
