//! Semicircle law: Stieltjes transform, density, distribution function,
//! classical locations and the spectral domains used near the edge.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// E + iη together with κ = min(|E - 2|, |E + 2|).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPoint {
    pub e: f64,
    pub eta: f64,
    pub kappa: f64,
}

impl SpectralPoint {
    pub fn new(e: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(LabError::WrongHalfPlane { re: e, im: eta });
        }
        Ok(Self { e, eta, kappa: (e - 2.0).abs().min((e + 2.0).abs()) })
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.e, self.eta)
    }
}

/// The root of m² + zm + 1 = 0 in the upper half-plane.
pub fn m_sc(z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(LabError::WrongHalfPlane { re: z.re, im: z.im });
    }
    Ok(m_sc_unchecked(z))
}

pub(crate) fn m_sc_unchecked(z: Complex64) -> Complex64 {
    let r = (z * z - 4.0).sqrt();
    // The larger root is free of cancellation; the other is its reciprocal
    // since the roots multiply to 1.
    let a = (-z + r) * 0.5;
    let b = (-z - r) * 0.5;
    let big = if a.norm() >= b.norm() { a } else { b };
    let small = big.inv();
    if big.im > small.im { big } else { small }
}

pub fn sc_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * PI)
    }
}

pub fn sc_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI
    }
}

/// γ_j with sc_cdf(γ_j) = j/n, by safeguarded Newton iteration.
pub fn classical_location(j: usize, n: usize) -> Result<f64> {
    if n == 0 || j == 0 || j > n {
        return Err(LabError::Config(format!("index {j} outside 1..={n}")));
    }
    if j == n {
        return Ok(2.0);
    }
    Ok(sc_quantile(j as f64 / n as f64))
}

/// Inverse of `sc_cdf` on (0, 1).
pub fn sc_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return -2.0;
    }
    if p >= 1.0 {
        return 2.0;
    }
    if p == 0.5 {
        return 0.0;
    }
    // Near the edges 1 - F(x) ≈ (2 - x)^{3/2} · 2/(3π).
    let mut x = if p > 0.5 {
        2.0 - (1.5 * PI * (1.0 - p)).powf(2.0 / 3.0)
    } else {
        -2.0 + (1.5 * PI * p).powf(2.0 / 3.0)
    };
    let (mut lo, mut hi) = (-2.0, 2.0);
    x = x.clamp(lo, hi);
    for _ in 0..200 {
        let f = sc_cdf(x) - p;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = sc_density(x);
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-16 {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Parameters of the edge domain
/// -C₁N^{-2/3} ≤ E - 2 ≤ C₂N^{-2/3+ε}, N^{-1+ε} ≤ η ≤ N^{-2/3-ε}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeDomainSpec {
    pub epsilon: f64,
    pub c1: f64,
    pub c2: f64,
    pub n: usize,
}

impl EdgeDomainSpec {
    pub fn new(n: usize, epsilon: f64) -> Self {
        Self { epsilon, c1: 1.0, c2: 1.0, n }
    }

    pub fn e_range(&self) -> (f64, f64) {
        let nf = self.n as f64;
        (
            2.0 - self.c1 * nf.powf(-2.0 / 3.0),
            2.0 + self.c2 * nf.powf(-2.0 / 3.0 + self.epsilon),
        )
    }

    pub fn eta_range(&self) -> (f64, f64) {
        let nf = self.n as f64;
        (nf.powf(-1.0 + self.epsilon), nf.powf(-2.0 / 3.0 - self.epsilon))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let (elo, ehi) = self.e_range();
        let (hlo, hhi) = self.eta_range();
        let tol = 1e-12;
        in_global_domain(z, self.n, self.epsilon)
            && z.re >= elo - tol
            && z.re <= ehi + tol
            && z.im >= hlo * (1.0 - tol)
            && z.im <= hhi * (1.0 + tol)
    }

    /// `counts.0` energies (linear) by `counts.1` heights (log-spaced).
    pub fn grid(&self, counts: (usize, usize)) -> Result<Vec<Complex64>> {
        let (ne, nh) = counts;
        if ne == 0 || nh == 0 {
            return Err(LabError::InvalidGrid(format!("{ne} x {nh} grid requested")));
        }
        let (elo, ehi) = self.e_range();
        let (hlo, hhi) = self.eta_range();
        if !(hlo < hhi) {
            return Err(LabError::InvalidGrid(format!(
                "empty η range [{hlo:e}, {hhi:e}] at N = {}",
                self.n
            )));
        }
        let lin = |a: f64, b: f64, k: usize, m: usize| {
            if m == 1 { 0.5 * (a + b) } else { a + (b - a) * k as f64 / (m - 1) as f64 }
        };
        let mut out = Vec::with_capacity(ne * nh);
        for i in 0..ne {
            let e = lin(elo, ehi, i, ne);
            for k in 0..nh {
                let eta = lin(hlo.ln(), hhi.ln(), k, nh).exp();
                out.push(Complex64::new(e, eta));
            }
        }
        Ok(out)
    }
}

pub fn in_edge_domain(z: Complex64, spec: &EdgeDomainSpec) -> bool {
    spec.contains(z)
}

pub fn edge_grid(spec: &EdgeDomainSpec, counts: (usize, usize)) -> Result<Vec<Complex64>> {
    spec.grid(counts)
}

/// |E| ≤ 5, N^{-1+ε} ≤ η ≤ 10.
pub fn in_global_domain(z: Complex64, n: usize, epsilon: f64) -> bool {
    let nf = n as f64;
    z.re.abs() <= 5.0 && z.im >= nf.powf(-1.0 + epsilon) * (1.0 - 1e-12) && z.im <= 10.0
}

/// The comparison scale of Im m_sc: √(κ+η) inside the bulk, η/√(κ+η) outside.
pub fn im_msc_scale(p: &SpectralPoint) -> f64 {
    let r = (p.kappa + p.eta).sqrt();
    if p.e.abs() <= 2.0 { r } else { p.eta / r }
}

/// Fitted constants (c, C) with c·scale ≤ Im m_sc ≤ C·scale over `points`.
pub fn im_msc_band(points: &[SpectralPoint]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for p in points {
        let r = m_sc_unchecked(p.z()).im / im_msc_scale(p);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}
