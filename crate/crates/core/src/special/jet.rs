//! Truncated Taylor arithmetic for exact low-order derivatives.
//!
//! A `Jet` holds the Taylor coefficients c_k = f^(k)(x0)/k! for k = 0..=4.
//! Composing elementary operations on jets propagates derivatives exactly
//! (up to rounding), without finite differences.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet(pub [f64; ORDER + 1]);

impl Jet {
    pub fn constant(c: f64) -> Self {
        let mut v = [0.0; ORDER + 1];
        v[0] = c;
        Jet(v)
    }

    /// The identity function seeded at `x`.
    pub fn variable(x: f64) -> Self {
        let mut v = [0.0; ORDER + 1];
        v[0] = x;
        v[1] = 1.0;
        Jet(v)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// k-th derivative (not the Taylor coefficient).
    pub fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.0[k] * fact
    }

    pub fn derivatives(&self) -> [f64; ORDER + 1] {
        let mut out = [0.0; ORDER + 1];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.derivative(k);
        }
        out
    }

    pub fn scale(self, s: f64) -> Self {
        Jet(self.0.map(|c| c * s))
    }

    pub fn exp(self) -> Self {
        // y' = y a'  =>  k y_k = sum_{j=1}^{k} j a_j y_{k-j}
        let a = self.0;
        let mut y = [0.0; ORDER + 1];
        y[0] = a[0].exp();
        for k in 1..=ORDER {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * a[j] * y[k - j];
            }
            y[k] = s / k as f64;
        }
        Jet(y)
    }

    pub fn recip(self) -> Self {
        let a = self.0;
        let mut y = [0.0; ORDER + 1];
        y[0] = 1.0 / a[0];
        for k in 1..=ORDER {
            let mut s = 0.0;
            for j in 1..=k {
                s += a[j] * y[k - j];
            }
            y[k] = -s / a[0];
        }
        Jet(y)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut v = self.0;
        for (a, b) in v.iter_mut().zip(rhs.0) {
            *a += b;
        }
        Jet(v)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut v = [0.0; ORDER + 1];
        for i in 0..=ORDER {
            for j in 0..=ORDER - i {
                v[i + j] += self.0[i] * rhs.0[j];
            }
        }
        Jet(v)
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        let mut v = self.0;
        v[0] += rhs;
        Jet(v)
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_square_matches_closed_form() {
        // f(x) = exp(x^2): f' = 2x f, f'' = (2 + 4x^2) f, f''' = (12x + 8x^3) f,
        // f'''' = (12 + 48x^2 + 16x^4) f
        let x = 0.7;
        let v = Jet::variable(x);
        let d = (v * v).exp().derivatives();
        let f = (x * x).exp();
        let want = [
            f,
            2.0 * x * f,
            (2.0 + 4.0 * x * x) * f,
            (12.0 * x + 8.0 * x.powi(3)) * f,
            (12.0 + 48.0 * x * x + 16.0 * x.powi(4)) * f,
        ];
        for k in 0..=ORDER {
            assert!((d[k] - want[k]).abs() < 1e-12 * want[k].abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn reciprocal_derivatives() {
        // 1/x: (-1)^k k! / x^{k+1}
        let x = 1.3;
        let d = Jet::variable(x).recip().derivatives();
        let mut fact = 1.0;
        for (k, dk) in d.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            let want = (-1f64).powi(k as i32) * fact / x.powi(k as i32 + 1);
            assert!((dk - want).abs() < 1e-12 * want.abs());
        }
    }
}
