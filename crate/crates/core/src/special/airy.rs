//! Airy function Ai and its derivative on the real line.
//!
//! Between -8 and 8 values come from local Taylor expansions around centers
//! spaced 0.25 apart. Center values are propagated with the Airy recurrence
//! from three anchors: the exact values at the origin (covering [-4, 0]), the
//! oscillatory asymptotic expansion at -8 (covering [-8, -4)), and the
//! decaying expansion at 8, stepped towards the origin so the recessive
//! solution stays stable. Outside [-8, 8] the standard
//! asymptotic expansions are accurate to better than 1e-13 relative.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{LabError, Result};

/// Ai(0) = 3^{-2/3} / Gamma(2/3).
pub const AI0: f64 = 0.355_028_053_887_817_24;
/// Ai'(0) = -3^{-1/3} / Gamma(1/3).
pub const AIP0: f64 = -0.258_819_403_792_806_8;

const SPACING: f64 = 0.25;
const REACH: f64 = 8.0;
const HALF: usize = 32; // REACH / SPACING

/// Supported range of the public entry points.
pub const AIRY_RANGE: (f64, f64) = (-15.0, 15.0);

/// Ai(x) for x in [-15, 15].
pub fn airy_ai(x: f64) -> Result<f64> {
    check_range(x)?;
    Ok(ai_pair(x).0)
}

/// Ai'(x) for x in [-15, 15].
pub fn airy_ai_prime(x: f64) -> Result<f64> {
    check_range(x)?;
    Ok(ai_pair(x).1)
}

fn check_range(x: f64) -> Result<()> {
    if !(AIRY_RANGE.0..=AIRY_RANGE.1).contains(&x) {
        return Err(LabError::RangeError(x, "[-15, 15]"));
    }
    Ok(())
}

/// (Ai(x), Ai'(x)) for any finite x. Deep in the right tail the values
/// underflow to zero gracefully.
pub fn ai_pair(x: f64) -> (f64, f64) {
    if x > REACH {
        asymptotic_right(x)
    } else if x < -REACH {
        asymptotic_left(-x)
    } else {
        let table = centers();
        let k = ((x + REACH) / SPACING).round() as usize;
        let k = k.min(2 * HALF);
        let c = -REACH + k as f64 * SPACING;
        let (a, ap) = table[k];
        taylor_step(c, a, ap, x - c)
    }
}

/// Propagate (y, y') of an Airy solution from c to c + h by its Taylor series.
fn taylor_step(c: f64, y: f64, yp: f64, h: f64) -> (f64, f64) {
    // a_{k+2} = (c a_k + a_{k-1}) / ((k+1)(k+2))
    let mut a = [y, yp, 0.5 * c * y];
    let mut val = a[0] + h * (a[1] + h * a[2]);
    let mut der = a[1] + 2.0 * h * a[2];
    let mut hp = h * h; // h^k for the newest coefficient index k = 2
    let scale = y.abs() + yp.abs();
    // Coefficients can vanish individually (every third one at c = 0), so
    // stop only after a run of negligible terms.
    let mut quiet = 0;
    for k in 1..200usize {
        let next = (c * a[1] + a[0]) / (((k + 1) * (k + 2)) as f64);
        a = [a[1], a[2], next];
        let dterm = (k + 2) as f64 * next * hp;
        hp *= h;
        let term = next * hp;
        der += dterm;
        val += term;
        if term.abs() + dterm.abs() <= 1e-18 * scale {
            quiet += 1;
            if quiet == 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    (val, der)
}

fn centers() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![(0.0, 0.0); 2 * HALF + 1];
        t[HALF] = (AI0, AIP0);
        for k in (HALF / 2..HALF).rev() {
            let c = -REACH + (k + 1) as f64 * SPACING;
            let (a, ap) = t[k + 1];
            t[k] = taylor_step(c, a, ap, -SPACING);
        }
        t[0] = asymptotic_left(REACH);
        for k in 1..HALF / 2 {
            let c = -REACH + (k - 1) as f64 * SPACING;
            let (a, ap) = t[k - 1];
            t[k] = taylor_step(c, a, ap, SPACING);
        }
        t[2 * HALF] = asymptotic_right(REACH);
        for k in (HALF + 1..2 * HALF).rev() {
            let c = -REACH + (k + 1) as f64 * SPACING;
            let (a, ap) = t[k + 1];
            t[k] = taylor_step(c, a, ap, -SPACING);
        }
        t
    })
}

/// Coefficients u_k, v_k of the Airy asymptotic expansions, truncated where
/// they stop being useful for zeta >= 10.
fn uv() -> &'static [(f64, f64)] {
    static UV: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    UV.get_or_init(|| {
        let mut out = vec![(1.0, 1.0)];
        let mut u = 1.0;
        for k in 1..40 {
            let kf = k as f64;
            u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
                / ((2.0 * kf - 1.0) * 216.0 * kf);
            let v = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u;
            out.push((u, v));
        }
        out
    })
}

fn asymptotic_right(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x * x.sqrt();
    let (mut su, mut sv) = (0.0, 0.0);
    let mut zp = 1.0;
    let mut last = f64::INFINITY;
    for (k, &(u, v)) in uv().iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let term = u / zp;
        if term.abs() > last {
            break;
        }
        last = term.abs();
        su += sign * term;
        sv += sign * v / zp;
        zp *= zeta;
    }
    let e = (-zeta).exp() / (2.0 * PI.sqrt());
    let q = x.powf(0.25);
    (e / q * su, -e * q * sv)
}

fn asymptotic_left(z: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * z * z.sqrt();
    let (mut pu, mut qu, mut pv, mut qv) = (0.0, 0.0, 0.0, 0.0);
    let mut zp = 1.0;
    let mut last = f64::INFINITY;
    for (k, &(u, v)) in uv().iter().enumerate() {
        let term = u / zp;
        if term.abs() > last {
            break;
        }
        last = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            pu += sign * term;
            pv += sign * v / zp;
        } else {
            qu += sign * term;
            qv += sign * v / zp;
        }
        zp *= zeta;
    }
    let phase = zeta - PI / 4.0;
    let (s, c) = phase.sin_cos();
    let r = 1.0 / PI.sqrt();
    let q = z.powf(0.25);
    let ai = r / q * (c * pu + s * qu);
    let aip = r * q * (s * pv - c * qv);
    (ai, aip)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series summed directly; accurate for moderate |x|.
    fn maclaurin(x: f64) -> (f64, f64) {
        let (mut y, mut yp) = (0.0, 0.0);
        let mut a = [AI0, AIP0, 0.0];
        y += a[0] + a[1] * x;
        yp += a[1];
        let mut xp = x * x;
        for k in 1..300usize {
            let next = a[0] / ((k + 1) * (k + 2)) as f64;
            a = [a[1], a[2], next];
            yp += (k + 2) as f64 * next * xp;
            xp *= x;
            y += next * xp;
        }
        (y, yp)
    }

    /// K_nu(zeta) from its integral representation, trapezoid rule on the
    /// doubly exponentially decaying integrand.
    fn bessel_k(nu: f64, zeta: f64) -> f64 {
        let h: f64 = 1e-3;
        let mut sum = 0.5;
        let mut t = h;
        loop {
            let f = (-zeta * (t.cosh() - 1.0)).exp() * (nu * t).cosh();
            if f < 1e-18 * sum || t > 30.0 {
                break;
            }
            sum += f;
            t += h;
        }
        sum * h * (-zeta).exp()
    }

    #[test]
    fn matches_bessel_integral_on_right_half_line() {
        for i in 1..=60 {
            let x = 0.25 * i as f64;
            let zeta = 2.0 / 3.0 * x.powf(1.5);
            let ai = (x / 3.0).sqrt() / PI * bessel_k(1.0 / 3.0, zeta);
            let aip = -x / (PI * 3f64.sqrt()) * bessel_k(2.0 / 3.0, zeta);
            let (a, ap) = ai_pair(x);
            assert!((a - ai).abs() <= 1e-12 * ai.abs() + 1e-15, "x={x}: {a} vs {ai}");
            assert!((ap - aip).abs() <= 1e-12 * aip.abs() + 1e-15, "x={x}: {ap} vs {aip}");
        }
    }

    #[test]
    fn origin_matches_gamma_closed_form() {
        let ai0 = 3f64.powf(-2.0 / 3.0) / statrs::function::gamma::gamma(2.0 / 3.0);
        let aip0 = -3f64.powf(-1.0 / 3.0) / statrs::function::gamma::gamma(1.0 / 3.0);
        assert!((airy_ai(0.0).unwrap() - ai0).abs() < 1e-14);
        assert!((airy_ai_prime(0.0).unwrap() - aip0).abs() < 1e-14);
    }

    #[test]
    fn satisfies_airy_equation() {
        let h = 1e-3;
        for i in 0..=120 {
            let x = -14.5 + 0.24 * i as f64;
            let f = |y: f64| ai_pair(y).0;
            let second = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            assert!((second - x * f(x)).abs() < 2e-7 * (1.0 + x * x), "x={x}");
            let dfd = (f(x + h) - f(x - h)) / (2.0 * h);
            assert!((dfd - ai_pair(x).1).abs() < 1e-6 * (1.0 + x * x), "x={x}");
        }
    }

    #[test]
    fn large_argument_asymptotics() {
        let x: f64 = 10.0;
        let lead = (-(2.0 / 3.0) * x.powf(1.5)).exp() / (2.0 * PI.sqrt() * x.powf(0.25));
        let a = airy_ai(x).unwrap();
        // First correction of the asymptotic series is -5/(72 zeta).
        let zeta = 2.0 / 3.0 * x.powf(1.5);
        assert!((a / lead - (1.0 - 5.0 / (72.0 * zeta))).abs() < 1e-3);
        assert!(a > 0.0 && a < lead);
    }

    #[test]
    fn value_at_origin() {
        assert!((airy_ai(0.0).unwrap() - AI0).abs() < 1e-16);
        assert!((airy_ai_prime(0.0).unwrap() - AIP0).abs() < 1e-16);
    }

    #[test]
    fn agrees_with_maclaurin_series() {
        for i in 0..=160 {
            let x = -4.0 + 0.05 * i as f64;
            let (a, ap) = ai_pair(x);
            let (b, bp) = maclaurin(x);
            assert!((a - b).abs() < 1e-13, "x={x}: {a} vs {b}");
            assert!((ap - bp).abs() < 1e-12, "x={x}: {ap} vs {bp}");
        }
    }

    #[test]
    fn table_matches_asymptotics_near_the_switch() {
        for x in [7.0f64, 7.5, 7.75] {
            let (a, ap) = ai_pair(x);
            let (b, bp) = asymptotic_right(x);
            assert!((a - b).abs() < 1e-11 * b.abs(), "x={x}");
            assert!((ap - bp).abs() < 1e-11 * bp.abs(), "x={x}");
            let (a, ap) = ai_pair(-x);
            let (b, bp) = asymptotic_left(x);
            assert!((a - b).abs() < 1e-11 && (ap - bp).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn propagation_anchors_agree() {
        let t = centers();
        let (b, bp) = taylor_step(SPACING, t[HALF + 1].0, t[HALF + 1].1, -SPACING);
        assert!((b - AI0).abs() < 1e-14 && (bp - AIP0).abs() < 1e-14);
        let k = HALF / 2;
        let c = -REACH + (k - 1) as f64 * SPACING;
        let (b, bp) = taylor_step(c, t[k - 1].0, t[k - 1].1, SPACING);
        assert!((b - t[k].0).abs() < 1e-12 && (bp - t[k].1).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert!(matches!(airy_ai(15.5), Err(LabError::RangeError(..))));
        assert!(airy_ai_prime(-16.0).is_err());
    }
}
