//! Special functions: modified Bessel `K` of real order, Bessel `J1`, Gamma,
//! Riemann zeta and the polylogarithm at one half.
//!
//! `K_beta` is evaluated straight from its integral representation
//! `K_beta(q) = ∫_0^∞ cosh(beta t) exp(-q cosh t) dt`, which holds for every real
//! order and needs no special casing at integer or half-integer `beta`.

use crate::error::{Error, Result};
use crate::quad::{GaussLegendre, KahanSum};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Distance to an integer below which an order is flagged as (half-)integer.
pub const INTEGER_FLAG_TOLERANCE: f64 = 1e-6;

/// Order `beta > 0` of a modified Bessel function.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RealOrder(f64);

impl RealOrder {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Bessel order must be finite and positive, got {beta}"
            )));
        }
        Ok(Self(beta))
    }

    /// Order associated with a scaling profile of value `f0` at the origin: `beta^2 = 1/4 + f0/2`.
    pub fn from_f0(f0: f64) -> Result<Self> {
        if !(f0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "F(0) must be positive, got {f0}"
            )));
        }
        Self::new((0.25 + 0.5 * f0).sqrt())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// True when `beta` lies within [`INTEGER_FLAG_TOLERANCE`] of an integer.
    pub fn near_integer(self) -> bool {
        (self.0 - self.0.round()).abs() < INTEGER_FLAG_TOLERANCE
    }

    /// True when `2 beta` lies within tolerance of an odd integer.
    pub fn near_half_integer(self) -> bool {
        let h = self.0 - 0.5;
        (h - h.round()).abs() < INTEGER_FLAG_TOLERANCE
    }
}

fn gl20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Upper integration limit beyond which the scaled integrand has dropped by `e^-40`
/// relative to its peak.
fn k_cutoff(beta: f64, q: f64) -> f64 {
    let log_g = |t: f64| ln_cosh(beta * t) - q * (t.cosh() - 1.0);
    let step = 0.05;
    let mut t = 0.0;
    let mut peak = log_g(0.0);
    loop {
        t += step;
        let v = log_g(t);
        if v > peak {
            peak = v;
        } else if v < peak - 40.0 {
            return t;
        }
        if t > 60.0 {
            return t;
        }
    }
}

/// `exp(q) K_beta(q)` on the truncated interval `[0, t_max]`.
pub(crate) fn k_scaled_on(beta: f64, q: f64, t_max: f64) -> f64 {
    let rule = gl20();
    let f = |t: f64| (ln_cosh(beta * t) - q * (t.cosh() - 1.0)).exp();
    let mut panels = 4;
    let mut prev = rule.integrate(f, 0.0, t_max, panels);
    loop {
        panels *= 2;
        let next = rule.integrate(f, 0.0, t_max, panels);
        if (next - prev).abs() <= 1e-15 * next.abs() || panels >= 2048 {
            return next;
        }
        prev = next;
    }
}

fn check_argument(q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::DivergenceGuard {
            function: "bessel_k",
            arg: "q",
            value: q,
        });
    }
    Ok(())
}

/// Exponentially scaled modified Bessel function `exp(q) K_beta(q)` for any real order.
pub fn bessel_k_scaled(beta: f64, q: f64) -> Result<f64> {
    check_argument(q)?;
    let beta = beta.abs();
    Ok(k_scaled_on(beta, q, k_cutoff(beta, q)))
}

/// Modified Bessel function of the second kind `K_beta(q)`, `q > 0`.
pub fn bessel_k(beta: RealOrder, q: f64) -> Result<f64> {
    Ok(bessel_k_scaled(beta.value(), q)? * (-q).exp())
}

/// Logarithmic derivative `K'_beta(q) / K_beta(q)` via the recurrence
/// `K'_beta = -(K_{beta-1} + K_{beta+1}) / 2`.
pub fn bessel_k_log_derivative(beta: f64, q: f64) -> Result<f64> {
    let k = bessel_k_scaled(beta, q)?;
    let km = bessel_k_scaled(beta - 1.0, q)?;
    let kp = bessel_k_scaled(beta + 1.0, q)?;
    Ok(-0.5 * (km + kp) / k)
}

/// Bessel function of the first kind of order one, from
/// `J1(x) = (1/2π) ∫_0^{2π} cos(t - x sin t) dt`.
///
/// The integrand is periodic, so the trapezoid rule converges geometrically once the
/// number of nodes exceeds `x`.
pub fn bessel_j1(x: f64) -> f64 {
    bessel_j1_parts(x).0
}

/// Real and imaginary parts of the `J1` integral; the imaginary part is zero analytically.
pub fn bessel_j1_parts(x: f64) -> (f64, f64) {
    let n = 2 * (x.abs().ceil() as usize) + 48;
    let h = 2.0 * PI / n as f64;
    let mut re = KahanSum::default();
    let mut im = KahanSum::default();
    for i in 0..n {
        let t = i as f64 * h;
        let phase = t - x * t.sin();
        re.add(phase.cos());
        im.add(phase.sin());
    }
    (re.value() / n as f64, im.value() / n as f64)
}

/// Gamma function for real arguments other than the non-positive integers.
pub fn gamma(x: f64) -> Result<f64> {
    if x <= 0.0 && x == x.round() {
        return Err(Error::Pole {
            function: "gamma",
            value: x,
        });
    }
    // statrs reflects arguments below 1/2 onto the positive axis.
    Ok(statrs::function::gamma::gamma(x))
}

const BERNOULLI_2K: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Riemann zeta function for real `s > 1` by Euler–Maclaurin summation.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) {
        return Err(Error::DivergenceGuard {
            function: "zeta",
            arg: "s",
            value: s,
        });
    }
    let n = 16.0f64;
    let mut sum: KahanSum = (1..16).map(|k| (k as f64).powf(-s)).collect();
    sum.add(n.powf(1.0 - s) / (s - 1.0));
    sum.add(0.5 * n.powf(-s));
    // Σ B_2k / (2k)! · s(s+1)…(s+2k-2) · n^{-s-2k+1}
    let mut rising = s;
    let mut factorial = 2.0;
    let mut power = n.powf(-s - 1.0);
    for (j, b) in BERNOULLI_2K.iter().enumerate() {
        sum.add(b / factorial * rising * power);
        let k = (j + 1) as f64;
        rising *= (s + 2.0 * k - 1.0) * (s + 2.0 * k);
        factorial *= (2.0 * k + 1.0) * (2.0 * k + 2.0);
        power /= n * n;
    }
    Ok(sum.value())
}

/// Polylogarithm `Li_s(1/2) = Σ_{k≥1} 2^{-k} k^{-s}` for any real `s`.
pub fn polylog_half(s: f64) -> f64 {
    let mut sum = KahanSum::default();
    let mut weight = 0.5;
    for k in 1..200u32 {
        let term = weight * (k as f64).powf(-s);
        sum.add(term);
        if term < 1e-18 * sum.value().abs() {
            break;
        }
        weight *= 0.5;
    }
    sum.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn k_half_integer_matches_closed_form() {
        let beta = RealOrder::new(1.5).unwrap();
        let closed = |q: f64| (q + 1.0) * q.powf(-1.5) * (-q).exp();
        let ratio0 = bessel_k(beta, 1.0).unwrap() / closed(1.0);
        assert_relative_eq!(ratio0, (PI / 2.0).sqrt(), max_relative = 1e-12);
        for q in [1e-3, 0.01, 0.3, 2.0, 7.5, 20.0, 50.0] {
            let r = bessel_k(beta, q).unwrap() / closed(q);
            assert_relative_eq!(r, ratio0, max_relative = 1e-10);
        }
    }

    #[test]
    fn k_small_argument_limit() {
        for b in [0.75, 1.3229, 2.2] {
            let q: f64 = 1e-3;
            let v = bessel_k(RealOrder::new(b).unwrap(), q).unwrap() * q.powf(b);
            let limit = 2f64.powf(b - 1.0) * gamma(b).unwrap();
            // next correction is O(q^{min(2, 2b)})
            assert_relative_eq!(v, limit, max_relative = 5e-3);
        }
    }

    #[test]
    fn k_large_argument_correction() {
        let b: f64 = 1.3;
        let coeff = (4.0 * b * b - 1.0) / 8.0;
        let amp = |q: f64| bessel_k_scaled(b, q).unwrap() * q.sqrt() / (PI / 2.0).sqrt();
        // (amp - 1) q → coeff as q → ∞ with O(1/q) correction
        let q1 = 40.0;
        let q2 = 80.0;
        let e1 = (amp(q1) - 1.0) * q1;
        let e2 = (amp(q2) - 1.0) * q2;
        let extrapolated = 2.0 * e2 - e1;
        assert_relative_eq!(extrapolated, coeff, max_relative = 1e-3);
    }

    #[test]
    fn k_rejects_nonpositive_argument() {
        let beta = RealOrder::new(1.0).unwrap();
        assert!(matches!(
            bessel_k(beta, 0.0),
            Err(Error::DivergenceGuard { .. })
        ));
        assert!(bessel_k(beta, -1.0).is_err());
        assert!(RealOrder::new(-1.0).is_err());
    }

    #[test]
    fn k_cutoff_doubling_is_invisible() {
        for (b, q) in [(0.6, 1e-3), (2.5, 0.05), (1.0, 3.0), (1.7, 50.0)] {
            let t = k_cutoff(b, q);
            let v1 = k_scaled_on(b, q, t);
            let v2 = k_scaled_on(b, q, 2.0 * t);
            assert!((v1 - v2).abs() <= 1e-12 * v1, "b={b} q={q}");
        }
    }

    #[test]
    fn k_log_derivative_matches_finite_difference() {
        for (b, q) in [(1.3229, 0.4), (0.8, 3.0), (2.5, 0.01)] {
            let h = 1e-5 * q;
            let k = |x: f64| bessel_k(RealOrder::new(b).unwrap(), x).unwrap();
            let fd = (k(q + h) - k(q - h)) / (2.0 * h) / k(q);
            assert_relative_eq!(
                bessel_k_log_derivative(b, q).unwrap(),
                fd,
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn j1_zeros_and_origin() {
        assert!(bessel_j1(0.0).abs() < 1e-15);
        let zero = |lo: f64, hi: f64| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if bessel_j1(a) * bessel_j1(m) <= 0.0 {
                    b = m
                } else {
                    a = m
                }
            }
            0.5 * (a + b)
        };
        assert!((zero(3.0, 4.5) - 3.832).abs() < 1e-3);
        assert!((zero(6.5, 7.5) - 7.016).abs() < 1e-3);
        assert!(bessel_j1_parts(12.3).1.abs() < 1e-14);
        // J1(1) reference value
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-13);
    }

    #[test]
    fn gamma_values_and_poles() {
        assert_relative_eq!(gamma(5.0).unwrap(), 24.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(0.5).unwrap(), PI.sqrt(), max_relative = 1e-13);
        assert!(matches!(gamma(-2.0), Err(Error::Pole { .. })));
        assert!(gamma(0.0).is_err());
        assert_relative_eq!(
            gamma(-1.5).unwrap(),
            4.0 * PI.sqrt() / 3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn zeta_and_polylog() {
        assert_relative_eq!(zeta(2.0).unwrap(), PI * PI / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta(4.0).unwrap(), PI.powi(4) / 90.0, max_relative = 1e-14);
        assert_relative_eq!(
            zeta(1.01).unwrap(),
            100.577_943_338_497,
            max_relative = 1e-11
        );
        assert!(zeta(1.0).is_err());
        // Li_1(1/2) = ln 2, Li_2(1/2) = π²/12 - ln²2 / 2
        assert_relative_eq!(
            polylog_half(1.0),
            std::f64::consts::LN_2,
            max_relative = 1e-14
        );
        let ln2 = std::f64::consts::LN_2;
        assert_relative_eq!(
            polylog_half(2.0),
            PI * PI / 12.0 - ln2 * ln2 / 2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn polylog_six_against_partial_sums() {
        // partial sum to k = 50 with remainder bounded by 2^-50 < 1e-15
        let mut s = 0.0;
        for k in 1..=50 {
            s += 0.5f64.powi(k) / (k as f64).powi(6);
        }
        assert!((polylog_half(6.0) - s).abs() < 1e-12);
        assert!((polylog_half(6.0) - 0.504_095_3).abs() < 1e-7);
    }

    #[test]
    fn order_flags() {
        assert!(RealOrder::new(2.0 + 1e-8).unwrap().near_integer());
        assert!(RealOrder::new(1.5).unwrap().near_half_integer());
        assert!(!RealOrder::new(1.3229).unwrap().near_integer());
        let b = RealOrder::from_f0(4.0).unwrap();
        assert_relative_eq!(b.value(), 1.5, max_relative = 1e-15);
    }
}
