//! Exact solutions built from exponentials.
//!
//! If `f(x,0) = Σ aᵢ e^{bᵢx}`, the solution stays of that form with
//! `ȧᵢ = aᵢbᵢ + aᵢ Σ_{j≠i} a_j/(bᵢ - b_j)` and `ḃᵢ = aᵢ/2`. The flow conserves
//! `Σ(aᵢ - bᵢ²)` and the critical condition `Σ aᵢ/bᵢ² = 1`. One term gives the classical
//! single-exponential family; two terms on the critical manifold have a closed form.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Two rates closer than this fraction of their magnitude count as a collision.
pub const COLLISION_THRESHOLD: f64 = 1e-6;

/// Largest relative change of any parameter in one adaptive step.
pub const STEP_CONTROL: f64 = 1e-4;

/// An amplitude above this is reported as blow-up.
pub const BLOWUP_AMPLITUDE: f64 = 1e12;

/// One exponential `a e^{bx}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub a: f64,
    pub b: f64,
}

/// `f(x) = Σ aᵢ e^{bᵢx}` with distinct negative rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSum {
    terms: Vec<Term>,
}

impl ExponentialSum {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidParameter(
                "an exponential sum needs at least one term".into(),
            ));
        }
        if let Some(t) = terms.iter().find(|t| !(t.b < 0.0) || !t.a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rates must be negative and amplitudes finite, got a = {}, b = {}",
                t.a, t.b
            )));
        }
        if let Some((i, j)) = collision(&terms) {
            return Err(Error::RateCollision { i, j, t: 0.0 });
        }
        Ok(Self { terms })
    }

    /// Terms `(aᵢ, bᵢ)` with `aᵢ` rescaled so that `Σ aᵢ/bᵢ² = 1`.
    pub fn critical(terms: Vec<Term>) -> Result<Self> {
        let s = Self::new(terms)?;
        let m = s.first_moment();
        if !(m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "first moment {m} cannot be normalized"
            )));
        }
        Ok(Self {
            terms: s
                .terms
                .iter()
                .map(|t| Term { a: t.a / m, b: t.b })
                .collect(),
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn value(&self, x: f64) -> f64 {
        evaluate(&self.terms, x)
    }

    /// `∫₀^∞ x f dx = Σ aᵢ/bᵢ²`.
    pub fn first_moment(&self) -> f64 {
        first_moment(&self.terms)
    }

    /// `Σ (aᵢ - bᵢ²)`.
    pub fn energy(&self) -> f64 {
        energy(&self.terms)
    }

    /// Smallest value on `[0, length]` sampled at `n + 1` points.
    pub fn min_on(&self, length: f64, n: usize) -> f64 {
        (0..=n)
            .map(|i| self.value(length * i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

fn evaluate(terms: &[Term], x: f64) -> f64 {
    terms.iter().map(|t| t.a * (t.b * x).exp()).sum()
}

fn first_moment(terms: &[Term]) -> f64 {
    terms.iter().map(|t| t.a / (t.b * t.b)).sum()
}

fn energy(terms: &[Term]) -> f64 {
    terms.iter().map(|t| t.a - t.b * t.b).sum()
}

fn collision(terms: &[Term]) -> Option<(usize, usize)> {
    for i in 0..terms.len() {
        for j in i + 1..terms.len() {
            let scale = terms[i].b.abs().max(terms[j].b.abs());
            if (terms[i].b - terms[j].b).abs() < COLLISION_THRESHOLD * scale {
                return Some((i, j));
            }
        }
    }
    None
}

fn rhs(terms: &[Term], out: &mut [Term]) {
    for (i, ti) in terms.iter().enumerate() {
        let coupling: f64 = terms
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, tj)| tj.a / (ti.b - tj.b))
            .sum();
        out[i] = Term {
            a: ti.a * (ti.b + coupling),
            b: 0.5 * ti.a,
        };
    }
}

/// Parameters of an exponential sum sampled along the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Term>>,
    /// Number of adaptive steps taken.
    pub steps: usize,
}

impl Trajectory {
    /// Largest `|I(t) - I(0)|` over the samples, relative to `max(|I(0)|, 1)`, for
    /// `I = Σ(aᵢ - bᵢ²)` and `I = Σ aᵢ/bᵢ²`.
    pub fn invariant_drift(&self) -> (f64, f64) {
        let drift = |inv: fn(&[Term]) -> f64| {
            let i0 = inv(&self.states[0]);
            self.states
                .iter()
                .map(|s| (inv(s) - i0).abs() / i0.abs().max(1.0))
                .fold(0.0, f64::max)
        };
        (drift(energy), drift(first_moment))
    }

    pub fn last(&self) -> (f64, &[Term]) {
        let n = self.times.len() - 1;
        (self.times[n], &self.states[n])
    }

    /// `f(x, t)` at the `k`-th sample.
    pub fn value(&self, k: usize, x: f64) -> f64 {
        evaluate(&self.states[k], x)
    }
}

/// Integrates the parameter flow with adaptive RK4 up to `horizon`, sampling every
/// `output_dt`.
///
/// Each step is limited so that no `aᵢ` or `bᵢ` changes by more than [`STEP_CONTROL`]
/// relative to its own scale (`|aᵢ|`, and `|bᵢ| + √|aᵢ|` for rates, which may cross
/// zero in supercritical flows).
pub fn evolve_exp_sum(s: &ExponentialSum, horizon: f64, output_dt: f64) -> Result<Trajectory> {
    if !(horizon >= 0.0) || !(output_dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} and output step {output_dt} must be non-negative and positive"
        )));
    }
    let n = s.terms.len();
    let mut y = s.terms.clone();
    let mut t = 0.0;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![y.clone()],
        steps: 0,
    };
    let mut k = vec![vec![Term { a: 0.0, b: 0.0 }; n]; 4];
    let mut tmp = vec![Term { a: 0.0, b: 0.0 }; n];
    let mut next_output = output_dt.min(horizon);
    while t < horizon {
        rhs(&y, &mut k[0]);
        let rate = y
            .iter()
            .zip(&k[0])
            .map(|(v, d)| {
                let ra = if v.a != 0.0 { (d.a / v.a).abs() } else { 0.0 };
                let rb = d.b.abs() / (v.b.abs() + v.a.abs().sqrt()).max(f64::MIN_POSITIVE);
                ra.max(rb)
            })
            .fold(0.0, f64::max);
        let mut h = if rate > 0.0 {
            STEP_CONTROL / rate
        } else {
            next_output - t
        };
        let mut hit = false;
        if t + h >= next_output {
            h = next_output - t;
            hit = true;
        }
        if !(h > 1e-14 * (1.0 + t)) && !hit {
            return Err(Error::NonFinite { t });
        }
        let stage = |y: &[Term], d: &[Term], c: f64, out: &mut Vec<Term>| {
            for ((o, v), dv) in out.iter_mut().zip(y).zip(d) {
                *o = Term {
                    a: v.a + c * dv.a,
                    b: v.b + c * dv.b,
                };
            }
        };
        stage(&y, &k[0], 0.5 * h, &mut tmp);
        let (k0, rest) = k.split_at_mut(1);
        rhs(&tmp, &mut rest[0]);
        stage(&y, &rest[0], 0.5 * h, &mut tmp);
        rhs(&tmp, &mut rest[1]);
        stage(&y, &rest[1], h, &mut tmp);
        rhs(&tmp, &mut rest[2]);
        for i in 0..n {
            y[i].a +=
                h / 6.0 * (k0[0][i].a + 2.0 * rest[0][i].a + 2.0 * rest[1][i].a + rest[2][i].a);
            y[i].b +=
                h / 6.0 * (k0[0][i].b + 2.0 * rest[0][i].b + 2.0 * rest[1][i].b + rest[2][i].b);
        }
        t = if hit { next_output } else { t + h };
        traj.steps += 1;
        if let Some(v) = y.iter().find(|v| !v.a.is_finite() || !v.b.is_finite()) {
            return Err(Error::BlowUp { t, value: v.a });
        }
        if let Some(v) = y.iter().find(|v| v.a.abs() > BLOWUP_AMPLITUDE) {
            return Err(Error::BlowUp { t, value: v.a });
        }
        if let Some((i, j)) = collision(&y) {
            return Err(Error::RateCollision { i, j, t });
        }
        if hit {
            traj.times.push(t);
            traj.states.push(y.clone());
            next_output = (next_output + output_dt).min(horizon);
        }
    }
    Ok(traj)
}

/// Parameters of the single-exponential solution at one time, with
/// `Δ = ∫x f(x,0) dx - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleExp {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

/// `a = 4κ²/sin²(κ(t+t₀))`, `b = -2κ/tan(κ(t+t₀))`, `Δ = 1/cos²(κt₀) - 1`.
///
/// `kappa_sq < 0` selects `κ = iκ̂` (trigonometric functions become hyperbolic, `Δ < 0`);
/// `kappa_sq = 0` is the critical solution `a = 4/(t+t₀)²`, `b = -2/(t+t₀)`.
pub fn single_exp(kappa_sq: f64, t0: f64, t: f64) -> Result<SingleExp> {
    let tau = t + t0;
    if kappa_sq > 0.0 {
        let k = kappa_sq.sqrt();
        let x = k * tau;
        let turns = x / PI;
        if (turns - turns.round()).abs() < 1e-12 {
            return Err(Error::Pole {
                function: "single_exp",
                value: t,
            });
        }
        Ok(SingleExp {
            a: 4.0 * kappa_sq / x.sin().powi(2),
            b: -2.0 * k / x.tan(),
            delta: (k * t0).tan().powi(2),
        })
    } else if kappa_sq < 0.0 {
        let k = (-kappa_sq).sqrt();
        let x = k * tau;
        if x == 0.0 {
            return Err(Error::Pole {
                function: "single_exp",
                value: t,
            });
        }
        Ok(SingleExp {
            a: 4.0 * k * k / x.sinh().powi(2),
            b: -2.0 * k / x.tanh(),
            delta: -(k * t0).tanh().powi(2),
        })
    } else {
        if tau == 0.0 {
            return Err(Error::Pole {
                function: "single_exp",
                value: t,
            });
        }
        Ok(SingleExp {
            a: 4.0 / (tau * tau),
            b: -2.0 / tau,
            delta: 0.0,
        })
    }
}

/// Blow-up time `π/κ - t₀` of the supercritical single exponential.
pub fn single_exp_blowup(kappa: f64, t0: f64) -> f64 {
    PI / kappa - t0
}

/// `(κ², t₀)` of the single-exponential solution through `a e^{bx}` at `t = 0`, `b < 0`.
pub fn fit_single(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(b < 0.0) || !(a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need a > 0 and b < 0, got a = {a}, b = {b}"
        )));
    }
    let r = a / (b * b);
    if r > 1.0 {
        let theta = (1.0 / r.sqrt()).acos();
        let k = -0.5 * b * theta.tan();
        Ok((k * k, theta / k))
    } else if r < 1.0 {
        let theta = (1.0 / r.sqrt()).acosh();
        let k = -0.5 * b * theta.tanh();
        Ok((-k * k, theta / k))
    } else {
        Ok((0.0, -2.0 / b))
    }
}

/// The critical two-exponential solution, real `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoExpCritical {
    pub k: f64,
    pub t0: f64,
    pub t1: f64,
}

impl TwoExpCritical {
    /// `[(a₁, b₁), (a₂, b₂)]` at time `t`, with
    /// `b₁,₂ = -4K / (K(t+t₁) ± √R)`, `R = K²(t+t₁)² - 4K(t+t₁) tanh(K(t+t₀)) + 4`,
    /// and `aᵢ = 2 ḃᵢ`. `b₁` is the less negative rate.
    ///
    /// The rates are the roots of `z² - Sz + P` with `S = -2K²u/E`, `P = 4K²/E`,
    /// `u = t+t₁`, `E = Ku tanh(K(t+t₀)) - 1`, so `ḃ = (Ṡb - Ṗ)/(2b - S)`. For the fast
    /// root the numerator is written with the factor `sech²(K(t+t₀))` explicit: it is
    /// exponentially small at late times and would otherwise be lost to cancellation.
    pub fn at(&self, t: f64) -> Result<[Term; 2]> {
        let k = self.k;
        let u = t + self.t1;
        let w = (k * (t + self.t0)).tanh();
        let sigma = (k * (t + self.t0)).cosh().powi(-2);
        let lead = k * u - 2.0 * w;
        let r = lead * lead + 4.0 * sigma;
        if !(r > 0.0) {
            return Err(Error::Branch { t, radicand: r });
        }
        let root = r.sqrt();
        let e = k * u * w - 1.0;
        if e == 0.0 {
            return Err(Error::Pole {
                function: "two_exp_closed_form",
                value: t,
            });
        }
        let d1 = k * u + root;
        let slow = -4.0 * k / d1;
        let fast = -k * d1 / e;
        let s = -2.0 * k * k * u / e;
        let scale = 2.0 * k * k / (e * e);
        // Ṡb - Ṗ = (2K²/E²) [(1 + K²u²σ) b + 2(Kw + K²uσ)]
        let slow_num =
            scale * ((1.0 + k * k * u * u * sigma) * slow + 2.0 * (k * w + k * k * u * sigma));
        // √R - (Ku - 2w), without cancellation when Ku - 2w > 0
        let delta = if lead > 0.0 {
            4.0 * sigma / (root + lead)
        } else {
            root - lead
        };
        // b + 2Kw = K(-2Kuσ - δ)/E on the fast root
        let fast_num = scale
            * (k * (-2.0 * k * u * sigma - delta) / e
                + sigma * (k * k * u * u * fast + 2.0 * k * k * u));
        let p = Term {
            a: 2.0 * slow_num / (2.0 * slow - s),
            b: slow,
        };
        let m = Term {
            a: 2.0 * fast_num / (2.0 * fast - s),
            b: fast,
        };
        if p.b >= m.b {
            Ok([p, m])
        } else {
            Ok([m, p])
        }
    }

    pub fn sum_at(&self, t: f64) -> Result<ExponentialSum> {
        ExponentialSum::new(self.at(t)?.to_vec())
    }
}

/// The two-exponential solution with `f(x,0) = p x`, obtained from the closed form in
/// the limit `K → 0` with `t₁ = 0`, `t₀ = iπ/(2K) + 8K²/p`:
/// `b₁,₂ = [3pt² ± √(288pt - 3p²t⁴)] / (24 - pt³)`, `aᵢ = 2ḃᵢ`, for
/// `0 < t < (24/p)^{1/3}`. The rates have opposite signs.
pub fn linear_data_solution(p: f64, t: f64) -> Result<[Term; 2]> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "slope p = {p} must be positive"
        )));
    }
    let tc = (24.0 / p).cbrt();
    if !(t > 0.0) || t >= tc {
        return Err(Error::Pole {
            function: "linear_data_solution",
            value: t,
        });
    }
    let s = 288.0 * p * t - 3.0 * p * p * t.powi(4);
    if !(s > 0.0) {
        return Err(Error::Branch { t, radicand: s });
    }
    let root = s.sqrt();
    let ds = 288.0 * p - 12.0 * p * p * t.powi(3);
    let d = 24.0 - p * t.powi(3);
    let dd = -3.0 * p * t * t;
    let term = |sign: f64| {
        let num = 3.0 * p * t * t + sign * root;
        let dnum = 6.0 * p * t + sign * ds / (2.0 * root);
        Term {
            a: 2.0 * (dnum * d - num * dd) / (d * d),
            b: num / d,
        }
    };
    Ok([term(1.0), term(-1.0)])
}

/// Blow-up time `(24/p)^{1/3}` of `f(x,0) = p x`.
pub fn linear_data_blowup(p: f64) -> f64 {
    (24.0 / p).cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sums() {
        assert!(ExponentialSum::new(vec![]).is_err());
        assert!(ExponentialSum::new(vec![Term { a: 1.0, b: 0.5 }]).is_err());
        let e = ExponentialSum::new(vec![
            Term { a: 1.0, b: -1.0 },
            Term {
                a: 1.0,
                b: -1.0 - 1e-9,
            },
        ]);
        assert!(matches!(e, Err(Error::RateCollision { i: 0, j: 1, .. })));
    }

    #[test]
    fn critical_normalization() {
        let s = ExponentialSum::critical(vec![Term { a: 2.0, b: -1.0 }, Term { a: 1.0, b: -3.0 }])
            .unwrap();
        assert!((s.first_moment() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_exp_limits() {
        let c = single_exp(0.0, 2.0, 1.0).unwrap();
        assert_eq!((c.a, c.b), (4.0 / 9.0, -2.0 / 3.0));
        let near = single_exp(1e-12, 2.0, 1.0).unwrap();
        assert!((near.a - c.a).abs() < 1e-10 && (near.b - c.b).abs() < 1e-10);
        assert!(single_exp(1.0, 0.5, 0.5).unwrap().delta > 0.0);
        assert!(single_exp(-1.0, 0.5, 0.5).unwrap().delta < 0.0);
        assert!(single_exp(1.0, 1.0, PI - 1.0).is_err());
        assert!((single_exp_blowup(0.1, 1.0) - 30.415_926_535_897_93).abs() < 1e-12);
    }

    #[test]
    fn fit_single_round_trip() {
        for (k2, t0) in [(0.3, 1.2), (-0.7, 0.4), (0.0, 2.0)] {
            let s = single_exp(k2, t0, 0.0).unwrap();
            let (k2f, t0f) = fit_single(s.a, s.b).unwrap();
            assert!(
                (k2f - k2).abs() < 1e-12 && (t0f - t0).abs() < 1e-12,
                "{k2f} {t0f}"
            );
        }
    }

    #[test]
    fn linear_data_starts_at_px() {
        let p = 2.0;
        let t = 1e-8;
        let terms = linear_data_solution(p, t).unwrap();
        for x in [0.1, 0.5, 1.0] {
            let f = evaluate(&terms, x);
            assert!((f - p * x).abs() < 1e-4, "{f}");
        }
    }
}
