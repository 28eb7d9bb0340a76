//! The integer-valued max-recursion `X = max(X1 + X2 - 1, 0)` and its `m`-ary variant.
//!
//! Distributions are truncated probability vectors. Long critical runs use a
//! light-cone window: `Q_n(k)` depends only on `Q_0(j)` for `j <= k + n`, so a
//! window shrinking by one index per step gives exact low-order values at cubic
//! cost, without the silent errors of a fixed truncation.

use crate::error::{Error, Result};
use crate::quad::KahanSum;
use crate::specfun;
use serde::{Deserialize, Serialize};

/// Tolerance on the total probability of a distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;
/// Probability discarded above the cap beyond which `iterate` logs a warning.
pub const TAIL_WARNING: f64 = 1e-12;

/// Truncated probability vector `Q(k)`, `k = 0..=K`.
///
/// `tail_mass` is the probability known to sit above `K` but not represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    q: Vec<f64>,
    tail_mass: f64,
}

impl DiscreteDistribution {
    /// A complete distribution: entries non-negative and summing to one.
    pub fn new(q: Vec<f64>) -> Result<Self> {
        let d = Self::with_tail(q)?;
        if d.tail_mass.abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {}, not 1",
                1.0 - d.tail_mass
            )));
        }
        Ok(Self {
            tail_mass: 0.0,
            ..d
        })
    }

    /// A distribution whose missing mass `1 - Σ q` is attributed to values above `K`.
    pub fn with_tail(mut q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidParameter("empty distribution".into()));
        }
        if q.len() == 1 {
            q.push(0.0);
        }
        if let Some(v) = q.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "probability {v} is negative or not finite"
            )));
        }
        let total = q.iter().copied().collect::<KahanSum>().value();
        let tail_mass = 1.0 - total;
        if tail_mass < -NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total} > 1"
            )));
        }
        Ok(Self {
            q,
            tail_mass: tail_mass.max(0.0),
        })
    }

    /// Point mass at `k`.
    pub fn delta_at(k: usize) -> Self {
        let mut q = vec![0.0; k.max(1) + 1];
        q[k] = 1.0;
        Self { q, tail_mass: 0.0 }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.q
    }

    /// `Q(k)`, zero beyond the truncation.
    pub fn get(&self, k: usize) -> f64 {
        self.q.get(k).copied().unwrap_or(0.0)
    }

    /// Truncation index `K`.
    pub fn k_max(&self) -> usize {
        self.q.len() - 1
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Generating function `H(z) = Σ Q(k) z^k` over the stored entries.
    pub fn h(&self, z: f64) -> f64 {
        let mut zk = 1.0;
        let mut s = KahanSum::default();
        for &v in &self.q {
            s.add(v * zk);
            zk *= z;
        }
        s.value()
    }

    /// Derivative `H'(z)`.
    pub fn h_prime(&self, z: f64) -> f64 {
        let mut zk = 1.0;
        let mut s = KahanSum::default();
        for (k, &v) in self.q.iter().enumerate().skip(1) {
            s.add(k as f64 * v * zk);
            zk *= z;
        }
        s.value()
    }

    /// Mean `Σ k Q(k)` over the stored entries.
    pub fn mean(&self) -> f64 {
        self.h_prime(1.0)
    }
}

/// Parametric initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelFamily {
    /// `Q(0) = 1 - p`, `Q(2) = p`.
    TwoDelta { p: f64 },
    /// `Q(k) = p / (2^k k^alpha)` for `k >= 1`.
    PowerLaw { p: f64, alpha: f64 },
    /// Explicit probabilities.
    Custom { q: Vec<f64> },
}

impl ModelFamily {
    pub fn two_delta(p: f64) -> Self {
        Self::TwoDelta { p }
    }

    pub fn power_law(p: f64, alpha: f64) -> Self {
        Self::PowerLaw { p, alpha }
    }

    /// The same family with parameter `p` replaced.
    pub fn with_p(&self, p: f64) -> Self {
        match self {
            Self::TwoDelta { .. } => Self::TwoDelta { p },
            Self::PowerLaw { alpha, .. } => Self::PowerLaw { p, alpha: *alpha },
            Self::Custom { q } => Self::Custom { q: q.clone() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::TwoDelta { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!(
                        "two-delta p = {p} not in [0, 1]"
                    )));
                }
            }
            Self::PowerLaw { p, alpha } => {
                if !(alpha > 1.0) || !alpha.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "power-law alpha = {alpha} must exceed 1"
                    )));
                }
                if !(p >= 0.0) || p * specfun::polylog_half(alpha) > 1.0 + 1e-15 {
                    return Err(Error::InvalidParameter(format!(
                        "power-law p = {p} gives negative Q(0)"
                    )));
                }
            }
            Self::Custom { .. } => {}
        }
        Ok(())
    }
}

/// Initial distribution of a family truncated at `k_max`, with `Q(0)` fixed by normalization
/// of the full (untruncated) family.
pub fn make_family(family: &ModelFamily, k_max: usize) -> Result<DiscreteDistribution> {
    family.validate()?;
    let k_max = k_max.max(1);
    match family {
        ModelFamily::TwoDelta { p } => {
            let mut q = vec![0.0; k_max.max(2) + 1];
            q[0] = 1.0 - p;
            q[2] = *p;
            Ok(DiscreteDistribution { q, tail_mass: 0.0 })
        }
        ModelFamily::PowerLaw { p, alpha } => {
            let mut q = vec![0.0; k_max + 1];
            q[0] = (1.0 - p * specfun::polylog_half(*alpha)).max(0.0);
            let mut w = 1.0;
            for (k, v) in q.iter_mut().enumerate().skip(1) {
                w *= 0.5;
                *v = p * w * (k as f64).powf(-alpha);
            }
            // remainder of the series, kept explicitly because 1 - Σ q underflows
            let mut tail = KahanSum::default();
            for k in k_max + 1..k_max + 200 {
                w *= 0.5;
                tail.add(p * w * (k as f64).powf(-alpha));
            }
            let d = DiscreteDistribution::with_tail(q)?;
            Ok(DiscreteDistribution {
                tail_mass: tail.value(),
                ..d
            })
        }
        ModelFamily::Custom { q } => {
            let mut q = q.clone();
            if q.len() <= k_max {
                q.resize(k_max + 1, 0.0);
            }
            DiscreteDistribution::new(q)
        }
    }
}

/// `Σ a[i] b[i]` with independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Truncated convolution `(a * b)[s]` for `s < len`.
fn convolve_truncated(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let rev: Vec<f64> = b.iter().rev().copied().collect();
    let lb = b.len();
    (0..len)
        .map(|s| {
            // Σ_i a[i] b[s - i], i in [max(0, s - lb + 1), min(s, la - 1)]
            let lo = (s + 1).saturating_sub(lb);
            let hi = s.min(a.len().saturating_sub(1));
            if lo > hi || a.is_empty() {
                return 0.0;
            }
            let start = lb - 1 + lo - s;
            dot(&a[lo..=hi], &rev[start..start + hi - lo + 1])
        })
        .collect()
}

/// One application of the recursion to a window of small values.
struct WindowStep {
    /// New scaled window of length `len`.
    p: Vec<f64>,
    /// Logarithm of the mass beyond the new window.
    ln_escaped: f64,
    /// `1 - Q(0)` computed from positive terms.
    nonzero: f64,
    /// First moment of `Σ X^(i) - 1` over all-window tuples that leave the window.
    escaping_moment: f64,
}

/// Index scale used for windows of the `m`-ary recursion: entries are stored as
/// `P(k) = m^k Q(k)`, which stays of order one near criticality. Unscaled storage
/// underflows after about a thousand steps and loses the content that feeds `Q_n(k)`
/// for small `k`.
pub fn window_base(m: usize) -> f64 {
    m as f64
}

/// `ln Σ exp(a_i)`, `-∞` for an empty or all-`-∞` slice.
fn log_sum_exp(a: &[f64]) -> f64 {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + a.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `v · base^e` without overflowing the intermediate power.
fn rescale(v: f64, e: f64, base: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let half = (0.5 * e * base.ln()).exp();
    v * half * half
}

fn to_scaled(q: &[f64], base: f64) -> Vec<f64> {
    q.iter()
        .enumerate()
        .map(|(k, &v)| rescale(v, k as f64, base))
        .collect()
}

fn from_scaled(p: &[f64], base: f64) -> Vec<f64> {
    p.iter()
        .enumerate()
        .map(|(k, &v)| rescale(v, -(k as f64), base))
        .collect()
}

/// Advances a scaled window `p` of length `l` (values `0..l`) to length `len`.
///
/// `ln_escaped` is the logarithm of the mass `M` of values beyond the window. Near
/// criticality `M` is of order `base^{-l}` but is multiplied by about `m` per step, so it
/// is carried in log space rather than in probability units.
/// Values `1..len` come from tuples of window values; `Q(0)` is set by normalization
/// so that rounding cannot inflate the total mass.
///
/// In scaled units the recursion reads `P'(k) = (P^{*m})(k + 1) / m`.
fn window_step(p: &[f64], m: usize, base: f64, len: usize, ln_escaped: f64) -> WindowStep {
    let l = p.len();
    // R = p^{*(m-1)}, in full
    let mut r = p.to_vec();
    for _ in 2..m {
        let full = r.len() + l - 1;
        r = convolve_truncated(&r, p, full);
    }
    let mut out = vec![0.0; len];
    if m == 2 {
        let rev: Vec<f64> = p.iter().rev().copied().collect();
        let p0 = p[0];
        for (k, slot) in out.iter_mut().enumerate().skip(1) {
            // pairs (i, k + 1 - i) with both indices in 1..l, plus the two (0, k + 1) pairs
            let lo = (k + 1).saturating_sub(l - 1).max(1);
            let hi = k.min(l - 1);
            let mut s = 0.0;
            if lo <= hi {
                let start = l + lo - 2 - k;
                s = dot(&p[lo..=hi], &rev[start..start + hi - lo + 1]);
            }
            if k + 1 < l {
                s += 2.0 * p0 * p[k + 1];
            }
            *slot = s / base;
        }
    } else {
        let conv = convolve_truncated(&r, p, len + 1);
        for k in 1..len {
            out[k] = conv[k + 1] / base;
        }
    }
    // scaled suffix sums: T(s) = Σ_{b ≥ s} P_b base^{s-b}, U(s) = Σ_{b ≥ s} b P_b base^{s-b}
    let mut t = vec![0.0; l + 1];
    let mut u = vec![0.0; l + 1];
    for b in (0..l).rev() {
        t[b] = t[b + 1] / base + p[b];
        u[b] = u[b + 1] / base + b as f64 * p[b];
    }
    // tuples with Σ ≥ len + 1 land beyond the new window; their mass is
    // Σ_i R_i T(s) base^{-(i+s)} with s = max(len + 1 - i, 0)
    let threshold = len + 1;
    let mut log_terms = Vec::new();
    let mut moment = KahanSum::default();
    for (i, &ri) in r.iter().enumerate() {
        if ri == 0.0 {
            continue;
        }
        let s = threshold.saturating_sub(i);
        if s >= l || t[s] == 0.0 {
            continue;
        }
        let ln_ri = ri.ln();
        let ln_shift = -((i + s) as f64) * base.ln();
        log_terms.push(ln_ri + t[s].ln() + ln_shift);
        let w = (i as f64 - 1.0) * t[s] + u[s];
        if w > 0.0 {
            moment.add((ln_ri + w.ln() + ln_shift).exp());
        }
    }
    let ln_beyond = log_sum_exp(&log_terms);
    // any tuple containing an escaped value escapes: M' = 1 - (1 - M)^m = m M g(M)
    let mass = ln_escaped.exp().min(1.0);
    let ln_g = if mass >= 1.0 {
        -(m as f64).ln()
    } else if mass > 1e-300 {
        (-(m as f64 * (-mass).ln_1p()).exp_m1() / (m as f64 * mass)).ln()
    } else {
        0.0
    };
    let ln_inherited = (m as f64).ln() + ln_escaped + ln_g;
    let ln_escaped = log_sum_exp(&[ln_inherited, ln_beyond]).min(0.0);
    let mut nonzero: KahanSum = from_scaled(&out, base)[1..].iter().copied().collect();
    nonzero.add(ln_escaped.exp());
    let nonzero = nonzero.value();
    out[0] = (1.0 - nonzero).max(0.0);
    WindowStep {
        p: out,
        ln_escaped,
        nonzero,
        escaping_moment: moment.value(),
    }
}

/// Applies the recursion `steps` times, keeping values up to `cap`.
///
/// `Q(0)` is set by normalization. Probability pushed above `cap` is kept as tail mass
/// and logged when it exceeds [`TAIL_WARNING`].
pub fn iterate(q: &DiscreteDistribution, steps: usize, cap: usize) -> Result<DiscreteDistribution> {
    m_ary_iterate(q, 2, steps, cap)
}

/// `m`-ary recursion `X = max(Σ_i X^(i) - 1, 0)` applied `steps` times with truncation `cap`.
pub fn m_ary_iterate(
    q: &DiscreteDistribution,
    m: usize,
    steps: usize,
    cap: usize,
) -> Result<DiscreteDistribution> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "arity m = {m} must be at least 2"
        )));
    }
    let cap = cap.max(1);
    let base = window_base(m);
    let mut cur = to_scaled(&q.q, base);
    let mut tail = q.tail_mass;
    for step in 0..steps {
        let top = cur.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        cur.truncate(top + 2);
        let exact_len = (m * top).saturating_sub(1).max(1) + 1;
        let len = exact_len.min(cap + 1);
        let next = window_step(&cur, m, base, len, tail.ln());
        let escaped = next.ln_escaped.exp();
        if escaped > TAIL_WARNING && escaped > tail {
            log::warn!(
                "truncation at K = {cap} discards mass {escaped:e} after step {}",
                step + 1
            );
        }
        cur = next.p;
        tail = escaped;
    }
    let mut cur = from_scaled(&cur, base);
    if cur.len() < 2 {
        cur.resize(2, 0.0);
    }
    Ok(DiscreteDistribution {
        q: cur,
        tail_mass: tail,
    })
}

/// Signed distance to the critical manifold, `Δ = 2H'(2) - H(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaValue {
    pub delta: f64,
    /// Estimate of the contribution from values above the truncation.
    pub tail_estimate: f64,
}

/// `Σ (k - 1) 2^k Q(k)` with a check that the truncated tail is negligible.
pub fn delta(q: &DiscreteDistribution) -> Result<DeltaValue> {
    weighted_delta(q, 2.0, |k, w| (k as f64 - 1.0) * w).map(|(delta, tail_estimate)| DeltaValue {
        delta,
        tail_estimate,
    })
}

/// `H(m) - m(m-1)H'(m)`; equals `-Δ` for `m = 2`.
pub fn m_ary_delta(q: &DiscreteDistribution, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "arity m = {m} must be at least 2"
        )));
    }
    let mf = m as f64;
    weighted_delta(q, mf, |k, w| (1.0 - (mf - 1.0) * k as f64) * w).map(|(d, _)| d)
}

fn weighted_delta(
    q: &DiscreteDistribution,
    z: f64,
    coeff: impl Fn(usize, f64) -> f64,
) -> Result<(f64, f64)> {
    let mut zk = 1.0;
    let mut sum = KahanSum::default();
    let mut abs = 0.0;
    let mut terms = Vec::with_capacity(q.q.len());
    for (k, &v) in q.q.iter().enumerate() {
        let t = coeff(k, v * zk);
        sum.add(t);
        abs += t.abs();
        terms.push(t);
        zk *= z;
    }
    let value = sum.value();
    let kmax = q.k_max();
    // a complete distribution has nothing above K; otherwise extrapolate the last two
    // terms geometrically and weigh the stored tail mass at its lowest possible index
    let tail = if q.tail_mass == 0.0 {
        0.0
    } else {
        let (a, b) = (terms[kmax - 1].abs(), terms[kmax].abs());
        let geometric = if b == 0.0 {
            0.0
        } else if a > 0.0 && b < a {
            let r = b / a;
            b * r / (1.0 - r)
        } else {
            f64::INFINITY
        };
        geometric.max(q.tail_mass * coeff(kmax + 1, zk).abs())
    };
    if tail > 1e-8 * value.abs() + 1e-14 * abs {
        return Err(Error::Divergence { tail, value });
    }
    Ok((value, tail))
}

/// `Δ(p)` of the power-law family from ζ and `Li_α(1/2)`.
pub fn power_law_delta_closed(p: f64, alpha: f64) -> Result<f64> {
    let z1 = specfun::zeta(alpha - 1.0)?;
    let z0 = specfun::zeta(alpha)?;
    Ok(p * (z1 - z0 + specfun::polylog_half(alpha)) - 1.0)
}

/// `Δ(p)` of the power-law family by summing `k ≤ terms` and adding the
/// Euler–Maclaurin remainder of `Σ_{k>terms} p (k^{1-α} - k^{-α})`.
pub fn power_law_delta_summed(p: f64, alpha: f64, terms: usize) -> Result<f64> {
    if !(alpha > 2.0) {
        return Err(Error::DivergenceGuard {
            function: "power_law_delta",
            arg: "alpha",
            value: alpha,
        });
    }
    let f = |k: f64| k.powf(1.0 - alpha) - k.powf(-alpha);
    let mut s: KahanSum = (1..=terms).map(|k| f(k as f64)).collect();
    let n = terms as f64;
    let integral = n.powf(2.0 - alpha) / (alpha - 2.0) - n.powf(1.0 - alpha) / (alpha - 1.0);
    let fp = (1.0 - alpha) * n.powf(-alpha) + alpha * n.powf(-alpha - 1.0);
    s.add(integral - 0.5 * f(n) - fp / 12.0);
    Ok(p * (s.value() + specfun::polylog_half(alpha)) - 1.0)
}

/// Critical parameter of a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Bisection root of `Δ(p)`.
    pub p_c: f64,
    /// `Δ` evaluated at the root.
    pub delta_at_root: f64,
    /// `1 / (ζ(α-1) + Li_α(1/2) - ζ(α))` for power-law families.
    pub closed_form: Option<f64>,
}

/// Bisection on a function increasing from negative to positive values.
pub fn bisect(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let rising = f_lo < f_hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < tol {
            break;
        }
        let v = f(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if (v < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of `Δ(p) = 0` for two-delta or power-law families.
///
/// The bisection is run to machine precision (well inside the 1e-10 contract). `Δ(p)` is
/// checked to be monotone on nine points of the bracket first.
pub fn critical_point(family: &ModelFamily) -> Result<CriticalPoint> {
    let (delta_fn, lo, hi, closed): (Box<dyn Fn(f64) -> Result<f64>>, f64, f64, Option<f64>) =
        match *family {
            ModelFamily::TwoDelta { .. } => (
                Box::new(|p| Ok(delta(&make_family(&ModelFamily::two_delta(p), 2)?)?.delta)),
                0.0,
                1.0,
                None,
            ),
            ModelFamily::PowerLaw { alpha, .. } => {
                let closed = 1.0 / (power_law_delta_closed(1.0, alpha)? + 1.0);
                (
                    Box::new(move |p| power_law_delta_summed(p, alpha, 4000)),
                    0.0,
                    1.0 / specfun::polylog_half(alpha),
                    Some(closed),
                )
            }
            ModelFamily::Custom { .. } => {
                return Err(Error::InvalidParameter(
                    "custom distributions have no parameter to solve for".into(),
                ))
            }
        };
    let samples: Vec<f64> = (0..=8)
        .map(|i| delta_fn(lo + (hi - lo) * i as f64 / 8.0))
        .collect::<Result<_>>()?;
    let increasing = samples.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = samples.windows(2).all(|w| w[1] <= w[0]);
    if !(increasing || decreasing) {
        return Err(Error::InvalidParameter(
            "Δ(p) is not monotone on the bracket".into(),
        ));
    }
    let p_c = bisect(&delta_fn, lo, hi, 0.0)?;
    Ok(CriticalPoint {
        p_c,
        delta_at_root: delta_fn(p_c)?,
        closed_form: closed,
    })
}

/// Free energies `F_m = 2^{-m} Σ k Q_m(k)` for `m = 0..=n`.
pub fn free_energy(q0: &DiscreteDistribution, n: usize) -> Result<Vec<f64>> {
    Ok(LightCone::new(n, 1).run(q0)?.free_energy)
}

/// Least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination.
    pub r_squared: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
}

impl LineFit {
    /// Where the line crosses zero.
    pub fn root(&self) -> f64 {
        -self.intercept / self.slope
    }
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "a line fit needs at least three (x, y) pairs, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        r_squared: 1.0 - ss_res / syy,
        rms_residual: (ss_res / n).sqrt(),
    })
}

/// Candidate forms of the free-energy singularity above `p_c`, each a function of `F`
/// that should vanish linearly in `p - p_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularityLaw {
    /// `(log F)^{-2}`, for initial data with fast-decaying tails.
    InverseSquareLog,
    /// `(-log F)^{-1}`, for power-law tails with `2 < α < 4`.
    InverseLog,
}

impl SingularityLaw {
    pub fn transform(self, free_energy: f64) -> f64 {
        let l = free_energy.ln();
        match self {
            Self::InverseSquareLog => l.powi(-2),
            Self::InverseLog => -1.0 / l,
        }
    }
}

/// `F_n` at each parameter value of a family, computed exactly by [`LightCone`].
pub fn free_energy_scan(family: &ModelFamily, ps: &[f64], n: usize) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    ps.par_iter()
        .map(|&p| {
            let run = LightCone::new(n, 1).run_family(&family.with_p(p))?;
            Ok(*run.free_energy.last().expect("n + 1 entries"))
        })
        .collect()
}

/// Line fit of `law(F_n)` against `p`.
pub fn singularity_fit(
    family: &ModelFamily,
    ps: &[f64],
    n: usize,
    law: SingularityLaw,
) -> Result<LineFit> {
    let y: Vec<f64> = free_energy_scan(family, ps, n)?
        .into_iter()
        .map(|f| law.transform(f))
        .collect();
    line_fit(ps, &y)
}

/// `P(X = k | X ≠ 0)` for `k ≥ 1`, returned with `Q(0) = 0`.
pub fn conditional_tail(q: &DiscreteDistribution) -> Result<DiscreteDistribution> {
    let nonzero = 1.0 - q.q[0];
    if !(nonzero > 1e-300) {
        return Err(Error::Degenerate("P(X ≠ 0) vanishes".into()));
    }
    let mut out: Vec<f64> = q.q.iter().map(|v| v / nonzero).collect();
    out[0] = 0.0;
    DiscreteDistribution::with_tail(out)
}

/// Entries above this are retilted before the next step so that products stay finite.
const TILT_LIMIT: f64 = 1e100;

/// Lowers the index scale of `p` when an entry exceeds [`TILT_LIMIT`], so that every
/// entry is at most one afterwards. Returns the new base, which never drops below one.
fn retilt(p: &mut [f64], base: f64) -> f64 {
    if !p.iter().any(|&v| v > TILT_LIMIT) {
        return base;
    }
    let shift = p
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &v)| v > 1.0)
        .map(|(k, &v)| -v.ln() / k as f64)
        .fold(0.0, f64::min)
        .max(-base.ln());
    for (k, v) in p.iter_mut().enumerate() {
        *v *= (k as f64 * shift).exp();
    }
    base * shift.exp()
}

/// Exact critical-run driver based on shrinking windows.
///
/// At step `j` the window holds `Q_j(k)` for `k < keep + 1 + n - j`, which is exact.
/// Values that leave the window are tracked as one class (mass and, for binary runs,
/// first moment). They can no longer reach zero before step `n`, so `Q_j(0)` and the
/// mean stay exact.
#[derive(Debug, Clone, Copy)]
pub struct LightCone {
    pub n: usize,
    pub keep: usize,
    pub arity: usize,
    pub store_history: bool,
}

/// Output of a [`LightCone`] run.
#[derive(Debug, Clone, Default)]
pub struct LightConeRun {
    /// `Q_m(0)` for `m = 0..=n`.
    pub q_zero: Vec<f64>,
    /// `1 - Q_m(0)` summed from positive terms.
    pub nonzero: Vec<f64>,
    /// `F_m` for `m = 0..=n` (binary runs only).
    pub free_energy: Vec<f64>,
    /// `Q_n(k)` for `k = 0..=keep`.
    pub final_window: Vec<f64>,
    /// Scaled windows `b_j^k Q_j(k)`, `k = 0..=keep + n - j`, when requested.
    pub history: Vec<Vec<f64>>,
    /// Index scale `b_j` of each window. It starts at [`window_base`] and is lowered
    /// (never below one) when supercritical growth would overflow the scaled entries.
    pub bases: Vec<f64>,
}

impl LightConeRun {
    /// `Q_j(k)` from the stored history (zero outside the window).
    pub fn q_at(&self, j: usize, k: usize) -> f64 {
        rescale(self.scaled_at(j, k), -(k as f64), self.bases[j])
    }

    /// `b_j^k Q_j(k)` from the stored history.
    pub fn scaled_at(&self, j: usize, k: usize) -> f64 {
        self.history
            .get(j)
            .and_then(|w| w.get(k))
            .copied()
            .unwrap_or(0.0)
    }
}

impl LightCone {
    pub fn new(n: usize, keep: usize) -> Self {
        Self {
            n,
            keep: keep.max(1),
            arity: 2,
            store_history: false,
        }
    }

    pub fn arity(mut self, m: usize) -> Self {
        self.arity = m;
        self
    }

    pub fn with_history(mut self) -> Self {
        self.store_history = true;
        self
    }

    fn window_len(&self, j: usize) -> usize {
        self.keep + 1 + self.n - j
    }

    /// Runs from an explicit distribution. Entries that underflow in probability units
    /// are lost; use [`LightCone::run_family`] for parametric families with long tails.
    pub fn run(&self, q0: &DiscreteDistribution) -> Result<LightConeRun> {
        let len0 = self.window_len(0);
        if q0.tail_mass > TAIL_WARNING && q0.k_max() + 1 < len0 {
            log::warn!(
                "initial distribution truncated at K = {} but the light cone needs K = {}",
                q0.k_max(),
                len0 - 1
            );
        }
        let base = window_base(self.arity);
        // unrepresented mass is placed just above the stored entries
        let first_missing = (q0.k_max() + 1) as f64;
        self.run_scaled(
            to_scaled(&q0.q, base),
            q0.tail_mass.ln(),
            first_missing * q0.tail_mass,
        )
    }

    /// Runs from a parametric family, generating the initial window directly in scaled
    /// units so that no part of the tail underflows.
    pub fn run_family(&self, family: &ModelFamily) -> Result<LightConeRun> {
        family.validate()?;
        match *family {
            ModelFamily::PowerLaw { p, alpha } => {
                let base = window_base(self.arity);
                let len0 = self.window_len(0);
                let q0 = 1.0 - p * specfun::polylog_half(alpha);
                // P_0(k) = base^k p 2^{-k} k^{-alpha}
                let ratio = base / 2.0;
                let mut window = vec![q0];
                for k in 1..len0 {
                    window.push(p * rescale((k as f64).powf(-alpha), k as f64, ratio));
                }
                // mass beyond the window, 2^{-len0} Σ_{k ≥ len0} p 2^{len0-k} k^{-alpha}
                let mut tail = KahanSum::default();
                let mut tail_moment = KahanSum::default();
                for k in len0..len0 + 400 {
                    let v = p * (k as f64).powf(-alpha);
                    tail.add(rescale(v, len0 as f64 - k as f64, 2.0));
                    tail_moment.add(rescale(k as f64 * v, -(k as f64), 2.0));
                }
                let ln_tail = tail.value().ln() - len0 as f64 * std::f64::consts::LN_2;
                self.run_scaled(window, ln_tail, tail_moment.value())
            }
            _ => self.run(&make_family(family, self.window_len(0))?),
        }
    }

    /// Core loop on a scaled initial window, the log-mass of values beyond it and their
    /// first moment.
    fn run_scaled(
        &self,
        mut window: Vec<f64>,
        ln_extra: f64,
        extra_moment: f64,
    ) -> Result<LightConeRun> {
        if self.arity < 2 {
            return Err(Error::InvalidParameter(format!(
                "arity m = {} must be at least 2",
                self.arity
            )));
        }
        let mut base = window_base(self.arity);
        let len0 = self.window_len(0);
        window.resize(len0.max(window.len()), 0.0);
        let binary = self.arity == 2;
        let mut ln_terms = vec![ln_extra];
        // F contribution of escaped values, 2^{-j} times their first moment
        let mut esc_f = extra_moment;
        for (k, &v) in window.iter().enumerate().skip(len0) {
            if v > 0.0 {
                ln_terms.push(v.ln() - k as f64 * base.ln());
            }
            esc_f += k as f64 * rescale(v, -(k as f64), base);
        }
        let mut ln_escaped = log_sum_exp(&ln_terms);
        window.truncate(len0);
        let mut nonzero = from_scaled(&window, base)[1..]
            .iter()
            .copied()
            .collect::<KahanSum>()
            .value()
            + ln_escaped.exp();
        let mut out = LightConeRun::default();
        let mut scale = 1.0;
        for j in 0..=self.n {
            base = retilt(&mut window, base);
            out.bases.push(base);
            out.q_zero.push(window[0]);
            out.nonzero.push(nonzero);
            let q = from_scaled(&window, base);
            let m1 = q
                .iter()
                .enumerate()
                .map(|(k, v)| k as f64 * v)
                .collect::<KahanSum>()
                .value();
            if binary {
                out.free_energy.push(scale * m1 + esc_f);
            }
            if j == self.n {
                out.final_window = q[..=self.keep].to_vec();
                break;
            }
            let step = window_step(
                &window,
                self.arity,
                base,
                self.window_len(j + 1),
                ln_escaped,
            );
            if step.p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t: (j + 1) as f64 });
            }
            if binary {
                // pairs (escaped, small) and (escaped, escaped) stay escaped with value shifted by -1
                let mass = ln_escaped.exp();
                scale *= 0.5;
                esc_f += scale * (2.0 * mass * m1 - mass * (2.0 - mass) + step.escaping_moment);
            }
            ln_escaped = step.ln_escaped;
            nonzero = step.nonzero;
            if self.store_history {
                out.history.push(std::mem::replace(&mut window, step.p));
            } else {
                window = step.p;
            }
        }
        if self.store_history {
            out.history.push(window);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn brute_force_step(q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * q.len()];
        for (a, qa) in q.iter().enumerate() {
            for (b, qb) in q.iter().enumerate() {
                out[(a + b).saturating_sub(1)] += qa * qb;
            }
        }
        out
    }

    #[test]
    fn two_delta_family() {
        let q = make_family(&ModelFamily::two_delta(0.2), 4).unwrap();
        assert_eq!(q.probabilities(), &[0.8, 0.0, 0.2, 0.0, 0.0]);
        let q = make_family(&ModelFamily::two_delta(0.0), 2).unwrap();
        assert_eq!(q.get(0), 1.0);
        assert!(make_family(&ModelFamily::two_delta(1.5), 2).is_err());
    }

    #[test]
    fn power_law_family() {
        let q = make_family(&ModelFamily::power_law(1.0, 3.0), 80).unwrap();
        assert_relative_eq!(q.get(1), 0.5, max_relative = 1e-15);
        assert_relative_eq!(q.get(2), 1.0 / 32.0, max_relative = 1e-15);
        let li3: f64 = (1..200).map(|k| 0.5f64.powi(k) / (k as f64).powi(3)).sum();
        assert_relative_eq!(q.get(0), 1.0 - li3, max_relative = 1e-14);
        assert!(make_family(&ModelFamily::power_law(3.0, 3.0), 10).is_err());
    }

    #[test]
    fn one_step_of_two_delta() {
        let q = make_family(&ModelFamily::two_delta(0.2), 2).unwrap();
        let q1 = iterate(&q, 1, 10).unwrap();
        let expected = [0.64, 0.32, 0.0, 0.04];
        for (k, e) in expected.iter().enumerate() {
            assert!((q1.get(k) - e).abs() < 1e-15, "k={k}");
        }
        assert_relative_eq!(delta(&q1).unwrap().delta, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn step_matches_brute_force() {
        let q = [0.3, 0.1, 0.25, 0.05, 0.2, 0.1];
        let fast = from_scaled(
            &window_step(
                &to_scaled(&q, window_base(2)),
                2,
                2.0,
                10,
                f64::NEG_INFINITY,
            )
            .p,
            window_base(2),
        );
        let slow = brute_force_step(&q);
        for k in 0..10 {
            assert!((fast[k] - slow[k]).abs() < 1e-15);
        }
        let fast3 = from_scaled(
            &window_step(
                &to_scaled(&q, window_base(3)),
                3,
                3.0,
                14,
                f64::NEG_INFINITY,
            )
            .p,
            window_base(3),
        );
        let mut slow3 = vec![0.0; 20];
        for (a, qa) in q.iter().enumerate() {
            for (b, qb) in q.iter().enumerate() {
                for (c, qc) in q.iter().enumerate() {
                    slow3[(a + b + c).saturating_sub(1)] += qa * qb * qc;
                }
            }
        }
        for k in 0..14 {
            assert!((fast3[k] - slow3[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_examples() {
        for p in [0.0, 0.1, 0.2, 0.7] {
            let q = make_family(&ModelFamily::two_delta(p), 2).unwrap();
            assert_relative_eq!(delta(&q).unwrap().delta, 5.0 * p - 1.0, epsilon = 1e-15);
        }
        let d0 = DiscreteDistribution::delta_at(0);
        assert_eq!(delta(&d0).unwrap().delta, -1.0);
        assert_eq!(m_ary_delta(&d0, 3).unwrap(), 1.0);
        let q = make_family(&ModelFamily::two_delta(0.3), 2).unwrap();
        assert_relative_eq!(
            m_ary_delta(&q, 2).unwrap(),
            -delta(&q).unwrap().delta,
            epsilon = 1e-15
        );
    }

    #[test]
    fn delta_rejects_slowly_converging_truncation() {
        let q = make_family(&ModelFamily::power_law(1.0, 3.0), 200).unwrap();
        assert!(matches!(delta(&q), Err(Error::Divergence { .. })));
    }

    #[test]
    fn critical_points() {
        let c = critical_point(&ModelFamily::two_delta(0.5)).unwrap();
        assert!((c.p_c - 0.2).abs() < 1e-14);
        assert!(c.delta_at_root.abs() < 1e-10);
        let c6 = critical_point(&ModelFamily::power_law(1.0, 6.0)).unwrap();
        assert!((c6.p_c - 1.90956).abs() < 1e-4);
        assert!((c6.p_c - c6.closed_form.unwrap()).abs() < 1e-9);
        let c3 = critical_point(&ModelFamily::power_law(1.0, 3.0)).unwrap();
        assert!((c3.p_c - 1.02031).abs() < 1e-4);
    }

    #[test]
    fn summed_and_closed_delta_agree() {
        for alpha in [2.5, 3.0, 4.0, 6.0] {
            for p in [0.3, 1.0] {
                let a = power_law_delta_summed(p, alpha, 2000).unwrap();
                let b = power_law_delta_closed(p, alpha).unwrap();
                assert!((a - b).abs() < 1e-6, "alpha={alpha} p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn free_energy_examples() {
        let f = free_energy(&DiscreteDistribution::delta_at(2), 0).unwrap();
        assert_eq!(f, vec![2.0]);
        let q = make_family(&ModelFamily::two_delta(0.2), 2).unwrap();
        let f = free_energy(&q, 1).unwrap();
        assert_relative_eq!(f[1], 0.22, max_relative = 1e-14);
    }

    #[test]
    fn light_cone_matches_full_iteration() {
        let q = make_family(&ModelFamily::two_delta(0.23), 2).unwrap();
        let n = 12;
        let run = LightCone::new(n, 5).with_history().run(&q).unwrap();
        let mut full = q.clone();
        let mut mean_identity = q.mean();
        for m in 0..=n {
            assert!((run.q_zero[m] - full.get(0)).abs() < 1e-14);
            let exact_f = full.mean() / 2f64.powi(m as i32);
            assert_relative_eq!(run.free_energy[m], exact_f, max_relative = 1e-12);
            assert_relative_eq!(
                mean_identity / 2f64.powi(m as i32),
                exact_f,
                max_relative = 1e-10
            );
            for k in 0..run.history[m].len() {
                assert!((run.q_at(m, k) - full.get(k)).abs() < 1e-15, "m={m} k={k}");
            }
            mean_identity = 2.0 * mean_identity - 1.0 + full.get(0).powi(2);
            full = iterate(&full, 1, 1 << 20).unwrap();
        }
    }

    #[test]
    fn conditional_tail_examples() {
        let q = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        let c = conditional_tail(&q).unwrap();
        assert_eq!(c.get(1), 1.0);
        assert!(conditional_tail(&DiscreteDistribution::delta_at(0)).is_err());
    }

    #[test]
    fn delta_zero_is_absorbing() {
        let q = iterate(&DiscreteDistribution::delta_at(0), 7, 20).unwrap();
        assert_eq!(q.get(0), 1.0);
        assert_eq!(q.tail_mass(), 0.0);
    }
}
