//! Critical scaling functions `F`, with `f(x,t) = (t+t₀)^{-2} F(x/(t+t₀))`.
//!
//! `F` solves `(1 + x) F' = -2F - ½ ∫₀ˣ F(y) F(x - y) dy` and is fixed by `F(0)`.
//! Its Laplace transform is known through Bessel `K_β` with `β² = 1/4 + F(0)/2`, and
//! the tail decays as `x^{-α}` with `α = 1 + 2β`. The `ν`-ary generalization replaces
//! the pair convolution by a `ν`-fold one.

use crate::discrete::dot;
use crate::error::{Error, Result};
use crate::pde::{linear_fit, GridFunction};
use crate::quad::{trapezoid, trapezoid_corrected};
use crate::specfun::{self, RealOrder};
use serde::{Deserialize, Serialize};

/// `|F|` above this multiple of `F(0)` is reported as an instability.
pub const INSTABILITY_FACTOR: f64 = 1e3;

/// Values below this fraction of `F(0)` are treated as zero by the sign-change test.
///
/// At `F(0) = 4` the exact profile is `4e^{-2x}` and the tail amplitude vanishes, so
/// discretization error alone produces dips of order `dx^{5/2}` below zero near
/// `x ≈ 10`. Genuine sign changes for `α > 4` are many orders of magnitude larger.
pub const SIGN_TOLERANCE: f64 = 1e-6;

/// Offset used for limits at (half-)integer `β`.
pub const LIMIT_OFFSET: f64 = 1e-5;

/// A solution of the profile equation sampled on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuProfile {
    pub nu: usize,
    pub f0: f64,
    /// Tail exponent predicted from `F(0)`.
    pub alpha: f64,
    pub samples: GridFunction,
    /// `F'` on the grid, from the equation itself.
    pub derivative: Vec<f64>,
    /// First sign change of `F`, linearly interpolated between grid points. Only
    /// recorded once `F` drops below `-SIGN_TOLERANCE·F(0)`.
    pub first_zero: Option<f64>,
}

/// Binary (`ν = 2`) profile with its Bessel order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingProfile {
    pub f0: f64,
    pub beta: f64,
    pub alpha: f64,
    pub samples: GridFunction,
    pub derivative: Vec<f64>,
    pub first_zero: Option<f64>,
}

/// `β = √(1/4 + F(0)/2)`.
pub fn beta_of(f0: f64) -> f64 {
    (0.25 + 0.5 * f0).sqrt()
}

/// `F(0) = 2β² - 1/2`.
pub fn f0_of_beta(beta: f64) -> f64 {
    2.0 * beta * beta - 0.5
}

/// Tail exponent `α` of a `ν`-ary profile, inverting
/// `F(0) = (α/ν)(α - ν/(ν-1))^{1/(ν-1)}` by bisection on `α > ν/(ν-1)`.
pub fn nu_alpha(nu: usize, f0: f64) -> Result<f64> {
    check_nu(nu)?;
    if !(f0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "F(0) must be positive, got {f0}"
        )));
    }
    let lo = nu as f64 / (nu as f64 - 1.0);
    let mut hi = lo + 1.0;
    while nu_f0(nu, hi) < f0 {
        hi = lo + 2.0 * (hi - lo);
    }
    crate::discrete::bisect(|a| Ok(nu_f0(nu, a) - f0), lo, hi, 1e-14)
}

/// `F(0) = (α/ν)(α - ν/(ν-1))^{1/(ν-1)}`.
pub fn nu_f0(nu: usize, alpha: f64) -> f64 {
    let n = nu as f64;
    alpha / n * (alpha - n / (n - 1.0)).max(0.0).powf(1.0 / (n - 1.0))
}

fn check_nu(nu: usize) -> Result<()> {
    if !(2..=4).contains(&nu) {
        return Err(Error::InvalidParameter(format!(
            "arity ν = {nu} must be 2, 3 or 4"
        )));
    }
    Ok(())
}

impl NuProfile {
    /// `F` at any `x ≥ 0`: cubic Hermite interpolation on the grid, and beyond it the
    /// power law `F(L)(L/x)^α` continued from the last grid value.
    pub fn value(&self, x: f64) -> Result<f64> {
        hermite(&self.samples, &self.derivative, self.alpha, x).map(|(v, _)| v)
    }

    /// `F'` at any `x ≥ 0`, consistent with [`NuProfile::value`].
    pub fn slope(&self, x: f64) -> Result<f64> {
        hermite(&self.samples, &self.derivative, self.alpha, x).map(|(_, d)| d)
    }

    /// Whether `F` changes sign on the grid.
    pub fn is_positive(&self) -> bool {
        self.first_zero.is_none()
    }
}

fn hermite(g: &GridFunction, derivative: &[f64], alpha: f64, x: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            arg: x,
            limit: g.length(),
        });
    }
    let l = g.length();
    if x >= l {
        let fl = *g.values.last().expect("non-empty grid");
        let v = fl * (l / x).powf(alpha);
        return Ok((v, -alpha * v / x));
    }
    let h = g.dx;
    let i = ((x / h).floor() as usize).min(g.len() - 2);
    let s = x / h - i as f64;
    let (y0, y1) = (g.values[i], g.values[i + 1]);
    let (d0, d1) = (derivative[i] * h, derivative[i + 1] * h);
    let s2 = s * s;
    let s3 = s2 * s;
    let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * d1;
    let dv = ((6.0 * s2 - 6.0 * s) * y0
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (-6.0 * s2 + 6.0 * s) * y1
        + (3.0 * s2 - 2.0 * s) * d1)
        / h;
    Ok((v, dv))
}

impl ScalingProfile {
    fn from_nu(p: NuProfile) -> Self {
        Self {
            f0: p.f0,
            beta: beta_of(p.f0),
            alpha: p.alpha,
            samples: p.samples,
            derivative: p.derivative,
            first_zero: p.first_zero,
        }
    }

    /// `F` at any `x ≥ 0` (see [`NuProfile::value`]).
    pub fn value(&self, x: f64) -> Result<f64> {
        hermite(&self.samples, &self.derivative, self.alpha, x).map(|(v, _)| v)
    }

    pub fn slope(&self, x: f64) -> Result<f64> {
        hermite(&self.samples, &self.derivative, self.alpha, x).map(|(_, d)| d)
    }

    pub fn is_positive(&self) -> bool {
        self.first_zero.is_none()
    }

    /// Tail amplitude `A` in `F ~ A x^{-α}` from the Γ-function formula.
    pub fn tail_amplitude(&self) -> f64 {
        tail_amplitude(self.beta)
    }

    /// `∫₀^∞ x F dx`: grid part plus the analytic tail `∫_L^∞ x A x^{-α} dx`.
    pub fn first_moment(&self) -> f64 {
        let g = &self.samples;
        let w: Vec<f64> = g
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| g.x(i) * v)
            .collect();
        let l = g.length();
        let tail = if self.alpha > 2.0 {
            self.tail_amplitude() * l.powf(2.0 - self.alpha) / (self.alpha - 2.0)
        } else {
            f64::INFINITY
        };
        trapezoid_corrected(&w, g.dx) + tail
    }

    /// `∫₀^∞ F e^{-qx} dx`: grid part plus the analytic tail beyond the grid.
    pub fn laplace(&self, q: f64) -> f64 {
        let g = &self.samples;
        let w: Vec<f64> = g
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * (-q * g.x(i)).exp())
            .collect();
        let l = g.length();
        let a = self.tail_amplitude();
        // ∫_L^∞ A x^{-α} e^{-qx} dx, by the substitution x = L + s
        let tail = if a != 0.0 {
            crate::quad::adaptive(
                |s| a * (l + s).powf(-self.alpha) * (-q * (l + s)).exp(),
                0.0,
                60.0 / q.max(1e-3),
                1e-10,
                0.0,
                200,
            )
            .value
        } else {
            0.0
        };
        trapezoid_corrected(&w, g.dx) + tail
    }
}

/// Integrates `F' + xF' + ν/(ν-1) F + (1/ν) F^{∗ν} = 0` from `F(0) = f0` with Heun's
/// method, convolutions accumulated by the trapezoid rule over the stored history.
pub fn solve_nu_profile(nu: usize, f0: f64, length: f64, dx: f64) -> Result<NuProfile> {
    check_nu(nu)?;
    if !(f0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "F(0) must be positive, got {f0}"
        )));
    }
    if !(dx > 0.0) || !(length > dx) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < dx < L, got dx = {dx}, L = {length}"
        )));
    }
    let alpha = nu_alpha(nu, f0)?;
    let n = (length / dx).round() as usize;
    let lin = nu as f64 / (nu as f64 - 1.0);
    let inv_nu = 1.0 / nu as f64;
    // rev[k] stores the (k+1)-fold trapezoid convolution power P_{k+1} backwards, so
    // that the history sums are forward dot products: rev[k][n - i] = P_{k+1}(x_i)
    let levels = nu - 1;
    let mut f = vec![0.0; n + 1];
    let mut deriv = vec![0.0; n + 1];
    let mut rev = vec![vec![0.0; n + 1]; levels];
    f[0] = f0;
    rev[0][n] = f0;
    // F^{*k}(0) = 0 for k ≥ 2
    let rhs = |x: f64, fx: f64, conv: f64| -(lin * fx + inv_nu * conv) / (1.0 + x);
    deriv[0] = rhs(0.0, f0, 0.0);
    let mut first_zero = None;
    // history part of the (k+2)-fold convolution at index i: Σ_{j=1}^{i-1} F_j P_{k+1}(i-j),
    // where P_1 = F
    let history = |f: &[f64], rev_k: &[f64], i: usize| -> f64 {
        if i < 2 {
            return 0.0;
        }
        // P(i - j) for j = 1..i-1 is rev_k[n - i + j]
        dot(&f[1..i], &rev_k[n - i + 1..n])
    };
    for i in 0..n {
        let x1 = (i + 1) as f64 * dx;
        let pred = f[i] + dx * deriv[i];
        // convolutions at i+1 given the provisional F_{i+1}
        let conv_at = |fi1: f64, f: &[f64], rev: &[Vec<f64>]| -> Vec<f64> {
            let mut out = vec![0.0; levels];
            // P_1(i+1) = fi1; P_{k+2}(i+1) = dx (Σ_{j=1}^{i} F_j P_{k+1}(i+1-j) + ½ F_0 P_{k+1}(i+1) + ½ F_{i+1} P_{k+1}(0))
            let mut prev_top = fi1;
            for k in 0..levels {
                let p0 = if k == 0 { f0 } else { 0.0 };
                let h = history(f, &rev[k], i + 1);
                let s = h + 0.5 * f0 * prev_top + 0.5 * fi1 * p0;
                let v = dx * s;
                out[k] = v;
                prev_top = v;
            }
            out
        };
        let c_pred = conv_at(pred, &f, &rev);
        let d_pred = rhs(x1, pred, c_pred[levels - 1]);
        let next = f[i] + 0.5 * dx * (deriv[i] + d_pred);
        let c = conv_at(next, &f, &rev);
        let d = rhs(x1, next, c[levels - 1]);
        f[i + 1] = next;
        deriv[i + 1] = d;
        rev[0][n - i - 1] = next;
        for k in 0..levels - 1 {
            rev[k + 1][n - i - 1] = c[k];
        }
        if !next.is_finite() || next.abs() > INSTABILITY_FACTOR * f0 {
            return Err(Error::Instability {
                x: x1,
                value: next.abs(),
            });
        }
        if first_zero.is_none() && next < -SIGN_TOLERANCE * f0 {
            let j = (0..=i).rev().find(|&j| f[j] >= 0.0).unwrap_or(0);
            first_zero = Some((j as f64 + f[j] / (f[j] - f[j + 1])) * dx);
        }
    }
    Ok(NuProfile {
        nu,
        f0,
        alpha,
        samples: GridFunction::new(f, dx, 0.0)?,
        derivative: deriv,
        first_zero,
    })
}

/// Binary profile: solves `(1 + x) F' = -2F - ½ F∗F` from `F(0) = f0`.
pub fn solve_profile(f0: f64, length: f64, dx: f64) -> Result<ScalingProfile> {
    solve_nu_profile(2, f0, length, dx).map(ScalingProfile::from_nu)
}

/// `F̃(q) = -1 - q - q y'(q/2)/y(q/2)` with `y = K_β`.
pub fn laplace_profile(beta: RealOrder, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::DivergenceGuard {
            function: "laplace_profile",
            arg: "q",
            value: q,
        });
    }
    let l = specfun::bessel_k_log_derivative(beta.value(), 0.5 * q)?;
    Ok(-1.0 - q - q * l)
}

/// `c(β) = 2^{2-4β} Γ(1-β)/Γ(β)`, the amplitude of the `q^{2β}` term of `F̃`.
/// At integer `β` (poles of `Γ(1-β)`) this returns an error.
pub fn c_beta(beta: f64) -> Result<f64> {
    Ok(2f64.powf(2.0 - 4.0 * beta) * specfun::gamma(1.0 - beta)? / specfun::gamma(beta)?)
}

/// Coefficients of the small-`q` expansion of `F̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallQExpansion {
    pub beta: f64,
    /// `F̃(0) = 2β - 1`.
    pub constant: f64,
    /// Always `-1` (the critical-manifold condition `∫xF = 1`).
    pub linear: f64,
    /// `1/(4(β - 1))`.
    pub quadratic: f64,
    /// `c(β)`.
    pub nonanalytic: f64,
    /// `true` when `2β < 2`, i.e. the non-analytic term precedes the quadratic one.
    pub nonanalytic_first: bool,
}

pub fn small_q_expansion(beta: f64) -> Result<SmallQExpansion> {
    if !(beta > 0.5) {
        return Err(Error::InvalidParameter(format!(
            "β = {beta} must exceed 1/2"
        )));
    }
    Ok(SmallQExpansion {
        beta,
        constant: 2.0 * beta - 1.0,
        linear: -1.0,
        quadratic: 0.25 / (beta - 1.0),
        nonanalytic: c_beta(beta)?,
        nonanalytic_first: beta < 1.0,
    })
}

impl SmallQExpansion {
    /// Analytic part `(2β-1) - q + q²/(4(β-1)) - q⁴/(64(β-1)²(β-2))`.
    pub fn analytic(&self, q: f64) -> f64 {
        let b = self.beta;
        self.constant + self.linear * q + self.quadratic * q * q
            - q.powi(4) / (64.0 * (b - 1.0).powi(2) * (b - 2.0))
    }

    /// Non-analytic part `c q^{2β}(1 + q²/(8(β-1))) + c² q^{4β}/(4β)`.
    pub fn nonanalytic(&self, q: f64) -> f64 {
        let b = self.beta;
        let c = self.nonanalytic;
        c * q.powf(2.0 * b) * (1.0 + q * q / (8.0 * (b - 1.0)))
            + c * c * q.powf(4.0 * b) / (4.0 * b)
    }
}

/// Fitted amplitude of a power-law remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    /// Fitted exponent from the log-log slope.
    pub exponent: f64,
    /// Amplitude with the exponent fixed at its predicted value (least squares).
    pub amplitude: f64,
    /// The fit window.
    pub window: (f64, f64),
}

/// Fits `F̃(q) - analytic(q)` against `q^{2β}` on `q ∈ [lo, hi]` (log-spaced samples).
pub fn fit_nonanalytic(beta: f64, lo: f64, hi: f64) -> Result<PowerFit> {
    let exp = small_q_expansion(beta)?;
    let order = RealOrder::new(beta)?;
    let m = 24;
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..m {
        let q = lo * (hi / lo).powf(i as f64 / (m - 1) as f64);
        let c = exp.nonanalytic;
        // subtract the known subleading pieces of the non-analytic series
        let shape = q.powf(2.0 * beta) * (1.0 + q * q / (8.0 * (beta - 1.0)));
        let r = laplace_profile(order, q)?
            - exp.analytic(q)
            - c * c * q.powf(4.0 * beta) / (4.0 * beta);
        lx.push(q.ln());
        ly.push(r.abs().ln());
        num += r * shape;
        den += shape * shape;
    }
    let (slope, _) = linear_fit(&lx, &ly);
    Ok(PowerFit {
        exponent: slope,
        amplitude: num / den,
        window: (lo, hi),
    })
}

fn tail_amplitude_raw(alpha: f64) -> Result<f64> {
    Ok(
        2f64.powf(4.0 - 2.0 * alpha) * specfun::gamma((3.0 - alpha) / 2.0)?
            / (specfun::gamma(1.0 - alpha)? * specfun::gamma((alpha - 1.0) / 2.0)?),
    )
}

/// Amplitude `A` of the tail `F(x) ≈ A x^{-α}`, `α = 1 + 2β`:
/// `A = 2^{4-2α} Γ((3-α)/2) / (Γ(1-α) Γ((α-1)/2))`.
///
/// At integer `α` the expression is a ratio of poles. For even `α` (half-integer `β`)
/// the amplitude vanishes; for odd `α` the limit is the symmetric average at
/// `α ± LIMIT_OFFSET`, accurate to `O(LIMIT_OFFSET²)`.
pub fn tail_amplitude(beta: f64) -> f64 {
    let alpha = 1.0 + 2.0 * beta;
    let nearest = alpha.round();
    if (alpha - nearest).abs() < specfun::INTEGER_FLAG_TOLERANCE {
        if nearest as i64 % 2 == 0 {
            return 0.0;
        }
        let a = tail_amplitude_raw(nearest + LIMIT_OFFSET).unwrap_or(f64::NAN);
        let b = tail_amplitude_raw(nearest - LIMIT_OFFSET).unwrap_or(f64::NAN);
        return 0.5 * (a + b);
    }
    tail_amplitude_raw(alpha).unwrap_or(f64::NAN)
}

/// Local tail fit of sampled `F`: `ln|F|` against `ln x` on `[x_lo, x_hi]`, with the
/// amplitude fitted at the fixed exponent `alpha`.
pub fn fit_tail(g: &GridFunction, alpha: f64, x_lo: f64, x_hi: f64) -> Result<PowerFit> {
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &v) in g.values.iter().enumerate() {
        let x = g.x(i);
        if x < x_lo || x > x_hi || v == 0.0 {
            continue;
        }
        lx.push(x.ln());
        ly.push(v.abs().ln());
        let shape = x.powf(-alpha);
        num += v * shape;
        den += shape * shape;
    }
    if lx.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "tail window [{x_lo}, {x_hi}] is not on the grid"
        )));
    }
    let (slope, _) = linear_fit(&lx, &ly);
    Ok(PowerFit {
        exponent: -slope,
        amplitude: num / den,
        window: (x_lo, x_hi),
    })
}

/// `α` interval of positive `ν`-ary profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityWindow {
    pub nu: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub horizon: f64,
    pub dx: f64,
}

/// Scans `α` (through `F(0)`) for profiles without a sign change on `[0, horizon]`.
///
/// The lower end is the `F(0) → 0` limit `α = ν/(ν-1)`, provided the profile just
/// above it is positive. The upper end is bracketed on a coarse `α` scan and refined by
/// bisection to `tol`.
pub fn positivity_window(nu: usize, horizon: f64, dx: f64, tol: f64) -> Result<PositivityWindow> {
    check_nu(nu)?;
    let lo = nu as f64 / (nu as f64 - 1.0);
    let positive = |alpha: f64| -> Result<bool> {
        let f0 = nu_f0(nu, alpha);
        Ok(solve_nu_profile(nu, f0, horizon, dx)?.is_positive())
    };
    let first = lo + 0.01;
    if !positive(first)? {
        return Err(Error::Degenerate(format!(
            "ν = {nu} profile just above the lower limit α = {lo} already changes sign"
        )));
    }
    let step = 0.25;
    let mut a = first;
    let mut b = first + step;
    while positive(b)? {
        a = b;
        b += step;
        if b > 12.0 {
            return Err(Error::Degenerate(format!(
                "no sign change found for α up to {b}"
            )));
        }
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if positive(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(PositivityWindow {
        nu,
        alpha_min: lo,
        alpha_max: 0.5 * (a + b),
        horizon,
        dx,
    })
}

/// Grid first moment helper used for `ν`-ary profiles (no analytic tail).
pub fn grid_first_moment(p: &NuProfile) -> f64 {
    let g = &p.samples;
    let w: Vec<f64> = g
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| g.x(i) * v)
        .collect();
    trapezoid(&w, g.dx)
}
