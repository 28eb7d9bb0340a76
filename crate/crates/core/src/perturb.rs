//! Linear perturbations of scaling solutions.
//!
//! A perturbation `g = (t+t₀)^{γ-2} G_γ(x/(t+t₀))` of a scaling solution stays of this form,
//! with Laplace transform
//!
//! `G̃_γ(q) = G_γ(0) q^{-γ} y(q/2)^{-2} ∫_q^∞ q₁^{γ-1} y(q₁/2)² dq₁`, `y = K_β`,
//!
//! the branch that decays as `q → ∞`. The exponent `γ` decides whether the perturbation
//! dies out, moves the tail, or pushes the solution off the critical manifold.

use crate::error::{Error, Result};
use crate::quad;
use crate::scaling::laplace_profile;
use crate::specfun::{self, RealOrder};
use serde::{Deserialize, Serialize};

/// Relative tolerance of the eigenfunction quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-12;

/// Distance from `0` or `2β - 1` at which [`classify`] flags a boundary case.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Below this `q₁` the integrand of [`d_coefficient`] is replaced by its two leading
/// small-argument terms.
const SERIES_CUTOFF: f64 = 1e-3;

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::DivergenceGuard {
            function: "eigenfunction",
            arg: "q",
            value: q,
        });
    }
    Ok(())
}

/// `ln(e^z K_β(z))`.
fn ln_k_scaled(beta: f64, z: f64) -> Result<f64> {
    Ok(specfun::bessel_k_scaled(beta, z)?.ln())
}

/// `G̃_γ(q)` for the background profile of order `beta`.
///
/// With `q₁ = q e^u` the integral becomes
/// `∫₀^∞ e^{γu - q(e^u - 1)} [K̂_β(q e^u/2) / K̂_β(q/2)]² du`, `K̂ = e^z K`, which stays
/// well scaled for every `q` and `γ`.
pub fn eigenfunction(beta: f64, gamma: f64, g0: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    let ln_base = ln_k_scaled(beta, 0.5 * q)?;
    let ln_integrand = |u: f64| -> Result<f64> {
        let q1 = q * u.exp();
        Ok(gamma * u - q * u.exp_m1() + 2.0 * (ln_k_scaled(beta, 0.5 * q1)? - ln_base))
    };
    // walk out until the integrand is negligible relative to its running peak
    let mut u = 0.0;
    let mut peak = ln_integrand(0.0)?;
    let step = 0.25;
    loop {
        u += step;
        let v = ln_integrand(u)?;
        peak = peak.max(v);
        if v < peak - 45.0 && q * u.exp() > 1.0 {
            break;
        }
        if u > 200.0 {
            return Err(Error::Degenerate(format!(
                "eigenfunction integrand does not decay (β = {beta}, γ = {gamma}, q = {q})"
            )));
        }
    }
    let mut failure = None;
    let integral = quad::adaptive(
        |u| match ln_integrand(u) {
            Ok(v) => v.exp(),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        u,
        QUADRATURE_TOLERANCE,
        0.0,
        4000,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(g0 * integral.value)
}

/// Eigenfunction tabulated on a set of `q` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenfunction {
    pub beta: f64,
    pub gamma: f64,
    /// Normalization `G_γ(0)`.
    pub g0: f64,
    /// `(q, G̃_γ(q))` pairs.
    pub q_samples: Vec<(f64, f64)>,
}

impl Eigenfunction {
    pub fn tabulate(beta: f64, gamma: f64, g0: f64, qs: &[f64]) -> Result<Self> {
        let q_samples = qs
            .iter()
            .map(|&q| Ok((q, eigenfunction(beta, gamma, g0, q)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            beta,
            gamma,
            g0,
            q_samples,
        })
    }

    /// `G_γ(0)/(2β - γ)`, the `q → 0` limit when `γ < 2β`.
    pub fn small_q_limit(&self) -> Option<f64> {
        (self.gamma < 2.0 * self.beta).then(|| self.g0 / (2.0 * self.beta - self.gamma))
    }
}

/// Residual of `qG̃ + F̃G̃ - qG̃' - (γ-1)G̃ - G(0)`, with `G̃'` from a five-point
/// difference of [`eigenfunction`] and `F̃` from [`laplace_profile`].
pub fn ode_residual(beta: f64, gamma: f64, g0: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    let h = 1e-2 * q;
    let g = |q: f64| eigenfunction(beta, gamma, g0, q);
    let slope =
        (g(q - 2.0 * h)? - 8.0 * g(q - h)? + 8.0 * g(q + h)? - g(q + 2.0 * h)?) / (12.0 * h);
    let value = g(q)?;
    let f = laplace_profile(RealOrder::new(beta)?, q)?;
    Ok(q * value + f * value - q * slope - (gamma - 1.0) * value - g0)
}

/// Coefficient `d(β, γ)` of the `G(0) q^{2β-γ}` term of the small-`q` expansion.
///
/// With `A = 2^{4β-2} Γ(β)²`, the leading small-argument form of `y(q₁/2)²` is `A q₁^{-2β}`:
///
/// * `γ > 2β`: `d = A^{-1} ∫₀^∞ q₁^{γ-1} y(q₁/2)² dq₁`;
/// * `-1 < γ - 2β < 0`: `d = A^{-1} ∫₀^∞ q₁^{γ-1} (y(q₁/2)² - A q₁^{-2β}) dq₁`.
///
/// Other sectors have no closed integral form here and return an error.
pub fn d_coefficient(beta: f64, gamma: f64) -> Result<f64> {
    let order = RealOrder::new(beta)?;
    if order.near_integer() {
        return Err(Error::InvalidParameter(format!(
            "d(β, γ) needs non-integer β (logarithmic terms at β = {beta})"
        )));
    }
    let s = gamma - 2.0 * beta;
    let subtracted = if s > 0.0 {
        false
    } else if s > -1.0 && s < 0.0 {
        true
    } else {
        return Err(Error::InvalidParameter(format!(
            "no integral form for d(β, γ) with γ - 2β = {s}"
        )));
    };
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "d(β, γ) needs γ > 0, got {gamma}"
        )));
    }
    let a = 2f64.powf(4.0 * beta - 2.0) * specfun::gamma(beta)?.powi(2);
    let y_sq = |q1: f64| -> Result<f64> { Ok(specfun::bessel_k(order, 0.5 * q1)?.powi(2)) };

    // y(z)² = A(2z)^{-2β} [1 - z²/(2(β-1)) + 2^{1-2β} z^{2β} Γ(-β)/Γ(β) + …], so
    // y(q₁/2)² - A q₁^{-2β} ≈ A [-q₁^{2-2β}/(8(β-1)) + 2^{1-4β} Γ(-β)/Γ(β)].
    let b1 = -1.0 / (8.0 * (beta - 1.0));
    let b2 = 2f64.powf(1.0 - 4.0 * beta) * specfun::gamma(-beta)? / specfun::gamma(beta)?;
    if subtracted && gamma + 2.0 - 2.0 * beta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "subtracted integral for d(β, γ) diverges at 0 (γ + 2 - 2β = {})",
            gamma + 2.0 - 2.0 * beta
        )));
    }
    // Both sectors reduce to the same expression: on [0, δ] the series is integrated
    // term by term, and the subtracted power q₁^{γ-1-2β} integrates to δ^s/s over
    // [δ, ∞) (s < 0) exactly as it does over [0, δ] (s > 0).
    let delta = SERIES_CUTOFF;
    let e = gamma + 2.0 - 2.0 * beta;
    let analytic = delta.powf(s) / s + b1 * delta.powf(e) / e + b2 * delta.powf(gamma) / gamma;

    // δ ≤ q₁ < ∞ in u = ln q₁; the upper end decays like e^{-e^u}
    let mut failure = None;
    let mut integrand = |u: f64| {
        let q1 = u.exp();
        match y_sq(q1) {
            Ok(v) => q1.powf(gamma) * v / a,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let upper = (80.0 + 10.0 * gamma).ln();
    let lower_part = quad::adaptive(
        &mut integrand,
        delta.ln(),
        0.0,
        QUADRATURE_TOLERANCE,
        1e-300,
        4000,
    );
    let upper_part = quad::adaptive(
        &mut integrand,
        0.0,
        upper,
        QUADRATURE_TOLERANCE,
        1e-300,
        4000,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(analytic + lower_part.value + upper_part.value)
}

/// Long-time fate of a perturbation with exponent `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `γ < 0`: decays relative to the scaling solution.
    Irrelevant,
    /// `γ = 0`: a shift along the family of scaling functions.
    Marginal,
    /// `0 < γ < 2β - 1`: grows, stays on the critical manifold, changes the tail.
    RelevantOnManifold,
    /// `γ = 2β - 1`: leaves the critical manifold.
    OffManifold,
    /// `γ > 2β - 1`: initial data with a tail heavier than `x^{-2}`.
    HeavyTail,
}

/// Output of [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub beta: f64,
    pub gamma: f64,
    pub regime: Regime,
    /// New tail exponent `1 + 2β - γ` (on-manifold), `t_c` exponent `1/(2β-1)`
    /// (off-manifold), or free-energy exponent `1/(γ - 2β + 1)` (heavy tail).
    pub exponent: Option<f64>,
    /// `γ` within [`BOUNDARY_TOLERANCE`] of `0` or `2β - 1`.
    pub boundary: bool,
}

pub fn classify(beta: f64, gamma: f64) -> Result<Classification> {
    if !(beta > 0.5) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "classify needs β > 1/2 (β = {beta}, γ = {gamma})"
        )));
    }
    let edge = 2.0 * beta - 1.0;
    let near = |a: f64, b: f64| (a - b).abs() <= BOUNDARY_TOLERANCE;
    let (regime, exponent) = if near(gamma, 0.0) {
        (Regime::Marginal, None)
    } else if near(gamma, edge) {
        (Regime::OffManifold, Some(1.0 / edge))
    } else if gamma < 0.0 {
        (Regime::Irrelevant, None)
    } else if gamma < edge {
        (Regime::RelevantOnManifold, Some(1.0 + 2.0 * beta - gamma))
    } else {
        (Regime::HeavyTail, Some(1.0 / (gamma - edge)))
    };
    Ok(Classification {
        beta,
        gamma,
        regime,
        exponent,
        boundary: near(gamma, 0.0) || near(gamma, edge),
    })
}
