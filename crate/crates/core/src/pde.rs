//! Direct evolution of `∂f/∂t = ∂f/∂x + ½ ∫₀ˣ f(x - y) f(y) dy` on a uniform grid.
//!
//! The time step equals the grid spacing, so the advection is an exact shift by one
//! cell. The convolution is integrated along the characteristic `x + t = const` with
//! Heun's method and trapezoidal convolutions, which makes the scheme second order.
//!
//! `f(x, t)` only depends on initial data on `[0, x + t]`. The grid therefore loses its
//! last point at every step instead of being extended by zero; the surviving values
//! carry no truncation error from the right boundary.

use crate::convolution::{Convolver, Method};
use crate::error::{Error, Result};
use crate::quad::{trapezoid, trapezoid_corrected};
use crate::specfun;
use serde::{Deserialize, Serialize};

/// Density sampled at `x_i = i·dx`, `i = 0..N`, at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub dx: f64,
    pub t: f64,
}

impl GridFunction {
    pub fn new(values: Vec<f64>, dx: f64, t: f64) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid spacing dx = {dx} must be positive"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InvalidParameter(
                "a grid needs at least two points".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at grid index {i}"
            )));
        }
        Ok(Self { values, dx, t })
    }

    /// Samples `f` on `[0, length]`.
    pub fn from_fn(length: f64, dx: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = (length / dx).round() as usize;
        Self::new((0..=n).map(|i| f(i as f64 * dx)).collect(), dx, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    /// Right end of the grid.
    pub fn length(&self) -> f64 {
        self.x(self.len() - 1)
    }

    pub fn at_origin(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `∫ x f dx` over the grid (trapezoid).
    pub fn first_moment(&self) -> f64 {
        let w: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| self.x(i) * v)
            .collect();
        trapezoid(&w, self.dx)
    }

    /// `∫ f(x) e^{-px} dx` over the grid, endpoint-corrected trapezoid.
    pub fn laplace(&self, p: f64) -> f64 {
        let w: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * (-p * self.x(i)).exp())
            .collect();
        trapezoid_corrected(&w, self.dx)
    }

    /// Linear interpolation, `None` outside the grid.
    pub fn interpolate(&self, x: f64) -> Option<f64> {
        if !(0.0..=self.length()).contains(&x) {
            return None;
        }
        let s = x / self.dx;
        let i = (s.floor() as usize).min(self.len() - 2);
        let w = s - i as f64;
        Some((1.0 - w) * self.values[i] + w * self.values[i + 1])
    }

    /// Largest `|f - g|` over the points both grids share, with `g` given as a function.
    pub fn max_error(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (v - g(self.x(i))).abs())
            .fold(0.0, f64::max)
    }
}

/// Which flow to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `∂f/∂t = ∂f/∂x + ½ f∗f`.
    #[default]
    Standard,
    /// The same with an extra `-f` on the right-hand side.
    Hmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// Must equal the grid spacing.
    pub dt: f64,
    pub variant: Variant,
    /// Evolution stops with a blow-up signal once `f(0, t)` exceeds this.
    pub blowup_threshold: f64,
}

impl EvolutionConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            variant: Variant::Standard,
            blowup_threshold: f64::INFINITY,
        }
    }

    pub fn variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn blowup_threshold(mut self, threshold: f64) -> Self {
        self.blowup_threshold = threshold;
        self
    }
}

/// One row of the per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub t: f64,
    pub f_origin: f64,
    /// `∫ x f dx` over the current (shrinking) grid.
    pub first_moment: f64,
    pub max: f64,
    pub min: f64,
}

impl Diagnostic {
    fn of(g: &GridFunction) -> Self {
        Self {
            t: g.t,
            f_origin: g.at_origin(),
            first_moment: g.first_moment(),
            max: g.max(),
            min: g.min(),
        }
    }
}

/// Step-by-step integrator. Use [`evolve`] for a fixed horizon.
#[derive(Debug)]
pub struct Evolver {
    pub grid: GridFunction,
    pub cfg: EvolutionConfig,
    pub diagnostics: Vec<Diagnostic>,
    conv: Convolver,
}

impl Evolver {
    pub fn new(grid: GridFunction, cfg: EvolutionConfig) -> Result<Self> {
        if ((cfg.dt - grid.dx) / grid.dx).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "time step {} must equal the grid spacing {}",
                cfg.dt, grid.dx
            )));
        }
        let diagnostics = vec![Diagnostic::of(&grid)];
        Ok(Self {
            grid,
            cfg,
            diagnostics,
            conv: Convolver::new(Method::Auto),
        })
    }

    /// Uses the direct `O(N²)` convolution everywhere (reference path).
    pub fn direct(mut self) -> Self {
        self.conv = Convolver::new(Method::Direct);
        self
    }

    fn rate(&mut self, f: &[f64]) -> Vec<f64> {
        let mut c = self.conv.trapezoid(f, f, self.grid.dx);
        for (ci, fi) in c.iter_mut().zip(f) {
            *ci *= 0.5;
            if self.cfg.variant == Variant::Hmp {
                *ci -= fi;
            }
        }
        c
    }

    /// Advances by one step; the grid loses its last point.
    pub fn step(&mut self) -> Result<()> {
        let n = self.grid.len();
        if n < 3 {
            return Err(Error::InvalidParameter(
                "grid exhausted: horizon exceeds the domain length".into(),
            ));
        }
        let dt = self.cfg.dt;
        let f = std::mem::take(&mut self.grid.values);
        let a = self.rate(&f);
        let pred: Vec<f64> = (0..n - 1).map(|i| f[i + 1] + dt * a[i + 1]).collect();
        let b = self.rate(&pred);
        let next: Vec<f64> = (0..n - 1)
            .map(|i| f[i + 1] + 0.5 * dt * (a[i + 1] + b[i]))
            .collect();
        let t = self.grid.t + dt;
        if next.iter().any(|v| !v.is_finite()) {
            self.grid.values = f;
            return Err(Error::NonFinite { t });
        }
        self.grid.values = next;
        self.grid.t = t;
        let d = Diagnostic::of(&self.grid);
        self.diagnostics.push(d);
        if d.f_origin > self.cfg.blowup_threshold {
            return Err(Error::BlowUp {
                t,
                value: d.f_origin,
            });
        }
        Ok(())
    }
}

/// Final grid plus the diagnostics of every step.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub grid: GridFunction,
    pub diagnostics: Vec<Diagnostic>,
}

impl Evolution {
    /// Most negative value seen relative to the running maximum (0 if never negative).
    pub fn worst_negativity(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| {
                if d.max > 0.0 {
                    (-d.min / d.max).max(0.0)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// `f(0, t)` at every recorded time.
    pub fn origin_series(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.f_origin).collect()
    }
}

/// Number of steps of size `dt` in `horizon`, which must be a multiple of `dt`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    let s = horizon / dt;
    let n = s.round();
    if (s - n).abs() > 1e-6 || n < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Evolves `f` up to time `f.t + horizon`.
pub fn evolve(f: GridFunction, cfg: EvolutionConfig, horizon: f64) -> Result<Evolution> {
    let steps = step_count(horizon, cfg.dt)?;
    let mut ev = Evolver::new(f, cfg)?;
    for _ in 0..steps {
        ev.step()?;
    }
    Ok(Evolution {
        grid: ev.grid,
        diagnostics: ev.diagnostics,
    })
}

/// Integrates `df̃/dt = -f(0,t) + p f̃ + f̃²/2` from `f_tilde0` over the samples of
/// `f(0, t)` (spacing `dt`) with the classical RK4, interpolating the forcing at
/// midpoints by local cubics.
pub fn laplace_evolve(f_origin: &[f64], dt: f64, p: f64, f_tilde0: f64) -> Result<f64> {
    const LIMIT: f64 = 1e150;
    let forcing = |k: usize, half: bool| -> f64 {
        if !half {
            return f_origin[k];
        }
        let n = f_origin.len();
        // cubic through four neighbouring samples, shifted inward at the ends
        let s = k.saturating_sub(1).min(n.saturating_sub(4));
        if n < 4 {
            return 0.5 * (f_origin[k] + f_origin[k + 1]);
        }
        let x = k as f64 + 0.5 - s as f64;
        let y = &f_origin[s..s + 4];
        let l0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
        let l1 = x * (x - 2.0) * (x - 3.0) / 2.0;
        let l2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
        let l3 = x * (x - 1.0) * (x - 2.0) / 6.0;
        l0 * y[0] + l1 * y[1] + l2 * y[2] + l3 * y[3]
    };
    let rhs = |g: f64, f0: f64| -f0 + p * g + 0.5 * g * g;
    let mut g = f_tilde0;
    for k in 0..f_origin.len().saturating_sub(1) {
        let (a, m, b) = (forcing(k, false), forcing(k, true), forcing(k + 1, false));
        let k1 = rhs(g, a);
        let k2 = rhs(g + 0.5 * dt * k1, m);
        let k3 = rhs(g + 0.5 * dt * k2, m);
        let k4 = rhs(g + dt * k3, b);
        g += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t = (k + 1) as f64 * dt;
        if !g.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if g.abs() > LIMIT {
            return Err(Error::BlowUp { t, value: g });
        }
    }
    Ok(g)
}

/// Estimated blow-up of `f(0, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    /// Extrapolated divergence time.
    pub t_c: f64,
    /// Fitted exponent `γ` of `f(0,t) ~ (t_c - t)^{-γ}`.
    pub exponent: f64,
    /// Time at which the threshold was crossed.
    pub detected_at: f64,
}

/// Runs `f0` until `f(0, t)` crosses `cfg.blowup_threshold` or the horizon ends.
///
/// The crossing time is refined from the log-derivative: for `f ~ (t_c - t)^{-γ}` the
/// ratio `f/ḟ = (t_c - t)/γ` is linear in `t`, so a straight-line fit over the samples
/// with `f(0,t)` between a sixteenth of the threshold and the threshold gives `t_c` as
/// its root. This works for simple and double poles alike.
pub fn blowup_time(f0: GridFunction, cfg: EvolutionConfig, horizon: f64) -> Result<Option<BlowUp>> {
    let steps = step_count(horizon, cfg.dt)?;
    let threshold = cfg.blowup_threshold;
    if !threshold.is_finite() {
        return Err(Error::InvalidParameter(
            "blow-up detection needs a finite threshold".into(),
        ));
    }
    let mut ev = Evolver::new(f0, cfg)?;
    let mut detected = None;
    for _ in 0..steps {
        match ev.step() {
            Ok(()) => {}
            Err(Error::BlowUp { t, .. }) => {
                detected = Some(t);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let Some(detected_at) = detected else {
        return Ok(None);
    };
    let d = &ev.diagnostics;
    let dt = cfg.dt;
    let mut ts = Vec::new();
    let mut rs = Vec::new();
    for i in 1..d.len() - 1 {
        let f = d[i].f_origin;
        if f < threshold / 16.0 {
            continue;
        }
        let deriv = (d[i + 1].f_origin - d[i - 1].f_origin) / (2.0 * dt);
        if deriv > 0.0 {
            ts.push(d[i].t);
            rs.push(f / deriv);
        }
    }
    if ts.len() < 3 {
        return Err(Error::Degenerate(format!(
            "only {} samples in the blow-up fit window; lower dt or the threshold",
            ts.len()
        )));
    }
    let (slope, intercept) = linear_fit(&ts, &rs);
    Ok(Some(BlowUp {
        t_c: -intercept / slope,
        exponent: -1.0 / slope,
        detected_at,
    }))
}

/// Least-squares line `y = slope·x + intercept`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Small-time solution as the positive series `Σ u_n(x, t)`.
///
/// `u_0(x,t) = f(x + t)` and
/// `u_n(x,t) = ½ Σ_{m<n} ∫₀ᵗ dτ (u_m(·,τ) ∗ u_{n-m-1}(·,τ))(x + t - τ)`,
/// all on the grid of `f_init` with `τ` stepped by `dx` (so `t` must be a multiple of
/// `dx`). Returns the sum at time `t` on `[0, L - t]` together with the individual terms.
pub fn positivity_series(f_init: &GridFunction, t: f64, n_max: usize) -> Result<PositivitySeries> {
    let dx = f_init.dx;
    let k_steps = step_count(t, dx)?;
    let len = f_init.len();
    if k_steps + 2 > len {
        return Err(Error::InvalidParameter(format!(
            "time {t} exceeds the grid length"
        )));
    }
    // running maximum g(x) and the convergence precondition t (x + t) g(x + t) < 2
    let mut g = f_init.values.clone();
    for i in 1..len {
        g[i] = g[i].max(g[i - 1]);
    }
    for (i, &gi) in g.iter().enumerate().skip(k_steps) {
        let z = f_init.x(i);
        if t * z * gi >= 2.0 {
            return Err(Error::ConditionViolated(format!(
                "t (x + t) g(x + t) = {} ≥ 2 at x = {}",
                t * z * gi,
                z - t
            )));
        }
    }
    let mut conv = Convolver::new(Method::Auto);
    // u[n][k] = u_n(·, τ_k) on [0, L - τ_k]
    let mut u: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_max + 1);
    u.push((0..=k_steps).map(|k| f_init.values[k..].to_vec()).collect());
    for n in 1..=n_max {
        // s[k] = ½ Σ_m u_m(·,τ_k) ∗ u_{n-m-1}(·,τ_k), using symmetry in m
        let s: Vec<Vec<f64>> = (0..=k_steps)
            .map(|k| {
                let width = len - k;
                let mut acc = vec![0.0; width];
                for m in 0..n.div_ceil(2) {
                    let l = n - 1 - m;
                    let w = if m == l { 0.5 } else { 1.0 };
                    let c = conv.trapezoid(&u[m][k], &u[l][k], dx);
                    for (a, v) in acc.iter_mut().zip(c) {
                        *a += w * v;
                    }
                }
                acc
            })
            .collect();
        // u_n(x_i, τ_k) = ∫₀^{τ_k} s(x_i + τ_k - τ, τ) dτ by the trapezoid rule in τ
        let un: Vec<Vec<f64>> = (0..=k_steps)
            .map(|k| {
                (0..len - k)
                    .map(|i| {
                        if k == 0 {
                            return 0.0;
                        }
                        let mut total = 0.0;
                        for j in 0..=k {
                            let w = if j == 0 || j == k { 0.5 } else { 1.0 };
                            total += w * s[j][i + k - j];
                        }
                        total * dx
                    })
                    .collect()
            })
            .collect();
        u.push(un);
    }
    let terms: Vec<Vec<f64>> = u.iter().map(|un| un[k_steps].clone()).collect();
    let mut sum = vec![0.0; len - k_steps];
    for term in &terms {
        for (s, v) in sum.iter_mut().zip(term) {
            *s += v;
        }
    }
    Ok(PositivitySeries {
        sum: GridFunction::new(sum, dx, f_init.t + t)?,
        terms,
        running_max: g,
    })
}

/// Output of [`positivity_series`].
#[derive(Debug, Clone)]
pub struct PositivitySeries {
    pub sum: GridFunction,
    /// `u_n(x_i, t)` for `n = 0..=n_max`.
    pub terms: Vec<Vec<f64>>,
    /// `g(x) = max_{y ≤ x} f_init(y)` on the initial grid.
    pub running_max: Vec<f64>,
}

impl PositivitySeries {
    /// Checks `0 ≤ u_n(x,t) ≤ (t/2)ⁿ (x+t)ⁿ g(x+t)ⁿ⁺¹` for every term; returns the
    /// largest ratio to the bound. Entries below the convolution roundoff floor
    /// (`1e-14` of the largest `u_0`) are not compared.
    pub fn bound_ratio(&self) -> f64 {
        let t = self.sum.t;
        let dx = self.sum.dx;
        let shift = (t / dx).round() as usize;
        let floor = 1e-14 * self.terms[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst: f64 = 0.0;
        for (n, term) in self.terms.iter().enumerate().skip(1) {
            for (i, &v) in term.iter().enumerate() {
                let z = (i + shift) as f64 * dx;
                let g = self.running_max[i + shift];
                let bound = (0.5 * t * z).powi(n as i32) * g.powi(n as i32 + 1);
                if v < -floor {
                    return f64::INFINITY;
                }
                if v > floor {
                    worst = worst.max(v / bound);
                }
            }
        }
        worst
    }
}

/// Time-independent solution with `f(0) = f0`: `√(2f0) J₁(x√(2f0)) / x`.
pub fn fixed_point(f0: f64, x: f64) -> f64 {
    let s = (2.0 * f0).sqrt();
    if x.abs() < 1e-4 / s.max(1e-300) {
        // f0 - f0² x²/4 + f0³ x⁴/48
        let x2 = x * x;
        return f0 - f0 * f0 * x2 / 4.0 + f0.powi(3) * x2 * x2 / 48.0;
    }
    s * specfun::bessel_j1(x * s) / x
}

/// Laplace transform `√(p² + 2f0) - p` of [`fixed_point`].
pub fn fixed_point_laplace(f0: f64, p: f64) -> f64 {
    // rationalized to avoid cancellation at large p
    2.0 * f0 / ((p * p + 2.0 * f0).sqrt() + p)
}

/// [`fixed_point`] sampled on `[0, length]`.
pub fn fixed_point_profile(f0: f64, length: f64, dx: f64) -> Result<GridFunction> {
    if !(f0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fixed point needs f(0) > 0, got {f0}"
        )));
    }
    GridFunction::from_fn(length, dx, |x| fixed_point(f0, x))
}

/// The single-exponential solution `4κ²/sin²(κ(t+t₀)) · exp(-2κx / tan(κ(t+t₀)))`.
/// Negative `kappa_sq` selects the imaginary branch `κ = i κ̂`.
pub fn single_exponential(kappa_sq: f64, t0: f64, x: f64, t: f64) -> f64 {
    let s = t + t0;
    let (amp, rate) = if kappa_sq > 0.0 {
        let k = kappa_sq.sqrt();
        (
            4.0 * kappa_sq / (k * s).sin().powi(2),
            2.0 * k / (k * s).tan(),
        )
    } else if kappa_sq < 0.0 {
        let k = (-kappa_sq).sqrt();
        (
            4.0 * k * k / (k * s).sinh().powi(2),
            2.0 * k / (k * s).tanh(),
        )
    } else {
        (4.0 / (s * s), 2.0 / s)
    };
    amp * (-rate * x).exp()
}
