//! Trapezoidal self- and cross-convolutions `∫₀ˣ f(x - y) g(y) dy` on a uniform grid.
//!
//! The direct `O(N²)` sum is the reference; the FFT path is used above
//! [`FFT_THRESHOLD`] points and agrees with it to roundoff.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

/// Grid length above which [`Convolver::trapezoid`] switches to the FFT path.
pub const FFT_THRESHOLD: usize = 192;

/// Which summation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// Reusable convolution engine; caches FFT plans by length.
pub struct Convolver {
    method: Method,
    planner: FftPlanner<f64>,
    plans: HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("method", &self.method)
            .finish()
    }
}

impl Convolver {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            planner: FftPlanner::new(),
            plans: HashMap::new(),
        }
    }

    /// Trapezoid rule for `c_i = ∫₀^{x_i} f(x_i - y) g(y) dy`, `i < min(len f, len g)`.
    pub fn trapezoid(&mut self, f: &[f64], g: &[f64], dx: f64) -> Vec<f64> {
        let n = f.len().min(g.len());
        if n == 0 {
            return Vec::new();
        }
        let use_fft = match self.method {
            Method::Auto => n > FFT_THRESHOLD,
            Method::Direct => false,
            Method::Fft => true,
        };
        let mut c = if use_fft {
            // Tilt by e^{-λx} so neither input grows along the grid; otherwise the FFT
            // roundoff, which scales with the largest entry, swamps the small-x values.
            let lambda = growth_rate(&f[..n]).max(growth_rate(&g[..n]));
            if lambda > 0.0 {
                let tilt = |v: &[f64]| -> Vec<f64> {
                    v.iter()
                        .enumerate()
                        .map(|(i, x)| x * (-lambda * i as f64).exp())
                        .collect()
                };
                let mut c = self.linear_fft(&tilt(&f[..n]), &tilt(&g[..n]));
                for (i, ci) in c.iter_mut().enumerate() {
                    *ci *= (lambda * i as f64).exp();
                }
                c
            } else {
                self.linear_fft(&f[..n], &g[..n])
            }
        } else {
            linear_direct(&f[..n], &g[..n])
        };
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = dx * (*ci - 0.5 * (f[0] * g[i] + f[i] * g[0]));
        }
        c
    }

    /// Sums `Σ_{j ≤ i} f_j g_{i-j}` for `i < n` by zero-padded FFT.
    fn linear_fft(&mut self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let n = f.len();
        let size = (2 * n).next_power_of_two();
        let (fwd, inv) = self
            .plans
            .entry(size)
            .or_insert_with(|| {
                (
                    self.planner.plan_fft_forward(size),
                    self.planner.plan_fft_inverse(size),
                )
            })
            .clone();
        // pack f and g as real and imaginary parts of one transform
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for i in 0..n {
            buf[i] = Complex::new(f[i], g[i]);
        }
        fwd.process(&mut buf);
        let mut prod = vec![Complex::new(0.0, 0.0); size];
        for k in 0..size {
            let z = buf[k];
            let zc = buf[(size - k) % size].conj();
            let fk = (z + zc) * 0.5;
            let gk = (z - zc) * Complex::new(0.0, -0.5);
            prod[k] = fk * gk;
        }
        inv.process(&mut prod);
        let scale = 1.0 / size as f64;
        prod[..n].iter().map(|z| z.re * scale).collect()
    }
}

/// Smallest `λ ≥ 0` (per grid index) with `|v_i| e^{-λi} ≤ A`, where `A` is the largest
/// magnitude over the first tenth of the grid.
fn growth_rate(v: &[f64]) -> f64 {
    let head = (v.len() / 10).max(1);
    let a = v[..head].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if a == 0.0 {
        return 0.0;
    }
    let ln_a = a.ln();
    v.iter()
        .enumerate()
        .skip(head)
        .filter(|(_, x)| x.abs() > a)
        .map(|(i, x)| (x.abs().ln() - ln_a) / i as f64)
        .fold(0.0, f64::max)
}

fn linear_direct(f: &[f64], g: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| (0..=i).map(|j| f[j] * g[i - j]).sum())
        .collect()
}

/// One-off trapezoidal convolution with automatic method choice.
pub fn trapezoid(f: &[f64], g: &[f64], dx: f64) -> Vec<f64> {
    Convolver::new(Method::Auto).trapezoid(f, g, dx)
}
