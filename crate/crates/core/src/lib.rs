//! Numerical laboratory for the max-recursion `X = max(X1 + X2 - 1, 0)` and its
//! continuous limit, the coalescence equation `∂f/∂t = ∂f/∂x + ½ f∗f`.
//!
//! | module | contents |
//! |---|---|
//! | [`specfun`] | Bessel `K_β`, `J1`, Γ, ζ, `Li_s(1/2)` |
//! | [`discrete`] | distribution recursion, Δ, critical points, light cone, free energy |
//! | [`pde`] | grid solver for the coalescence equation, blow-up detection |
//! | [`scaling`] | scaling functions, Laplace forms, tails, positivity windows |
//! | [`perturb`] | perturbations of scaling solutions and their classification |
//! | [`exactsol`] | exponential-sum solutions in closed form and by ODE |
//! | [`trees`] | genealogies of nonzero values, discrete and continuous |
//! | [`convolution`], [`quad`] | numerical building blocks |
//!
//! A guide with worked examples lives in the `book/` directory of the repository.

pub mod convolution;
pub mod discrete;
pub mod error;
pub mod exactsol;
pub mod pde;
pub mod perturb;
pub mod quad;
pub mod scaling;
pub mod specfun;
pub mod trees;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/recursion.md")]
    pub mod recursion {}
    #[doc = include_str!("../../../book/src/free-energy.md")]
    pub mod free_energy {}
    #[doc = include_str!("../../../book/src/scaling.md")]
    pub mod scaling {}
    #[doc = include_str!("../../../book/src/coalescence-equation.md")]
    pub mod coalescence_equation {}
    #[doc = include_str!("../../../book/src/perturbations.md")]
    pub mod perturbations {}
    #[doc = include_str!("../../../book/src/genealogies.md")]
    pub mod genealogies {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
