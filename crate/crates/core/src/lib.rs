//! Regularized solver and a-priori-estimate diagnostics for the singular
//! elliptic equation
//!
//! ```text
//! -β div(∇u/|∇u|) - div ∇E_p(∇u) ∋ f
//! ```
//!
//! on boxes in one and two dimensions with Dirichlet data.
//!
//! The one-Laplacian term is handled by smoothing `|z|` to `√(ε²+|z|²)` and
//! `|z|^p/p` to `(ε²+|z|²)^{p/2}/p`, minimizing the resulting strictly convex
//! discrete energy with damped Newton, and driving `ε → 0` by warm-started
//! continuation. The vector field `Z ∈ ∂|·|(∇u)` is extracted from the smoothed
//! gradient.
//!
//! Modules:
//! - [`integrand`]: closed-form integrands, their derivatives and samplers for
//!   the structural inequalities they satisfy.
//! - [`grid`]: uniform grids, P1 gradient/divergence pair, quadrature.
//! - [`energy`]: discrete energies, gradients, Hessians and the limit-problem
//!   weak residual.
//! - [`solver`]: Newton solve, continuation and the exact 1D oracle.
//! - [`diagnostics`]: truncation fields, Lipschitz ratios, Moser and
//!   De Giorgi monitors.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > y)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod diagnostics;
pub mod energy;
mod error;
pub mod grid;
pub mod integrand;
pub mod linalg;
pub(crate) mod math;
mod report;
pub mod solver;

pub use error::{Error, Result};
pub use report::{Report, Value};
