//! Closed-form integrands `Ψ`, `Ψ^ε`, `E_p`, `E_p^ε`, `E^ε = βΨ^ε + E_p^ε`,
//! their derivatives, the subdifferential of `Ψ = |·|`, and verifiers for the
//! structural inequalities these integrands satisfy.

mod point;
pub mod sample;
pub mod verify;

pub use point::{Point, Sym2};
pub use verify::{StructuralConstants, CONSTANT_SAFETY};

use crate::error::invalid;
use crate::math::{abs, pow1p_m1, powf, sqrt};
use crate::Result;

/// Exponent, weights and ellipticity constants of the model.
///
/// `c1, c2` bound the Hessian of `E_p^ε`; `big_c1, big_c2` bound the Hessian
/// of `E^ε` on `|z| ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub p: f64,
    pub beta: f64,
    /// Integrability exponent of the source; `f64::INFINITY` allowed.
    pub q: f64,
    pub c1: f64,
    pub c2: f64,
    pub big_c1: f64,
    pub big_c2: f64,
}

impl ModelParams {
    /// Parameters of the canonical family `E_p^ε = (ε²+|z|²)^{p/2}/p`, whose
    /// constants are `c1 = min{p-1, 1/p}`, `c2 = max{p-1, 1}`, `C1 = c1`,
    /// `C2 = c2 + β`.
    pub fn canonical(p: f64, beta: f64, q: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(invalid!("p must satisfy p > 1 (got {p})"));
        }
        let c1 = (p - 1.0).min(1.0 / p);
        let c2 = (p - 1.0).max(1.0);
        Self::new(p, beta, q, c1, c2, c1, c2 + beta)
    }

    pub fn new(
        p: f64,
        beta: f64,
        q: f64,
        c1: f64,
        c2: f64,
        big_c1: f64,
        big_c2: f64,
    ) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(invalid!("p must satisfy p > 1 (got {p})"));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(invalid!("beta must satisfy beta >= 0 (got {beta})"));
        }
        if !(q > 1.0) {
            return Err(invalid!("q must satisfy q > 1 (got {q})"));
        }
        if !(c1 > 0.0 && c1 <= c2 && c2.is_finite()) {
            return Err(invalid!("need 0 < c1 <= c2 < inf (got c1={c1}, c2={c2})"));
        }
        if !(big_c1 > 0.0 && big_c1 <= big_c2 && big_c2.is_finite()) {
            return Err(invalid!(
                "need 0 < C1 <= C2 < inf (got C1={big_c1}, C2={big_c2})"
            ));
        }
        Ok(Self {
            p,
            beta,
            q,
            c1,
            c2,
            big_c1,
            big_c2,
        })
    }
}

/// Regularization parameter `ε ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Epsilon(pub(crate) f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(invalid!("epsilon must lie in (0, 1] (got {value})"))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// `Ψ(z) = |z|`.
#[inline]
pub fn psi(z: Point) -> f64 {
    z.norm()
}

/// Whether `w ∈ ∂Ψ(z0)` up to `tol`: `w ≈ z0/|z0|` off the origin, `|w| ≤ 1`
/// at the origin.
pub fn subdiff_psi_contains(z0: Point, w: Point, tol: f64) -> bool {
    let r = z0.norm();
    if r > 0.0 {
        (w - z0 * (1.0 / r)).norm() <= tol
    } else {
        w.norm() <= 1.0 + tol
    }
}

#[inline]
fn reg_sq(eps: f64, z: Point) -> f64 {
    eps * eps + z.norm_sq()
}

/// `Ψ^ε(z) = √(ε²+|z|²)`.
#[inline]
pub fn psi_eps(eps: Epsilon, z: Point) -> f64 {
    sqrt(reg_sq(eps.0, z))
}

/// `z/√(ε²+|z|²)`; its norm is strictly below one.
#[inline]
pub fn grad_psi_eps(eps: Epsilon, z: Point) -> Point {
    let w = z * (1.0 / psi_eps(eps, z));
    let n = w.norm();
    // Rounding can push the norm a hair above one when ε² ≪ |z|².
    if n > 1.0 {
        w * (1.0 / n)
    } else {
        w
    }
}

/// `(I - zzᵀ/s²)/s` with `s = √(ε²+|z|²)`; eigenvalues `1/s` (tangential)
/// and `ε²/s³` (radial).
pub fn hess_psi_eps(eps: Epsilon, z: Point) -> Sym2 {
    let s2 = reg_sq(eps.0, z);
    let s = sqrt(s2);
    (Sym2::identity(z.dim()).scale(eps.0 * eps.0) + Sym2::perp(z)).scale(1.0 / (s2 * s))
}

/// `E_p(z) = |z|^p / p`.
#[inline]
pub fn ep(p: f64, z: Point) -> f64 {
    powf(z.norm(), p) / p
}

/// `|z|^{p-2} z`, defined as `0` at the origin.
pub fn grad_ep(p: f64, z: Point) -> Point {
    let r = z.norm();
    if r == 0.0 {
        Point::zero(z.dim())
    } else {
        z * powf(r, p - 2.0)
    }
}

/// `E_p^ε(z) = (ε²+|z|²)^{p/2} / p`.
#[inline]
pub fn ep_eps(p: f64, eps: Epsilon, z: Point) -> f64 {
    powf(reg_sq(eps.0, z), 0.5 * p) / p
}

/// `(ε²+|z|²)^{p/2-1} z`.
#[inline]
pub fn grad_ep_eps(p: f64, eps: Epsilon, z: Point) -> Point {
    z * powf(reg_sq(eps.0, z), 0.5 * p - 1.0)
}

/// `(ε²+|z|²)^{p/2-2} [(ε²+|z|²) I + (p-2) zzᵀ]`.
pub fn hess_ep_eps(p: f64, eps: Epsilon, z: Point) -> Sym2 {
    let a = reg_sq(eps.0, z);
    let w = powf(a, 0.5 * p - 2.0);
    (Sym2::identity(z.dim()).scale(a) + Sym2::outer(z).scale(p - 2.0)).scale(w)
}

/// `E^ε(z) = β Ψ^ε(z) + E_p^ε(z)`.
#[inline]
pub fn e_eps(params: &ModelParams, eps: Epsilon, z: Point) -> f64 {
    params.beta * psi_eps(eps, z) + ep_eps(params.p, eps, z)
}

#[inline]
pub fn grad_e_eps(params: &ModelParams, eps: Epsilon, z: Point) -> Point {
    grad_psi_eps(eps, z) * params.beta + grad_ep_eps(params.p, eps, z)
}

pub fn hess_e_eps(params: &ModelParams, eps: Epsilon, z: Point) -> Sym2 {
    hess_psi_eps(eps, z).scale(params.beta) + hess_ep_eps(params.p, eps, z)
}

/// Limit integrand `β|z| + |z|^p/p` of the `ε = 0` functional.
#[inline]
pub fn e_limit(params: &ModelParams, z: Point) -> f64 {
    params.beta * psi(z) + ep(params.p, z)
}

/// Value, gradient and Hessian of `E^ε` sharing one `powf`.
pub fn e_eps_local(params: &ModelParams, eps: Epsilon, z: Point) -> (f64, Point, Sym2) {
    let a = reg_sq(eps.0, z);
    let s = sqrt(a);
    let p = params.p;
    // a^{p/2-2}; the gradient and value weights follow by multiplying with a.
    let w2 = powf(a, 0.5 * p - 2.0);
    let w1 = w2 * a;
    let val = params.beta * s + w1 * a / p;
    let grad = z * (params.beta / s + w1);
    let id = Sym2::identity(z.dim());
    let psi_part = (id.scale(eps.0 * eps.0) + Sym2::perp(z)).scale(params.beta / (a * s));
    let hess = psi_part + (id.scale(w1) + Sym2::outer(z).scale(w2 * (p - 2.0)));
    (val, grad, hess)
}

/// `E^ε(z+dz) - E^ε(z)` evaluated without catastrophic cancellation.
pub fn e_eps_increment(params: &ModelParams, eps: Epsilon, z: Point, dz: Point) -> f64 {
    let a = reg_sq(eps.0, z);
    // |z+dz|² - |z|², formed from dz so it stays accurate when dz is tiny.
    let da = 2.0 * z.dot(dz) + dz.norm_sq();
    let b = a + da;
    let dpsi = da / (sqrt(a) + sqrt(b));
    let x = da / a;
    let dep = if x > -1.0 {
        powf(a, 0.5 * params.p) * pow1p_m1(x, 0.5 * params.p) / params.p
    } else {
        (powf(b, 0.5 * params.p) - powf(a, 0.5 * params.p)) / params.p
    };
    params.beta * dpsi + dep
}

/// Regularized flux `β∇Ψ^ε + ∇E_p^ε`, the total flux whose divergence
/// balances the source.
#[inline]
pub fn flux_eps(params: &ModelParams, eps: Epsilon, z: Point) -> Point {
    grad_e_eps(params, eps, z)
}

/// Solves `β z + |s|^{p-2} s = σ` for `s` with `|z| ≤ 1`:
/// `s = sign(σ)(|σ| - β)₊^{1/(p-1)}`.
#[inline]
pub(crate) fn soft_threshold_inverse(sigma: f64, beta: f64, p: f64) -> f64 {
    let m = abs(sigma) - beta;
    if m <= 0.0 {
        0.0
    } else {
        crate::math::sign(sigma) * powf(m, 1.0 / (p - 1.0))
    }
}
