//! Pointwise verifiers for the ellipticity, monotonicity, continuity, growth
//! and coercivity inequalities of the regularized integrands.
//!
//! Every check compares two sides with relative slack [`REL_SLACK`] plus
//! absolute slack [`ABS_SLACK`]. Inequalities whose constant is only known to
//! exist take it from [`StructuralConstants`].

use core::f64::consts::{FRAC_PI_2, PI};

use super::{
    ep, ep_eps, grad_ep, grad_ep_eps, hess_e_eps, Epsilon, ModelParams, Point,
};
use crate::error::precondition;
use crate::math::{abs, cos, powf, sin};
use crate::{Report, Result};

pub const REL_SLACK: f64 = 1e-9;
pub const ABS_SLACK: f64 = 1e-12;

/// Relative widening applied to calibrated constants.
pub const CONSTANT_SAFETY: f64 = 1e-6;

/// `lhs ≤ rhs` up to slack.
#[inline]
pub fn holds_le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + REL_SLACK * abs(lhs).max(abs(rhs)) + ABS_SLACK
}

/// `lhs ≥ rhs` up to slack.
#[inline]
pub fn holds_ge(lhs: f64, rhs: f64) -> bool {
    holds_le(rhs, lhs)
}

/// Signed slack of `lhs ≤ rhs` relative to the larger side (positive = holds).
#[inline]
pub fn margin_le(lhs: f64, rhs: f64) -> f64 {
    let scale = abs(lhs).max(abs(rhs));
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

/// Per-inequality structural constants `C(p)`.
///
/// Lower-bound constants (`monotone`, `coercivity`) are used only for
/// `p ≥ 2`; the `1 < p < 2` branches of those inequalities carry no
/// constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralConstants {
    pub p: f64,
    /// `⟨∇E(z2)-∇E(z1)|z2-z1⟩ ≥ c1·C|z1-z2|^p`, `p ≥ 2`.
    pub monotone: f64,
    /// `|∇E(z1)-∇E(z2)| ≤ c2·C(...)`.
    pub continuity: f64,
    /// `|∇E_p(z)| ≤ c2·C|z|^{p-1}`.
    pub growth: f64,
    /// `|∇E_p^ε(z)-∇E_p^ε(0)| ≤ c2·C(...)`.
    pub growth_eps: f64,
    /// `|E_p^ε(z)-E_p^ε(0)| ≤ C(...)`.
    pub value_growth: f64,
    /// `E_p^ε(z)-E_p^ε(0)-⟨∇E_p^ε(0)|z⟩ ≥ c1·C|z|^p`, `p ≥ 2`.
    pub coercivity: f64,
    /// False when supplied by the caller instead of [`Self::calibrate`].
    pub calibrated: bool,
}

impl StructuralConstants {
    /// Sharpest constants for the canonical family found by numerical
    /// extremization of each scale-free ratio, widened by
    /// [`CONSTANT_SAFETY`].
    ///
    /// Every ratio is homogeneous of degree zero under
    /// `(ε, z1, z2) ↦ (λε, λz1, λz2)`, so the search runs over
    /// `ε = cos a`, `|z1| = sin a cos b`, `|z2| = sin a sin b`, with the angle
    /// `θ` between `z1` and `z2`, and covers every `ε > 0` and every pair.
    pub fn calibrate(params: &ModelParams) -> Self {
        let p = params.p;
        let (c1, c2) = (params.c1, params.c2);
        let lo = 1.0 - CONSTANT_SAFETY;
        let hi = 1.0 + CONSTANT_SAFETY;

        let monotone = if p >= 2.0 {
            lo * extremize(false, |e, z1, z2| monotone_lhs(p, e, z1, z2) / (c1 * powf((z1 - z2).norm(), p)))
        } else {
            1.0
        };
        let continuity = hi * extremize(true, |e, z1, z2| {
            let lhs = (grad_ep_eps(p, e, z1) - grad_ep_eps(p, e, z2)).norm();
            lhs / (c2 * continuity_scale(p, e, z1, z2))
        });
        // |∇E_p(z)| = |z|^{p-1} exactly.
        let growth = hi / c2;
        let growth_eps = hi * extremize(true, |e, z0, _| {
            (grad_ep_eps(p, e, z0) - grad_ep_eps(p, e, Point::zero(z0.dim()))).norm()
                / (c2 * growth_eps_scale(p, e, z0))
        });
        let value_growth = hi * extremize(true, |e, z0, _| {
            abs(ep_eps(p, e, z0) - ep_eps(p, e, Point::zero(z0.dim())))
                / value_growth_scale(p, e, z0)
        });
        let coercivity = if p >= 2.0 {
            lo * extremize(false, |e, z0, _| bregman(p, e, z0) / (c1 * powf(z0.norm(), p)))
        } else {
            1.0
        };
        Self {
            p,
            monotone,
            continuity,
            growth,
            growth_eps,
            value_growth,
            coercivity,
            calibrated: true,
        }
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.num("p", self.p)
            .num("C_monotone", self.monotone)
            .num("C_continuity", self.continuity)
            .num("C_growth", self.growth)
            .num("C_growth_eps", self.growth_eps)
            .num("C_value_growth", self.value_growth)
            .num("C_coercivity", self.coercivity)
            .text(
                "C_source",
                if self.calibrated {
                    "numerical_extremization"
                } else {
                    "user"
                },
            )
            .num("C_safety", CONSTANT_SAFETY);
        r
    }
}

fn monotone_lhs(p: f64, e: Epsilon, z1: Point, z2: Point) -> f64 {
    (grad_ep_eps(p, e, z2) - grad_ep_eps(p, e, z1)).dot(z2 - z1)
}

fn continuity_scale(p: f64, e: Epsilon, z1: Point, z2: Point) -> f64 {
    let d = (z1 - z2).norm();
    if p >= 2.0 {
        (powf(e.get(), p - 2.0) + powf(z1.norm(), p - 2.0) + powf(z2.norm(), p - 2.0)) * d
    } else {
        powf(d, p - 1.0)
    }
}

fn growth_eps_scale(p: f64, e: Epsilon, z0: Point) -> f64 {
    if p >= 2.0 {
        powf(e.get(), p - 1.0) + powf(z0.norm(), p - 1.0)
    } else {
        powf(z0.norm(), p - 1.0)
    }
}

fn value_growth_scale(p: f64, e: Epsilon, z0: Point) -> f64 {
    let r = z0.norm();
    // ∇E_p^ε(0) = 0 for the canonical family, so that term drops out.
    if p >= 2.0 {
        powf(e.get(), p - 1.0) * r + powf(r, p)
    } else {
        powf(r, p)
    }
}

/// `E_p^ε(z) - E_p^ε(0) - ⟨∇E_p^ε(0)|z⟩`, cancellation-free.
fn bregman(p: f64, e: Epsilon, z0: Point) -> f64 {
    let zero = Point::zero(z0.dim());
    let g0 = grad_ep_eps(p, e, zero);
    let eps = e.get();
    let x = z0.norm_sq() / (eps * eps);
    let inc = if x.is_finite() {
        powf(eps, p) * crate::math::pow1p_m1(x, 0.5 * p) / p
    } else {
        ep_eps(p, e, z0) - ep_eps(p, e, zero)
    };
    inc - g0.dot(z0)
}

/// Grid search plus compass refinement of a scale-free ratio over the
/// reduced `(a, b, θ)` box. Non-finite evaluations are ignored.
fn extremize<F>(maximize: bool, ratio: F) -> f64
where
    F: Fn(Epsilon, Point, Point) -> f64,
{
    const GRID: usize = 40;
    const SEEDS: usize = 8;
    let bounds = [(0.0, FRAC_PI_2), (0.0, FRAC_PI_2), (0.0, PI)];
    let eval = |x: &[f64; 3]| -> f64 {
        let e = cos(x[0]).max(1e-300).min(1.0);
        let Ok(eps) = Epsilon::new(e) else {
            return f64::NAN;
        };
        let r1 = sin(x[0]) * cos(x[1]);
        let r2 = sin(x[0]) * sin(x[1]);
        let z1 = Point::d2(r1, 0.0);
        let z2 = Point::d2(r2 * cos(x[2]), r2 * sin(x[2]));
        // Near-coincident pairs lose every digit of |z1 - z2| to rounding.
        let scale = e.max(r1.abs()).max(r2.abs());
        if (z1 - z2).norm() <= 1e-7 * scale && (z1 - z2).norm() > 0.0 {
            return f64::NAN;
        }
        let v = ratio(eps, z1, z2);
        if maximize {
            v
        } else {
            -v
        }
    };

    let mut best: alloc::vec::Vec<(f64, [f64; 3])> = alloc::vec::Vec::new();
    for i in 0..=GRID {
        for j in 0..=GRID {
            for k in 0..=GRID {
                let x = [
                    bounds[0].1 * i as f64 / GRID as f64,
                    bounds[1].1 * j as f64 / GRID as f64,
                    bounds[2].1 * k as f64 / GRID as f64,
                ];
                let v = eval(&x);
                if !v.is_finite() {
                    continue;
                }
                if best.len() < SEEDS || v > best[best.len() - 1].0 {
                    best.push((v, x));
                    best.sort_by(|a, b| b.0.total_cmp(&a.0));
                    best.truncate(SEEDS);
                }
            }
        }
    }

    let mut top = f64::NEG_INFINITY;
    for (v0, x0) in best {
        let (mut v, mut x) = (v0, x0);
        let mut step = [
            bounds[0].1 / GRID as f64,
            bounds[1].1 / GRID as f64,
            bounds[2].1 / GRID as f64,
        ];
        while step.iter().any(|s| *s > 1e-13) {
            let mut improved = false;
            for d in 0..3 {
                for sgn in [1.0, -1.0] {
                    let mut y = x;
                    y[d] = (y[d] + sgn * step[d]).clamp(bounds[d].0, bounds[d].1);
                    let w = eval(&y);
                    if w.is_finite() && w > v {
                        v = w;
                        x = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in &mut step {
                    *s *= 0.5;
                }
            }
        }
        top = top.max(v);
    }
    if maximize {
        top
    } else {
        -top
    }
}

/// Both sides of the lower and upper ellipticity bounds of `E^ε` at `z0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityCheck {
    /// `(ε²+|z0|²)^{p/2-1}`.
    pub weight: f64,
    pub lower_bound: f64,
    pub quad_form: f64,
    pub cross_form: f64,
    pub upper_bound: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

impl EllipticityCheck {
    pub fn passed(&self) -> bool {
        self.lower_ok && self.upper_ok
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        r.num("weight", self.weight)
            .num("lower_bound", self.lower_bound)
            .num("hessian_quad_form", self.quad_form)
            .num("lower_margin", margin_le(self.lower_bound, self.quad_form))
            .flag("lower_pass", self.lower_ok)
            .num("hessian_cross_form_abs", self.cross_form)
            .num("upper_bound", self.upper_bound)
            .num("upper_margin", margin_le(self.cross_form, self.upper_bound))
            .flag("upper_pass", self.upper_ok);
        r
    }
}

/// `C1 w |ζ|² ≤ ⟨∇²E^ε(z0)ζ|ζ⟩` and `|⟨∇²E^ε(z0)ζ|ω⟩| ≤ C2 w |ζ||ω|` with
/// `w = (ε²+|z0|²)^{p/2-1}`; stated for `|z0| ≥ 1` only.
pub fn ellipticity_check(
    params: &ModelParams,
    eps: Epsilon,
    z0: Point,
    zeta: Point,
    omega: Point,
) -> Result<EllipticityCheck> {
    if !(z0.norm() >= 1.0) {
        return Err(precondition!(
            "ellipticity bounds are stated for |z0| >= 1 (got |z0| = {})",
            z0.norm()
        ));
    }
    let e = eps.get();
    let weight = powf(e * e + z0.norm_sq(), 0.5 * params.p - 1.0);
    let h = hess_e_eps(params, eps, z0);
    let quad_form = h.form(zeta, zeta);
    let cross_form = abs(h.form(zeta, omega));
    let lower_bound = params.big_c1 * weight * zeta.norm_sq();
    let upper_bound = params.big_c2 * weight * zeta.norm() * omega.norm();
    Ok(EllipticityCheck {
        weight,
        lower_bound,
        quad_form,
        cross_form,
        upper_bound,
        lower_ok: holds_ge(quad_form, lower_bound),
        upper_ok: holds_le(cross_form, upper_bound),
    })
}

pub fn verify_ellipticity(
    params: &ModelParams,
    eps: Epsilon,
    z0: Point,
    zeta: Point,
    omega: Point,
) -> Result<Report> {
    Ok(ellipticity_check(params, eps, z0, zeta, omega)?.to_report())
}

/// One side-by-side inequality evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl Comparison {
    fn le(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            ok: holds_le(lhs, rhs),
        }
    }

    fn ge(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            ok: holds_ge(lhs, rhs),
        }
    }

    fn write(&self, r: &mut Report, name: &str) {
        r.num(&alloc::format!("{name}.lhs"), self.lhs)
            .num(&alloc::format!("{name}.rhs"), self.rhs)
            .flag(&alloc::format!("{name}.pass"), self.ok);
    }
}

/// Monotonicity of `∇E_p^ε`:
/// `⟨∇E_p^ε(z2)-∇E_p^ε(z1)|z2-z1⟩ ≥ c1·C|z1-z2|^p` for `p ≥ 2`, and
/// `≥ c1|z1-z2|²(ε²+|z1|²+|z2|²)^{p/2-1}` for `1 < p < 2`.
pub fn monotonicity_check(
    params: &ModelParams,
    eps: Epsilon,
    z1: Point,
    z2: Point,
    consts: &StructuralConstants,
) -> Comparison {
    let p = params.p;
    let lhs = monotone_lhs(p, eps, z1, z2);
    let d = (z1 - z2).norm();
    let rhs = if p >= 2.0 {
        params.c1 * consts.monotone * powf(d, p)
    } else {
        let e = eps.get();
        params.c1 * d * d * powf(e * e + z1.norm_sq() + z2.norm_sq(), 0.5 * p - 1.0)
    };
    Comparison::ge(lhs, rhs)
}

pub fn verify_monotonicity(
    params: &ModelParams,
    eps: Epsilon,
    z1: Point,
    z2: Point,
    consts: &StructuralConstants,
) -> Report {
    let c = monotonicity_check(params, eps, z1, z2, consts);
    let mut r = Report::new();
    c.write(&mut r, "monotone");
    r.num("monotone.margin", margin_le(c.rhs, c.lhs));
    r.merge("constants", &consts.to_report());
    r
}

/// Evaluated sides of the continuity, growth and coercivity estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthContinuityCheck {
    /// `|E_p^ε(0)| ≤ 1` and `|∇E_p^ε(0)| ≤ 1`.
    pub origin_value: Comparison,
    pub origin_grad: Comparison,
    pub continuity: Comparison,
    pub growth: Comparison,
    pub growth_eps: Comparison,
    pub value_growth: Comparison,
    /// Gradient pairing `⟨∇E_p^ε(z0)-∇E_p^ε(0)|z0⟩` bounds the Bregman
    /// term `E_p^ε(z0)-E_p^ε(0)-⟨∇E_p^ε(0)|z0⟩` from above (convexity).
    pub coercivity_order: Comparison,
    /// Bregman term against the stated lower bound.
    pub coercivity_lower: Comparison,
    /// Whether the Bregman term also dominates the pairing; false off the
    /// origin for strictly convex integrands.
    pub bregman_ge_pairing: bool,
}

impl GrowthContinuityCheck {
    pub fn passed(&self) -> bool {
        self.origin_value.ok
            && self.origin_grad.ok
            && self.continuity.ok
            && self.growth.ok
            && self.growth_eps.ok
            && self.value_growth.ok
            && self.coercivity_order.ok
            && self.coercivity_lower.ok
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new();
        self.origin_value.write(&mut r, "origin_value");
        self.origin_grad.write(&mut r, "origin_grad");
        self.continuity.write(&mut r, "continuity");
        self.growth.write(&mut r, "growth");
        self.growth_eps.write(&mut r, "growth_eps");
        self.value_growth.write(&mut r, "value_growth");
        self.coercivity_order.write(&mut r, "coercivity_order");
        self.coercivity_lower.write(&mut r, "coercivity_lower");
        r.int(
            "coercivity.bregman_ge_pairing",
            i64::from(self.bregman_ge_pairing),
        );
        r
    }
}

pub fn growth_continuity_check(
    params: &ModelParams,
    eps: Epsilon,
    z0: Point,
    z1: Point,
    z2: Point,
    consts: &StructuralConstants,
) -> GrowthContinuityCheck {
    let p = params.p;
    let (c1, c2) = (params.c1, params.c2);
    let zero = Point::zero(z0.dim());
    let e0 = ep_eps(p, eps, zero);
    let g0 = grad_ep_eps(p, eps, zero);

    let continuity = Comparison::le(
        (grad_ep_eps(p, eps, z1) - grad_ep_eps(p, eps, z2)).norm(),
        c2 * consts.continuity * continuity_scale(p, eps, z1, z2),
    );
    let growth = Comparison::le(
        grad_ep(p, z0).norm(),
        c2 * consts.growth * powf(z0.norm(), p - 1.0),
    );
    let growth_eps = Comparison::le(
        (grad_ep_eps(p, eps, z0) - g0).norm(),
        c2 * consts.growth_eps * growth_eps_scale(p, eps, z0),
    );
    let breg = bregman(p, eps, z0);
    let value_growth = Comparison::le(
        abs(breg + g0.dot(z0)),
        consts.value_growth * (value_growth_scale(p, eps, z0) + g0.norm() * z0.norm()),
    );
    let pairing = (grad_ep_eps(p, eps, z0) - g0).dot(z0);
    let lower = if p >= 2.0 {
        c1 * consts.coercivity * powf(z0.norm(), p)
    } else {
        let e = eps.get();
        // (ε²+|z|²)^{p/2} - ε^p without cancellation.
        c1 * powf(e, p) * crate::math::pow1p_m1(z0.norm_sq() / (e * e), 0.5 * p)
    };
    GrowthContinuityCheck {
        origin_value: Comparison::le(abs(e0), 1.0),
        origin_grad: Comparison::le(g0.norm(), 1.0),
        continuity,
        growth,
        growth_eps,
        value_growth,
        coercivity_order: Comparison::le(breg, pairing),
        coercivity_lower: Comparison::ge(breg, lower),
        bregman_ge_pairing: holds_ge(breg, pairing),
    }
}

pub fn verify_growth_continuity(
    params: &ModelParams,
    eps: Epsilon,
    z0: Point,
    z1: Point,
    z2: Point,
    consts: &StructuralConstants,
) -> Report {
    let mut r = growth_continuity_check(params, eps, z0, z1, z2, consts).to_report();
    r.merge("constants", &consts.to_report());
    r
}

/// `E_p ≤ E_p^ε` and the gap to the limit.
pub fn limit_ordering(p: f64, eps: Epsilon, z: Point) -> Comparison {
    Comparison::le(ep(p, z), ep_eps(p, eps, z))
}
