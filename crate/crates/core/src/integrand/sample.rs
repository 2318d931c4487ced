//! Randomized sampling of the structural inequalities.
//!
//! Radii are drawn log-uniformly and directions uniformly so that both the
//! small-gradient and the large-gradient regimes are exercised.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::Rng;

use super::verify::{ellipticity_check, growth_continuity_check, monotonicity_check, StructuralConstants};
use super::{Epsilon, ModelParams, Point};
use crate::math::{cos, exp, ln, sin};

/// A point with log-uniform radius in `[r_min, r_max]` and uniform direction.
pub fn sample_point<R: Rng + ?Sized>(rng: &mut R, dim: usize, r_min: f64, r_max: f64) -> Point {
    let r = exp(rng.gen_range(ln(r_min)..=ln(r_max)));
    if dim == 1 {
        let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        Point::d1(s * r)
    } else {
        let t = rng.gen_range(0.0..TAU);
        Point::d2(r * cos(t), r * sin(t))
    }
}

/// Sampling ranges of the battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRanges {
    /// Radii for `z0` in the ellipticity checks; the lower end is at least 1.
    pub base_radius: (f64, f64),
    /// Radii for every other sampled vector.
    pub radius: (f64, f64),
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            base_radius: (1.0, 1e3),
            radius: (1e-3, 1e3),
        }
    }
}

/// Violation count and worst relative excess for one inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckTally {
    pub name: &'static str,
    pub violations: usize,
    /// Most negative signed margin seen (positive = every sample held).
    pub worst_margin: f64,
}

/// Outcome of [`run_battery`] for one `(p, β, ε)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryOutcome {
    pub samples: usize,
    pub tallies: Vec<CheckTally>,
}

impl BatteryOutcome {
    pub fn violations(&self) -> usize {
        self.tallies.iter().map(|t| t.violations).sum()
    }

    pub fn to_report(&self) -> crate::Report {
        let mut r = crate::Report::new();
        r.int("samples", self.samples as i64);
        for t in &self.tallies {
            r.int(&alloc::format!("{}.violations", t.name), t.violations as i64)
                .num(&alloc::format!("{}.worst_margin", t.name), t.worst_margin);
        }
        r.flag("pass", self.violations() == 0);
        r
    }
}

/// Samples every inequality `samples` times at fixed `(p, β, ε)`.
pub fn run_battery<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ModelParams,
    eps: Epsilon,
    consts: &StructuralConstants,
    samples: usize,
    ranges: SampleRanges,
) -> BatteryOutcome {
    const NAMES: [&str; 10] = [
        "ellipticity_lower",
        "ellipticity_upper",
        "monotone",
        "continuity",
        "growth",
        "growth_eps",
        "value_growth",
        "origin_bounds",
        "coercivity_order",
        "coercivity_lower",
    ];
    let mut tallies: Vec<CheckTally> = NAMES
        .iter()
        .map(|&name| CheckTally {
            name,
            violations: 0,
            worst_margin: f64::INFINITY,
        })
        .collect();
    let mut record = |i: usize, ok: bool, lhs: f64, rhs: f64, le: bool| {
        let m = if le {
            super::verify::margin_le(lhs, rhs)
        } else {
            super::verify::margin_le(rhs, lhs)
        };
        let t = &mut tallies[i];
        t.worst_margin = t.worst_margin.min(m);
        if !ok {
            t.violations += 1;
        }
    };

    let (b0, b1) = (ranges.base_radius.0.max(1.0), ranges.base_radius.1);
    let (r0, r1) = ranges.radius;
    for _ in 0..samples {
        let z0 = sample_point(rng, 2, b0, b1);
        let zeta = sample_point(rng, 2, r0, r1);
        let omega = sample_point(rng, 2, r0, r1);
        let e = ellipticity_check(params, eps, z0, zeta, omega)
            .expect("base radius is at least one");
        record(0, e.lower_ok, e.quad_form, e.lower_bound, false);
        record(1, e.upper_ok, e.cross_form, e.upper_bound, true);

        let z1 = sample_point(rng, 2, r0, r1);
        let z2 = sample_point(rng, 2, r0, r1);
        let m = monotonicity_check(params, eps, z1, z2, consts);
        record(2, m.ok, m.lhs, m.rhs, false);

        let w = sample_point(rng, 2, r0, r1);
        let g = growth_continuity_check(params, eps, w, z1, z2, consts);
        record(3, g.continuity.ok, g.continuity.lhs, g.continuity.rhs, true);
        record(4, g.growth.ok, g.growth.lhs, g.growth.rhs, true);
        record(5, g.growth_eps.ok, g.growth_eps.lhs, g.growth_eps.rhs, true);
        record(6, g.value_growth.ok, g.value_growth.lhs, g.value_growth.rhs, true);
        let origin_ok = g.origin_value.ok && g.origin_grad.ok;
        record(7, origin_ok, g.origin_value.lhs.max(g.origin_grad.lhs), 1.0, true);
        record(8, g.coercivity_order.ok, g.coercivity_order.lhs, g.coercivity_order.rhs, true);
        record(9, g.coercivity_lower.ok, g.coercivity_lower.lhs, g.coercivity_lower.rhs, false);
    }
    BatteryOutcome { samples, tallies }
}
