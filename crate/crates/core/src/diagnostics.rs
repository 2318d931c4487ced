//! Quantities behind the interior Lipschitz estimate: the truncation level
//! `k`, truncated gradients `u_{i,k}`, `w_k`, `ŵ_k`, `f_k`, the Wulff-type
//! constants `K` and `C₀(n)`, ellipticity bounds `λ, Λ`, Lipschitz ratios,
//! and empirical Moser and De Giorgi monitors.

use alloc::vec::Vec;

use crate::energy::Problem;
use crate::error::{invalid, precondition};
use crate::grid::{
    cell_mask, lp_norm, lp_quasi_norm, sup_norm, vector_lp_norm, vector_sup_norm, BallRegion,
    Grid, Location, ScalarField, VectorField,
};
use crate::integrand::ModelParams;
use crate::math::{powf, sqrt};
use crate::solver::Solution;
use crate::{Error, Report, Result};

const SLACK_REL: f64 = 1e-12;

/// Cell samples of a source: node fields are averaged over each cell.
fn source_cells(f: &ScalarField) -> ScalarField {
    match f.location() {
        Location::Cells => f.clone(),
        Location::Nodes => f.to_cells(),
    }
}

/// `k = ‖f‖_{L^q(B_R)}^{1/(p-1)} + 1`, with `f` taken cellwise.
pub fn compute_k(f: &ScalarField, p: f64, q: f64, region: &BallRegion) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid!("p must satisfy p > 1 (got {p})"));
    }
    if !(q > f.grid().dim() as f64) {
        return Err(invalid!("q must exceed the dimension (got q={q})"));
    }
    let norm = lp_norm(&source_cells(f), q, Some(region))?;
    Ok(powf(norm, 1.0 / (p - 1.0)) + 1.0)
}

/// Truncated gradient fields at level `k`, all cellwise.
#[derive(Debug, Clone)]
pub struct TruncationState {
    pub k: f64,
    pub p: f64,
    /// Regularization of the solution the state was built from.
    pub eps: f64,
    /// `u_{i,k} = −(∂_i u + k)₋ + (∂_i u − k)₊`, one field per axis.
    pub components: Vec<ScalarField>,
    /// `w_k = k² + Σ u_{i,k}²`.
    pub w: ScalarField,
    /// `ŵ_k = k² + |∇u|²`.
    pub w_hat: ScalarField,
    /// `f_k = |f|² / w_k^{p-1}`.
    pub fk: ScalarField,
    pub grad: VectorField,
}

#[inline]
fn truncate(a: f64, k: f64) -> f64 {
    if a > k {
        a - k
    } else if a < -k {
        a + k
    } else {
        0.0
    }
}

pub fn truncation_state(sol: &Solution, f: &ScalarField, k: f64, p: f64) -> Result<TruncationState> {
    truncation_state_from_gradient(&sol.gradient(), sol.eps_final, f, k, p)
}

pub fn truncation_state_from_gradient(
    grad: &VectorField,
    eps: f64,
    f: &ScalarField,
    k: f64,
    p: f64,
) -> Result<TruncationState> {
    if !(k >= 1.0) {
        return Err(invalid!("truncation level must satisfy k >= 1 (got {k})"));
    }
    let grid: Grid = *grad.grid();
    grid.ensure_same(f.grid())?;
    let fc = source_cells(f);
    let dim = grid.dim();
    let mut comps: Vec<Vec<f64>> = (0..dim).map(|_| Vec::with_capacity(grid.num_cells())).collect();
    let mut w = Vec::with_capacity(grid.num_cells());
    let mut w_hat = Vec::with_capacity(grid.num_cells());
    let mut fk = Vec::with_capacity(grid.num_cells());
    for (c, g) in grad.values().iter().enumerate() {
        let mut wc = k * k;
        for (i, comp) in comps.iter_mut().enumerate() {
            let t = truncate(g.get(i), k);
            comp.push(t);
            wc += t * t;
        }
        w.push(wc);
        w_hat.push(k * k + g.norm_sq());
        let fv = fc.values()[c];
        fk.push(fv * fv / powf(wc, p - 1.0));
    }
    Ok(TruncationState {
        k,
        p,
        eps,
        components: comps
            .into_iter()
            .map(|v| ScalarField::cells(grid, v))
            .collect::<Result<_>>()?,
        w: ScalarField::cells(grid, w)?,
        w_hat: ScalarField::cells(grid, w_hat)?,
        fk: ScalarField::cells(grid, fk)?,
        grad: grad.clone(),
    })
}

/// `K(r) = 1 + (r²/2)(1 + √(1 + 4/r²))`.
pub fn wulff_constant(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(invalid!("ratio must be positive and finite (got {ratio})"));
    }
    let r2 = ratio * ratio;
    Ok(1.0 + 0.5 * r2 * (1.0 + sqrt(1.0 + 4.0 / r2)))
}

/// `C₀(n) = K(√n)`.
pub fn c0(n: usize) -> Result<f64> {
    wulff_constant(sqrt(n as f64))
}

/// `λ = C₁ min{1, C₀^{p/2−1}} min{1, 2^{1−p/2}}` and
/// `Λ = C₂ max{1, C₀^{p/2−1}} max{1, 2^{1−p/2}}`.
pub fn lambdas(params: &ModelParams, n: usize) -> Result<(f64, f64)> {
    if n != 1 && n != 2 {
        return Err(invalid!("dimension must be 1 or 2 (got {n})"));
    }
    let c0 = c0(n)?;
    let s = 0.5 * params.p - 1.0;
    let a = powf(c0, s);
    let b = powf(2.0, -s);
    Ok((
        params.big_c1 * a.min(1.0) * b.min(1.0),
        params.big_c2 * a.max(1.0) * b.max(1.0),
    ))
}

/// Cellwise `w_k ≤ ŵ_k ≤ C₀(n) w_k`.
pub fn wulff_check(state: &TruncationState, n: usize) -> Result<Report> {
    let c0 = c0(n)?;
    let mut violations = 0i64;
    let mut worst = 0.0f64;
    for (&w, &wh) in state.w.values().iter().zip(state.w_hat.values()) {
        let lower = w - wh;
        let upper = wh - c0 * w;
        let m = lower.max(upper);
        if m > SLACK_REL * wh {
            violations += 1;
        }
        worst = worst.max(m / wh);
    }
    let mut r = Report::new();
    r.num("c0", c0)
        .int("cells", state.w.values().len() as i64)
        .int("violations", violations)
        .num("worst_relative_margin", worst)
        .flag("pass", violations == 0);
    Ok(r)
}

/// On cells with `|∇u| > k ≥ 1 ≥ ε`:
/// `(k² + |∇u|²)/2 ≤ ε² + |∇u|² ≤ k² + |∇u|²`.
pub fn compatibility_check(state: &TruncationState) -> Report {
    let e2 = state.eps * state.eps;
    let k2 = state.k * state.k;
    let mut checked = 0i64;
    let mut violations = 0i64;
    for g in state.grad.values() {
        let g2 = g.norm_sq();
        if g2 > k2 && state.eps <= 1.0 {
            checked += 1;
            let mid = e2 + g2;
            let tol = SLACK_REL * (k2 + g2);
            if 0.5 * (k2 + g2) > mid + tol || mid > k2 + g2 + tol {
                violations += 1;
            }
        }
    }
    let mut r = Report::new();
    r.int("cells_checked", checked)
        .int("violations", violations)
        .flag("pass", violations == 0);
    r
}

/// `‖f_k‖_{L^{q/2}(B_R)} ≤ 1`.
pub fn fk_norm_check(state: &TruncationState, q: f64, region: &BallRegion) -> Result<Report> {
    let norm = lp_quasi_norm(&state.fk, 0.5 * q, Some(region))?;
    let mut r = Report::new();
    r.num("k", state.k)
        .num("fk_norm", norm)
        .flag("pass", norm <= 1.0 + 1e-9);
    Ok(r)
}

/// Empirical constant of the interior estimate:
/// `sup_{B_{θR}} |∇u| / (1 + ‖f‖_{L^q(B_R)}^{1/(p−1)} + R^{−n/p} ‖∇u‖_{L^p(B_R)})`.
pub fn lipschitz_ratio(sol: &Solution, f: &ScalarField, region: &BallRegion, params: &ModelParams) -> Result<Report> {
    lipschitz_ratio_from_gradient(&sol.gradient(), f, region, params)
}

pub fn lipschitz_ratio_from_gradient(
    grad: &VectorField,
    f: &ScalarField,
    region: &BallRegion,
    params: &ModelParams,
) -> Result<Report> {
    let grid = grad.grid();
    region.ensure_inside(grid)?;
    let theta = region
        .theta
        .ok_or_else(|| precondition!("the Lipschitz ratio needs a shrink factor theta"))?;
    let inner = region.inner();
    let p = params.p;
    let n = grid.dim() as f64;
    let num = vector_sup_norm(grad, Some(&inner))?;
    let f_norm = lp_norm(&source_cells(f), params.q, Some(region))?;
    let grad_norm = vector_lp_norm(grad, p, Some(region))?;
    let den = 1.0 + powf(f_norm, 1.0 / (p - 1.0)) + powf(region.radius, -n / p) * grad_norm;
    let mut r = Report::new();
    r.num("theta", theta)
        .num("radius", region.radius)
        .num("sup_grad_inner", num)
        .num("f_norm", f_norm)
        .num("grad_lp_norm", grad_norm)
        .num("denominator", den)
        .num("ratio", num / den)
        .flag("finite", (num / den).is_finite());
    Ok(r)
}

/// Moser exponents `α_N = p(χ^N − 1)`, `γ_N = (p/2)χ^N` and radii
/// `r_N = [θ + 2^{−N}(1 − θ)]R`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoserSchedule {
    pub chi: f64,
    pub p: f64,
    pub theta: f64,
    pub radius: f64,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub radii: Vec<f64>,
}

/// Largest admissible step index.
pub const MOSER_MAX_N: usize = 12;
/// Largest admissible norm exponent.
pub const MOSER_MAX_GAMMA: f64 = 1e4;

impl MoserSchedule {
    /// Steps `0..=n_max`; `n_max` is capped at [`MOSER_MAX_N`] and the
    /// sequence stops before `γ_N` exceeds [`MOSER_MAX_GAMMA`].
    pub fn new(p: f64, chi: f64, theta: f64, radius: f64, n_max: usize) -> Result<Self> {
        if !(chi > 1.0) || !chi.is_finite() {
            return Err(invalid!("chi must satisfy chi > 1 (got {chi})"));
        }
        if !(p > 1.0) {
            return Err(invalid!("p must satisfy p > 1 (got {p})"));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid!("theta must lie in (0, 1) (got {theta})"));
        }
        if !(radius > 0.0) {
            return Err(invalid!("radius must be positive (got {radius})"));
        }
        let mut s = Self {
            chi,
            p,
            theta,
            radius,
            alpha: Vec::new(),
            gamma: Vec::new(),
            radii: Vec::new(),
        };
        for k in 0..=n_max.min(MOSER_MAX_N) {
            let c = powf(chi, k as f64);
            let gamma = 0.5 * p * c;
            if gamma > MOSER_MAX_GAMMA {
                break;
            }
            s.alpha.push(p * (c - 1.0));
            s.gamma.push(gamma);
            s.radii.push((theta + powf(0.5, k as f64) * (1.0 - theta)) * radius);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// One step of the Moser monitor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoserRow {
    pub step: usize,
    pub gamma: f64,
    pub radius: f64,
    /// `‖w_k‖_{L^{γ_N}(B_{r_N})}`.
    pub norm: f64,
    /// `sup_{B_{r_N}} w_k`.
    pub sup: f64,
    /// `sup · |B_{r_N}|^{1/γ_N}`, the bound every norm must respect.
    pub bound: f64,
    /// `norm_N / norm_{N−1}`; one for the first step.
    pub amplification: f64,
}

#[derive(Debug, Clone)]
pub struct MoserTable {
    pub rows: Vec<MoserRow>,
    pub report: Report,
}

/// `L^{γ_N}` norms of `w_k` on the shrinking balls, checked against the
/// sup-norm domination `‖w‖_{L^γ(B)} ≤ sup_B w · |B|^{1/γ}`.
pub fn moser_monitor(state: &TruncationState, schedule: &MoserSchedule, region: &BallRegion) -> Result<MoserTable> {
    let grid = *state.w.grid();
    let mut rows: Vec<MoserRow> = Vec::new();
    let mut violations = 0i64;
    let mut increasing = true;
    for (k, (&gamma, &radius)) in schedule.gamma.iter().zip(&schedule.radii).enumerate() {
        let ball = region.with_radius(radius);
        let norm = match lp_quasi_norm(&state.w, gamma, Some(&ball)) {
            Ok(v) => v,
            Err(Error::EmptyRegion) => break,
            Err(e) => return Err(e),
        };
        let sup = sup_norm(&state.w, Some(&ball))?;
        let measure = cell_mask(&grid, Some(&ball)).iter().filter(|m| **m).count() as f64
            * grid.cell_measure();
        let bound = sup * powf(measure, 1.0 / gamma);
        if norm > bound * (1.0 + 1e-12) + 1e-9 {
            violations += 1;
        }
        let amplification = rows.last().map_or(1.0, |r| norm / r.norm);
        if amplification < 1.0 {
            increasing = false;
        }
        rows.push(MoserRow {
            step: k,
            gamma,
            radius,
            norm,
            sup,
            bound,
            amplification,
        });
    }
    let inner_sup = sup_norm(&state.w, Some(&region.inner())).ok();
    let mut r = Report::new();
    r.num("chi", schedule.chi).int("steps", rows.len() as i64);
    if let Some(last) = rows.last() {
        r.num("last_gamma", last.gamma).num("last_norm", last.norm);
    }
    if let Some(s) = inner_sup {
        r.num("sup_inner", s);
    }
    r.int("norms_increasing", increasing as i64)
        .int("violations", violations)
        .flag("dominated_by_sup", violations == 0);
    Ok(MoserTable { rows, report: r })
}

/// `V_l = (w_k^{p/2} − l)₊`, cellwise.
pub fn v_level(state: &TruncationState, l: f64) -> ScalarField {
    let half = 0.5 * state.p;
    state.w.map(|w| (powf(w, half) - l).max(0.0))
}

/// One `(l, r)` entry of the De Giorgi table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeGiorgiLevel {
    pub level: f64,
    pub radius: f64,
    /// `|A(l, r)|` with `A(l, r) = {x ∈ B_r : w_k > l^{2/p}}`.
    pub measure: f64,
    /// `∫_{A(l,r)} V_l²`.
    pub v_sq_integral: f64,
}

#[derive(Debug, Clone)]
pub struct DeGiorgiTable {
    pub rows: Vec<DeGiorgiLevel>,
    pub report: Report,
}

/// Measures of the superlevel sets `A(l, r)`, checked for monotonicity in
/// `l` and `r` and for `|A(L, r)| ≤ (L − l)^{−2} ∫_{A(l,r)} V_l²`.
pub fn de_giorgi_monitor(
    state: &TruncationState,
    center: &BallRegion,
    levels: &[f64],
    radii: &[f64],
) -> Result<DeGiorgiTable> {
    if levels.is_empty() || radii.is_empty() {
        return Err(invalid!("need at least one level and one radius"));
    }
    if levels.windows(2).any(|w| !(w[0] < w[1])) || levels[0] < 0.0 {
        return Err(invalid!("levels must be nonnegative and strictly increasing"));
    }
    let grid = *state.w.grid();
    let a = grid.cell_measure();
    let half = 0.5 * state.p;
    let wp: Vec<f64> = state.w.values().iter().map(|w| powf(*w, half)).collect();
    let mut radii_sorted: Vec<f64> = radii.to_vec();
    radii_sorted.sort_by(|x, y| y.partial_cmp(x).expect("finite radii"));
    let mut rows = Vec::with_capacity(levels.len() * radii.len());
    for &r in &radii_sorted {
        let mask = cell_mask(&grid, Some(&center.with_radius(r)));
        for &l in levels {
            let mut measure = 0.0;
            let mut vsq = 0.0;
            for (c, &m) in mask.iter().enumerate() {
                if m && wp[c] > l {
                    measure += a;
                    let v = wp[c] - l;
                    vsq += a * v * v;
                }
            }
            rows.push(DeGiorgiLevel {
                level: l,
                radius: r,
                measure,
                v_sq_integral: vsq,
            });
        }
    }
    let nl = levels.len();
    let mut mono_l = 0i64;
    let mut mono_r = 0i64;
    let mut cheb = 0i64;
    let mut pairs = 0i64;
    for (ri, chunk) in rows.chunks(nl).enumerate() {
        for w in chunk.windows(2) {
            if w[1].measure > w[0].measure {
                mono_l += 1;
            }
        }
        if ri > 0 {
            let prev = &rows[(ri - 1) * nl..ri * nl];
            for (a1, b1) in prev.iter().zip(chunk) {
                if b1.measure > a1.measure {
                    mono_r += 1;
                }
            }
        }
        for i in 0..nl {
            for j in i + 1..nl {
                pairs += 1;
                let (lo, hi) = (&chunk[i], &chunk[j]);
                let d = hi.level - lo.level;
                let rhs = lo.v_sq_integral / (d * d);
                if hi.measure > rhs * (1.0 + SLACK_REL) + 1e-300 {
                    cheb += 1;
                }
            }
        }
    }
    let mut r = Report::new();
    r.int("levels", nl as i64)
        .int("radii", radii.len() as i64)
        .int("chebyshev_pairs", pairs)
        .int("chebyshev_violations", cheb)
        .int("monotone_level_violations", mono_l)
        .int("monotone_radius_violations", mono_r)
        .flag("chebyshev", cheb == 0)
        .flag("monotone", mono_l == 0 && mono_r == 0);
    Ok(DeGiorgiTable { rows, report: r })
}

/// `n` levels spread uniformly over `[min, max)` of `w_k^{p/2}` on `B_R`.
pub fn default_levels(state: &TruncationState, region: &BallRegion, n: usize) -> Result<Vec<f64>> {
    let grid = *state.w.grid();
    let mask = cell_mask(&grid, Some(region));
    let half = 0.5 * state.p;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (c, &m) in mask.iter().enumerate() {
        if m {
            let v = powf(state.w.values()[c], half);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        return Err(Error::EmptyRegion);
    }
    let n = n.max(2);
    let top = if hi > lo { hi } else { lo + 1.0 };
    let mut levels: Vec<f64> = (0..n)
        .map(|i| lo * 0.5 + (top - lo * 0.5) * i as f64 / n as f64)
        .collect();
    levels.dedup();
    Ok(levels)
}

/// Runs every diagnostic on a solution over a ball and merges the reports.
pub fn diagnostics_report(
    prob: &Problem,
    sol: &Solution,
    region: &BallRegion,
    chi: f64,
    moser_steps: usize,
    levels: usize,
) -> Result<Report> {
    let params = prob.params();
    let n = prob.grid().dim();
    let k = compute_k(prob.source(), params.p, params.q, region)?;
    let state = truncation_state(sol, prob.source(), k, params.p)?;
    let theta = region.theta.unwrap_or(0.5);
    let schedule = MoserSchedule::new(params.p, chi, theta, region.radius, moser_steps)?;
    let (lambda, big_lambda) = lambdas(params, n)?;
    let mut r = Report::new();
    r.num("k", k).num("lambda", lambda).num("Lambda", big_lambda);
    r.merge("wulff", &wulff_check(&state, n)?);
    r.merge("compat", &compatibility_check(&state));
    r.merge("fk", &fk_norm_check(&state, params.q, region)?);
    r.merge("lipschitz", &lipschitz_ratio(sol, prob.source(), region, params)?);
    r.merge("moser", &moser_monitor(&state, &schedule, region)?.report);
    let lv = default_levels(&state, region, levels)?;
    let radii: Vec<f64> = [1.0, 0.75, 0.5].iter().map(|s| s * region.radius).collect();
    r.merge("degiorgi", &de_giorgi_monitor(&state, region, &lv, &radii)?.report);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::Point;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid1() -> Grid {
        Grid::unit(1, 16).unwrap()
    }

    fn state_const_grad(g: Grid, grad: Point, k: f64, p: f64, f: f64) -> TruncationState {
        let v = VectorField::constant(g, grad).unwrap();
        truncation_state_from_gradient(&v, 1e-3, &ScalarField::constant(g, f), k, p).unwrap()
    }

    #[test]
    fn k_rule_examples() {
        let g = Grid::unit(2, 32).unwrap();
        let b = BallRegion::centered(&g);
        let inf = f64::INFINITY;
        assert_eq!(compute_k(&ScalarField::zeros(g), 3.0, inf, &b).unwrap(), 1.0);
        assert_eq!(compute_k(&ScalarField::constant(g, 1.0), 1.7, inf, &b).unwrap(), 2.0);
        assert_relative_eq!(
            compute_k(&ScalarField::constant(g, 2.0), 3.0, inf, &b).unwrap(),
            2.0f64.sqrt() + 1.0,
            max_relative = 1e-14
        );
        assert!(compute_k(&ScalarField::zeros(g), 3.0, 2.0, &b).is_err());
    }

    #[test]
    fn truncation_examples() {
        let s = state_const_grad(grid1(), Point::d1(0.5), 1.0, 3.0, 0.0);
        assert!(s.components[0].values().iter().all(|v| *v == 0.0));
        assert!(s.w.values().iter().all(|v| *v == 1.0));

        let s = state_const_grad(grid1(), Point::d1(2.0), 1.0, 3.0, 0.0);
        assert_eq!(s.components[0].values()[0], 1.0);
        assert_eq!(s.w.values()[0], 2.0);
        assert_eq!(s.w_hat.values()[0], 5.0);

        let s = state_const_grad(grid1(), Point::d1(-3.0), 1.0, 3.0, 0.0);
        assert_eq!(s.components[0].values()[0], -2.0);

        let v = VectorField::zeros(grid1());
        assert!(truncation_state_from_gradient(&v, 0.1, &ScalarField::zeros(grid1()), 0.5, 2.0).is_err());
    }

    #[test]
    fn wulff_constant_values() {
        assert_relative_eq!(wulff_constant(1.0).unwrap(), 1.0 + 0.5 * (1.0 + 5f64.sqrt()), max_relative = 1e-15);
        assert!((wulff_constant(1.0).unwrap() - 2.61803).abs() < 1e-5);
        assert!((wulff_constant(2f64.sqrt()).unwrap() - 3.73205).abs() < 1e-5);
        assert_relative_eq!(c0(2).unwrap(), 2.0 + 3f64.sqrt(), max_relative = 1e-15);
        let small = wulff_constant(1e-8).unwrap();
        assert!(small > 1.0 && small < 1.0 + 1e-7);
        assert!(wulff_constant(0.0).is_err());
        assert!(wulff_constant(-1.0).is_err());
    }

    #[test]
    fn lambda_examples() {
        let inf = f64::INFINITY;
        let p2 = ModelParams::canonical(2.0, 0.3, inf).unwrap();
        assert_eq!(lambdas(&p2, 2).unwrap(), (p2.big_c1, p2.big_c2));
        let p3 = ModelParams::canonical(3.0, 0.3, inf).unwrap();
        let (l, big) = lambdas(&p3, 2).unwrap();
        assert_relative_eq!(l, p3.big_c1 * 0.5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(big, p3.big_c2 * c0(2).unwrap().sqrt(), max_relative = 1e-14);
        let p15 = ModelParams::canonical(1.5, 0.3, inf).unwrap();
        let (l, _) = lambdas(&p15, 2).unwrap();
        assert_relative_eq!(l, p15.big_c1 * powf(c0(2).unwrap(), -0.25), max_relative = 1e-14);
    }

    #[test]
    fn wulff_check_examples() {
        let s = state_const_grad(grid1(), Point::d1(0.0), 1.0, 3.0, 0.0);
        assert!(wulff_check(&s, 1).unwrap().passed());
        let s = state_const_grad(grid1(), Point::d1(2.0), 1.0, 3.0, 0.0);
        let r = wulff_check(&s, 1).unwrap();
        assert!(r.passed());
        assert!(5.0 <= wulff_constant(1.0).unwrap() * 2.0);
    }

    #[test]
    fn fk_examples() {
        let g = Grid::unit(2, 16).unwrap();
        let b = BallRegion::centered(&g);
        let s = state_const_grad(g, Point::d2(0.1, 0.0), 1.0, 3.0, 0.0);
        let r = fk_norm_check(&s, f64::INFINITY, &b).unwrap();
        assert_eq!(r.get_num("fk_norm"), Some(0.0));
        let s = state_const_grad(g, Point::d2(0.1, 0.0), 2.0, 3.0, 1.0);
        let r = fk_norm_check(&s, f64::INFINITY, &b).unwrap();
        assert!(r.get_num("fk_norm").unwrap() <= 1.0 / 16.0 + 1e-15);
        assert!(r.passed());
    }

    #[test]
    fn lipschitz_ratio_examples() {
        let g = Grid::unit(2, 16).unwrap();
        let b = BallRegion::centered(&g);
        let params = ModelParams::canonical(3.0, 0.1, f64::INFINITY).unwrap();
        let zero = VectorField::zeros(g);
        let r = lipschitz_ratio_from_gradient(&zero, &ScalarField::zeros(g), &b, &params).unwrap();
        assert_eq!(r.get_num("ratio"), Some(0.0));
        let no_theta = BallRegion::new(g.center(), 0.3, None).unwrap();
        assert!(lipschitz_ratio_from_gradient(&zero, &ScalarField::zeros(g), &no_theta, &params).is_err());
        let outside = BallRegion::new(Point::d2(0.1, 0.1), 0.3, Some(0.5)).unwrap();
        assert!(lipschitz_ratio_from_gradient(&zero, &ScalarField::zeros(g), &outside, &params).is_err());
    }

    #[test]
    fn moser_schedule_arithmetic() {
        let s = MoserSchedule::new(3.0, 2.0, 0.5, 0.4, 8).unwrap();
        assert_eq!(s.len(), 9);
        for n in 0..9 {
            assert_relative_eq!(s.gamma[n], 1.5 * powf(2.0, n as f64), max_relative = 1e-15);
            assert_relative_eq!(s.alpha[n] + 3.0, 3.0 * powf(2.0, n as f64), max_relative = 1e-15);
        }
        assert_eq!(s.radii[0], 0.4);
        assert!(s.radii.windows(2).all(|w| w[1] < w[0]));
        assert!(s.radii.iter().all(|r| *r > 0.2));
        let capped = MoserSchedule::new(3.0, 4.0, 0.5, 0.4, 40).unwrap();
        assert!(capped.gamma.iter().all(|g| *g <= MOSER_MAX_GAMMA));
        assert!(MoserSchedule::new(3.0, 1.0, 0.5, 0.4, 4).is_err());
    }

    #[test]
    fn moser_constant_field() {
        let g = Grid::unit(2, 32).unwrap();
        let b = BallRegion::centered(&g);
        let s = state_const_grad(g, Point::d2(0.0, 0.0), 1.5, 3.0, 0.0);
        let sched = MoserSchedule::new(3.0, 2.0, 0.5, b.radius, 6).unwrap();
        let t = moser_monitor(&s, &sched, &b).unwrap();
        assert!(t.report.passed());
        for row in &t.rows {
            let ball = b.with_radius(row.radius);
            let m = crate::grid::region_measure(&g, Some(&ball)).unwrap();
            assert_relative_eq!(row.norm, 2.25 * powf(m, 1.0 / row.gamma), max_relative = 1e-12);
        }
    }

    #[test]
    fn de_giorgi_extremes() {
        let g = Grid::unit(2, 32).unwrap();
        let b = BallRegion::centered(&g);
        let s = state_const_grad(g, Point::d2(3.0, 0.0), 1.0, 3.0, 0.0);
        let wp = powf(s.w.values()[0], 1.5);
        let t = de_giorgi_monitor(&s, &b, &[0.5 * wp, 2.0 * wp], &[b.radius]).unwrap();
        let area = crate::grid::region_measure(&g, Some(&b)).unwrap();
        assert_relative_eq!(t.rows[0].measure, area, max_relative = 1e-14);
        assert_eq!(t.rows[1].measure, 0.0);
        assert_eq!(t.rows[1].v_sq_integral, 0.0);
        assert!(t.report.passed());
        assert!(de_giorgi_monitor(&s, &b, &[2.0, 1.0], &[0.3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn truncation_properties(gx in -50.0f64..50.0, gy in -50.0f64..50.0, k in 1.0f64..10.0, p in 1.1f64..5.0) {
            let g = Grid::unit(2, 4).unwrap();
            let s = state_const_grad(g, Point::d2(gx, gy), k, p, 1.0);
            for (i, gi) in [gx, gy].iter().enumerate() {
                let u = s.components[i].values()[0];
                prop_assert!((u.abs() - (gi.abs() - k).max(0.0)).abs() <= 1e-12 * gi.abs().max(1.0));
                if u != 0.0 {
                    prop_assert_eq!(u.signum(), gi.signum());
                }
            }
            let (w, wh) = (s.w.values()[0], s.w_hat.values()[0]);
            prop_assert!(w >= k * k && wh >= k * k);
            prop_assert!(w <= wh * (1.0 + 1e-14));
            prop_assert!(wh <= c0(2).unwrap() * w * (1.0 + 1e-14));
            prop_assert!(s.fk.values()[0] >= 0.0);
            prop_assert!(wulff_check(&s, 2).unwrap().passed());
            prop_assert!(compatibility_check(&s).passed());
        }

        #[test]
        fn lipschitz_ratio_ignores_constants(shift in -10.0f64..10.0, a in 0.1f64..5.0) {
            let g = Grid::unit(2, 16).unwrap();
            let b = BallRegion::centered(&g);
            let params = ModelParams::canonical(2.5, 0.1, f64::INFINITY).unwrap();
            let u = ScalarField::from_fn(g, |x| a * (x.get(0) * 3.0).sin() * x.get(1)).unwrap();
            let v = u.map(|t| t + shift);
            let f = ScalarField::constant(g, 1.0);
            let r1 = lipschitz_ratio_from_gradient(&crate::grid::gradient(&u).unwrap(), &f, &b, &params).unwrap();
            let r2 = lipschitz_ratio_from_gradient(&crate::grid::gradient(&v).unwrap(), &f, &b, &params).unwrap();
            let (x, y) = (r1.get_num("ratio").unwrap(), r2.get_num("ratio").unwrap());
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1e-300));
        }
    }
}
