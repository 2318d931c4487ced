//! Damped Newton minimization of `F^ε`, ε-continuation, extraction of the
//! vector field `Z`, and the closed-form 1D oracle.

use alloc::vec;
use alloc::vec::Vec;

use crate::energy::{energy_increment, linearize, HessianLayout, Problem};
use crate::error::{invalid, precondition};
use crate::grid::{gradient, lp_norm, vector_lp_norm, Grid, Location, ScalarField, VectorField};
use crate::integrand::{grad_psi_eps, soft_threshold_inverse, Epsilon, Point};
use crate::linalg::{pcg, solve_tridiagonal, Preconditioner};
use crate::math::{abs, powf, sign};
use crate::{Error, Report, Result};

/// Linear solver used for Newton steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolver {
    /// Direct tridiagonal elimination in 1D, IC(0)-preconditioned CG in 2D.
    Auto,
    /// Diagonally preconditioned CG.
    JacobiCg,
    /// Incomplete-Cholesky preconditioned CG.
    IncompleteCholeskyCg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Target for `max_i |g_i| / m_i`, the energy gradient divided by the
    /// nodal quadrature weight.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step reduction per backtracking trial.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Relative residual target of the inner CG solves.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub linear_solver: LinearSolver,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iters: 500,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            cg_tol: 1e-10,
            cg_max_iters: 20_000,
            linear_solver: LinearSolver::Auto,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(invalid!("grad_tol must be positive (got {})", self.grad_tol));
        }
        if self.max_iters == 0 {
            return Err(invalid!("max_iters must be at least 1"));
        }
        for (name, v) in [("armijo", self.armijo), ("backtrack", self.backtrack)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid!("{name} must lie in (0, 1) (got {v})"));
            }
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(invalid!("cg_tol must lie in (0, 1) (got {})", self.cg_tol));
        }
        Ok(())
    }
}

/// Geometric ε schedule `ε_k = ε_start ρ^k`, clipped at `ε_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSchedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub rho: f64,
}

impl ContinuationSchedule {
    pub fn new(eps_start: f64, eps_end: f64, rho: f64) -> Result<Self> {
        Epsilon::new(eps_start)?;
        Epsilon::new(eps_end)?;
        if eps_start < eps_end {
            return Err(invalid!(
                "eps_start must be >= eps_end (got {eps_start} < {eps_end})"
            ));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid!("decay factor rho must lie in (0, 1) (got {rho})"));
        }
        Ok(Self {
            eps_start,
            eps_end,
            rho,
        })
    }

    /// Single level at `eps`.
    pub fn single(eps: f64) -> Result<Self> {
        Self::new(eps, eps, 0.1)
    }

    pub fn levels(&self) -> Vec<Epsilon> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let e = self.eps_start * powf(self.rho, k as f64);
            if e <= self.eps_end * (1.0 + 1e-9) {
                break;
            }
            out.push(Epsilon(e));
            k += 1;
        }
        out.push(Epsilon(self.eps_end));
        out
    }
}

/// Outcome of one continuation level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRecord {
    pub eps: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `F^ε(u^ε)` at this level.
    pub energy: f64,
    /// `F^ε` of the warm start handed to this level.
    pub warm_start_energy: f64,
    /// `‖∇u^{ε_k} − ∇u^{ε_{k-1}}‖_{L^p}`; absent on the first level.
    pub cauchy_increment: Option<f64>,
    pub converged: bool,
}

/// A discrete pair `(u, Z)` and the history that produced it.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: ScalarField,
    pub z: VectorField,
    /// Regularization of the last solve; `0` for the oracle.
    pub eps_final: f64,
    pub iterations: usize,
    /// Scaled gradient norm of every iterate, across all levels.
    pub residuals: Vec<f64>,
    /// Energy of every iterate of the last level.
    pub energies: Vec<f64>,
    pub converged: bool,
    /// Estimated attainable precision of the scaled gradient at the last
    /// iterate. Below it, a solve that stops making Newton progress counts
    /// as converged even above `grad_tol`.
    pub residual_floor: f64,
    pub levels: Vec<LevelRecord>,
}

impl Solution {
    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    pub fn energy(&self) -> f64 {
        self.energies.last().copied().unwrap_or(0.0)
    }

    pub fn gradient(&self) -> VectorField {
        gradient(&self.u).expect("solution stores a node field")
    }
}

/// `Z = ∇Ψ^ε(∇u)` cellwise, with `|Z| ≤ 1` enforced against rounding.
pub fn extract_z(u: &ScalarField, eps: Epsilon) -> Result<VectorField> {
    let mut z = gradient(u)?;
    for v in z.values_mut() {
        let w = grad_psi_eps(eps, *v);
        let n = w.norm();
        *v = if n > 1.0 { w * (1.0 / n) } else { w };
    }
    Ok(z)
}

fn scaled_residual(prob: &Problem, g: &[f64]) -> f64 {
    let w = prob.node_weights();
    prob.interior_nodes()
        .iter()
        .zip(g)
        .fold(0.0, |m, (&node, gi)| m.max(abs(*gi) / w[node]))
}

fn trivial_solution(prob: &Problem, eps: f64) -> Solution {
    let g = *prob.grid();
    Solution {
        u: ScalarField::zeros(g),
        z: VectorField::zeros(g),
        eps_final: eps,
        iterations: 0,
        residuals: vec![0.0],
        energies: vec![prob.eps().map_or(0.0, |e| {
            let par = prob.params();
            let z = Point::zero(g.dim());
            crate::integrand::e_eps(par, e, z) * g.domain_measure()
        })],
        converged: true,
        residual_floor: 0.0,
        levels: Vec::new(),
    }
}

/// Minimizes `F^ε` over the Dirichlet class from `init` by damped Newton
/// with Armijo backtracking. Running out of iterations returns the last
/// iterate with `converged = false`.
pub fn solve_regularized(prob: &Problem, init: &ScalarField, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    let eps = prob
        .eps()
        .ok_or_else(|| precondition!("solve_regularized needs eps > 0"))?;
    prob.check_boundary(init)?;
    if prob.is_trivial() {
        return Ok(trivial_solution(prob, eps.get()));
    }
    let grid = *prob.grid();
    let mut u = init.clone();
    let mut layout = HessianLayout::new(prob);
    let mut residuals = Vec::new();
    let mut energies = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut floor;
    let mut prev_res: Option<f64> = None;
    let n = prob.num_unknowns();
    let mut d = vec![0.0; n];

    loop {
        let lin = linearize(prob, &u, &mut layout)?;
        let res = scaled_residual(prob, &lin.gradient);
        residuals.push(res);
        energies.push(lin.energy);
        floor = rounding_floor(prob, &u, &layout);
        // Below the rounding floor, stop once Newton no longer halves the
        // residual.
        let stalled = res <= floor && prev_res.is_some_and(|r| res > 0.5 * r);
        if res <= opts.grad_tol || stalled {
            converged = true;
            break;
        }
        prev_res = Some(res);
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        let rhs: Vec<f64> = lin.gradient.iter().map(|g| -g).collect();
        let newton_ok = newton_direction(&layout, &rhs, &mut d, grid.dim(), opts);
        let mut slope: f64 = lin.gradient.iter().zip(&d).map(|(g, di)| g * di).sum();
        if !newton_ok || !(slope < 0.0) {
            // Diagonally scaled steepest descent.
            let diag = layout.matrix.diagonal();
            for i in 0..n {
                d[i] = rhs[i] / if diag[i] > 0.0 { diag[i] } else { 1.0 };
            }
            slope = lin.gradient.iter().zip(&d).map(|(g, di)| g * di).sum();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let de = energy_increment(prob, &u, &d, t)?;
            if de <= opts.armijo * t * slope && de < 0.0 {
                accepted = Some(t);
                break;
            }
            t *= opts.backtrack;
        }
        let Some(t) = accepted else {
            // No representable decrease along the step: the iterate is as
            // good as rounding allows.
            log::debug!("line search stalled at residual {res:e}");
            converged = res <= floor;
            break;
        };
        let mut x = prob.gather(&u);
        for i in 0..n {
            x[i] += t * d[i];
        }
        prob.scatter(&x, &mut u);
    }

    let z = extract_z(&u, eps)?;
    Ok(Solution {
        u,
        z,
        eps_final: eps.get(),
        iterations,
        residuals,
        energies,
        converged,
        residual_floor: floor,
        levels: Vec::new(),
    })
}

/// Scaled gradient error caused by storing `u` in double precision:
/// a relative perturbation of `u` of one unit roundoff moves `g_i` by up to
/// `ulp · max|u| · Σ_j |H_ij|`.
fn rounding_floor(prob: &Problem, u: &ScalarField, layout: &HessianLayout) -> f64 {
    let umax = 1.0 + u.max_abs();
    let w = prob.node_weights();
    let rows = layout.matrix.row_abs_sums();
    prob.interior_nodes()
        .iter()
        .zip(&rows)
        .fold(0.0, |m, (&node, r)| m.max(f64::EPSILON * umax * r / w[node]))
}

fn newton_direction(layout: &HessianLayout, rhs: &[f64], d: &mut [f64], dim: usize, opts: &SolveOptions) -> bool {
    let a = &layout.matrix;
    if dim == 1 && matches!(opts.linear_solver, LinearSolver::Auto) {
        if let Some((diag, lo, up)) = a.tridiagonal() {
            if let Some(x) = solve_tridiagonal(&diag, &lo, &up, rhs) {
                if x.iter().all(|v| v.is_finite()) {
                    d.copy_from_slice(&x);
                    return true;
                }
            }
        }
    }
    let m = match opts.linear_solver {
        LinearSolver::JacobiCg => Preconditioner::jacobi(a),
        _ => Preconditioner::incomplete_cholesky(a),
    };
    d.iter_mut().for_each(|v| *v = 0.0);
    let out = pcg(a, rhs, d, &m, opts.cg_tol, opts.cg_max_iters);
    if !out.converged {
        log::debug!(
            "CG stopped after {} iterations at relative residual {:e}",
            out.iterations,
            out.relative_residual
        );
    }
    out.converged || out.relative_residual < 1e-3
}

/// Runs [`solve_regularized`] along the schedule, warm-starting each level
/// from the previous one. Returns the last level's pair with the per-level
/// history.
pub fn continuation_solve(
    prob: &Problem,
    schedule: &ContinuationSchedule,
    opts: &SolveOptions,
) -> Result<Solution> {
    continuation_solve_from(prob, &prob.initial_guess(), schedule, opts)
}

pub fn continuation_solve_from(
    prob: &Problem,
    init: &ScalarField,
    schedule: &ContinuationSchedule,
    opts: &SolveOptions,
) -> Result<Solution> {
    let mut u = init.clone();
    let mut prev_grad: Option<VectorField> = None;
    let mut levels = Vec::new();
    let mut residuals = Vec::new();
    let mut iterations = 0;
    let mut last = None;
    for eps in schedule.levels() {
        let level = prob.with_eps(Some(eps));
        let warm = crate::energy::total_energy(&level, &u)?;
        let sol = solve_regularized(&level, &u, opts)?;
        let grad = sol.gradient();
        let cauchy = match &prev_grad {
            Some(pg) => Some(vector_lp_norm(&grad.sub(pg)?, prob.params().p, None)?),
            None => None,
        };
        levels.push(LevelRecord {
            eps: eps.get(),
            iterations: sol.iterations,
            residual: sol.residual(),
            energy: sol.energy(),
            warm_start_energy: warm,
            cauchy_increment: cauchy,
            converged: sol.converged,
        });
        log::debug!(
            "eps={:e} iterations={} residual={:e} converged={}",
            eps.get(),
            sol.iterations,
            sol.residual(),
            sol.converged
        );
        iterations += sol.iterations;
        residuals.extend_from_slice(&sol.residuals);
        prev_grad = Some(grad);
        u = sol.u.clone();
        last = Some(sol);
    }
    let mut sol = last.expect("schedule has at least one level");
    sol.converged = levels.iter().all(|l| l.converged);
    sol.iterations = iterations;
    sol.residuals = residuals;
    sol.levels = levels;
    Ok(sol)
}

/// The 1D limit solution with its cellwise total flux `σ`.
#[derive(Debug, Clone)]
pub struct Oracle1d {
    pub solution: Solution,
    /// `σ` at cell midpoints; the facet is `{|σ| ≤ β}`.
    pub flux: Vec<f64>,
    /// Integration constant `c` in `σ(x) = c − ∫₀ˣ f`.
    pub shift: f64,
}

impl Oracle1d {
    /// Cells whose flux lies in the facet band `|σ| ≤ β`.
    pub fn facet_cells(&self, beta: f64) -> Vec<bool> {
        self.flux.iter().map(|s| abs(*s) <= beta).collect()
    }
}

/// Exact solution of the limit problem on `[x₀, x₀+L]` by soft-threshold
/// inversion of the integrated equation `β Z + |u'|^{p-2} u' = σ`.
pub fn oracle_1d(p: f64, beta: f64, f: &ScalarField, a: f64, b: f64) -> Result<Solution> {
    Ok(oracle_1d_full(p, beta, f, a, b)?.solution)
}

pub fn oracle_1d_full(p: f64, beta: f64, f: &ScalarField, a: f64, b: f64) -> Result<Oracle1d> {
    let grid = *f.grid();
    if grid.dim() != 1 {
        return Err(precondition!("the oracle needs a 1D grid"));
    }
    if f.location() != Location::Nodes {
        return Err(Error::GridMismatch("oracle source must be a node field".into()));
    }
    if !(p > 1.0) || !(beta >= 0.0) {
        return Err(invalid!("oracle needs p > 1 and beta >= 0 (got p={p}, beta={beta})"));
    }
    let h = grid.spacing();
    let n = grid.cells_per_axis();
    let fv = f.values();
    // ∫₀ˣ f at cell midpoints, trapezoid over whole cells plus half a cell.
    let mut mid = Vec::with_capacity(n);
    let mut acc = 0.0;
    for c in 0..n {
        let half = 0.25 * h * (fv[c] + 0.5 * (fv[c] + fv[c + 1]));
        mid.push(acc + half);
        acc += 0.5 * h * (fv[c] + fv[c + 1]);
    }
    let target = b - a;
    let phi = |c: f64| -> f64 {
        mid.iter()
            .map(|m| h * soft_threshold_inverse(c - m, beta, p))
            .sum::<f64>()
            - target
    };
    // Bracket: phi is nondecreasing in c.
    let span = mid.iter().fold(0.0f64, |m, v| m.max(abs(*v)));
    let mut lo = -(span + beta + 1.0);
    let mut hi = span + beta + 1.0;
    let mut grow = 0;
    while phi(lo) > 0.0 || phi(hi) < 0.0 {
        lo *= 2.0;
        hi *= 2.0;
        grow += 1;
        if grow > 200 || !lo.is_finite() {
            return Err(Error::Bisection("could not bracket the flux constant".into()));
        }
    }
    // The zero set of phi may be an interval; take its midpoint.
    let left = bisect(&phi, lo, hi, |v| v >= 0.0)?;
    let right = bisect(&phi, lo, hi, |v| v > 0.0)?;
    let shift = 0.5 * (left + right);

    let flux: Vec<f64> = mid.iter().map(|m| shift - m).collect();
    let slopes: Vec<f64> = flux.iter().map(|s| soft_threshold_inverse(*s, beta, p)).collect();
    let mut u = Vec::with_capacity(n + 1);
    u.push(a);
    let mut x = a;
    for s in &slopes[..n - 1] {
        x += h * s;
        u.push(x);
    }
    u.push(b);
    let z: Vec<Point> = slopes
        .iter()
        .zip(&flux)
        .map(|(&s, &sig)| {
            Point::d1(if s != 0.0 {
                sign(s)
            } else if beta > 0.0 {
                (sig / beta).clamp(-1.0, 1.0)
            } else {
                0.0
            })
        })
        .collect();
    let solution = Solution {
        u: ScalarField::nodes(grid, u)?,
        z: VectorField::new(grid, z)?,
        eps_final: 0.0,
        iterations: 0,
        residuals: Vec::new(),
        energies: Vec::new(),
        converged: true,
        residual_floor: 0.0,
        levels: Vec::new(),
    };
    Ok(Oracle1d {
        solution,
        flux,
        shift,
    })
}

/// Smallest `c` in `[lo, hi]` (to rounding) with `pred(phi(c))`.
fn bisect<F: Fn(f64) -> f64, P: Fn(f64) -> bool>(phi: &F, mut lo: f64, mut hi: f64, pred: P) -> Result<f64> {
    if !pred(phi(hi)) {
        return Err(Error::Bisection("bracket does not contain the root".into()));
    }
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        let v = phi(m);
        if !v.is_finite() {
            return Err(Error::Bisection("non-finite constraint value".into()));
        }
        if pred(v) {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok(hi)
}

/// Compares the `ε = 0` energy of `u` with `trials` random interior
/// perturbations per magnitude. Each perturbation has entries uniform in
/// `[-1, 1]` scaled by `magnitude · max(‖u‖_∞, 1e-300)`.
///
/// `worst_margin` is the smallest `F(u+φ) − F(u)`; `pass` requires it to be at
/// least `-tol`.
pub fn minimality_check<R: rand::Rng + ?Sized>(
    prob: &Problem,
    u: &ScalarField,
    magnitudes: &[f64],
    trials: usize,
    tol: f64,
    rng: &mut R,
) -> Result<Report> {
    if magnitudes.is_empty() || magnitudes.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(invalid!("perturbation magnitudes must be positive and finite"));
    }
    prob.check_boundary(u)?;
    let limit = prob.with_eps(None);
    let base = crate::energy::total_energy(&limit, u)?;
    let scale = u.max_abs().max(1e-300);
    let mut worst = f64::INFINITY;
    let mut r = Report::new();
    for (i, &m) in magnitudes.iter().enumerate() {
        let mut level_worst = f64::INFINITY;
        for _ in 0..trials {
            let mut v = u.clone();
            let vals = v.values_mut();
            for &k in prob.interior_nodes() {
                vals[k] += m * scale * rng.gen_range(-1.0..=1.0);
            }
            let e = crate::energy::total_energy(&limit, &v)?;
            level_worst = level_worst.min(e - base);
        }
        r.num(&alloc::format!("magnitude_{i}"), m)
            .num(&alloc::format!("worst_margin_{i}"), level_worst);
        worst = worst.min(level_worst);
    }
    r.num("energy", base)
        .int("trials", (trials * magnitudes.len()) as i64)
        .num("worst_margin", worst)
        .flag("pass", worst >= -tol);
    Ok(r)
}

/// Empirical stability constant for two problems sharing Dirichlet data:
/// `‖∇u₁ − ∇u₂‖_{L^p} / ‖f₁ − f₂‖_{L^q}^{1/(p-1)}` for `p ≥ 2`, and the
/// `L¹` form `‖∇u₁ − ∇u₂‖_{L¹} / ((1 + ‖∇u₂‖_p^p + ‖f₁‖_q^{p'}) ‖f₁ − f₂‖_q^{1/2})`
/// for `1 < p < 2`.
pub fn stability_check(prob1: &Problem, prob2: &Problem, s1: &Solution, s2: &Solution) -> Result<Report> {
    let g: &Grid = prob1.grid();
    g.ensure_same(prob2.grid())?;
    g.ensure_same(s1.u.grid())?;
    g.ensure_same(s2.u.grid())?;
    for k in (0..g.num_nodes()).filter(|&k| g.is_boundary(k)) {
        if prob1.boundary().values()[k] != prob2.boundary().values()[k] {
            return Err(precondition!("problems must share Dirichlet data"));
        }
    }
    let p = prob1.params().p;
    let q = prob1.params().q;
    let g1 = s1.gradient();
    let g2 = s2.gradient();
    let diff = g1.sub(&g2)?;
    let df = prob1.source().axpy(-1.0, prob2.source())?;
    let df_norm = lp_norm(&df, q, None)?;
    let mut r = Report::new();
    let (lhs, rhs) = if p >= 2.0 {
        r.text("form", "lp");
        (vector_lp_norm(&diff, p, None)?, powf(df_norm, 1.0 / (p - 1.0)))
    } else {
        r.text("form", "l1");
        let pp = p / (p - 1.0);
        let pre = 1.0
            + powf(vector_lp_norm(&g2, p, None)?, p)
            + powf(lp_norm(prob1.source(), q, None)?, pp);
        (vector_lp_norm(&diff, 1.0, None)?, pre * powf(df_norm, 0.5))
    };
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    r.num("lhs", lhs).num("rhs", rhs).num("ratio", ratio).flag("finite", ratio.is_finite());
    Ok(r)
}
