//! Discrete energies `F^ε(u) = ∫ E^ε(∇u) − ∫ f u` and `F(u) = ∫ β|∇u| +
//! E_p(∇u) − ∫ f u` over the affine class fixed by Dirichlet data, with
//! their first-order conditions.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, precondition};
use crate::grid::{Grid, Location, ScalarField, VectorField};
use crate::integrand::{
    e_eps, e_eps_increment, e_eps_local, e_limit, grad_e_eps, grad_ep, Epsilon, ModelParams,
    Point,
};
use crate::linalg::Csr;
use crate::math::{abs, powf};
use crate::{Error, Result};

const NONE: usize = usize::MAX;

/// Source, Dirichlet data, model parameters and regularization level on a
/// grid. `eps = None` selects the limit functional.
#[derive(Debug, Clone)]
pub struct Problem {
    grid: Grid,
    f: ScalarField,
    boundary: ScalarField,
    params: ModelParams,
    eps: Option<Epsilon>,
    weights: Vec<f64>,
    interior: Vec<usize>,
    unknown: Vec<usize>,
}

impl Problem {
    /// `boundary` is a node field whose boundary samples are the Dirichlet
    /// trace; its interior samples serve as the default initial guess.
    pub fn new(
        f: ScalarField,
        boundary: ScalarField,
        params: ModelParams,
        eps: Option<Epsilon>,
    ) -> Result<Self> {
        let grid = *f.grid();
        grid.ensure_same(boundary.grid())?;
        if f.location() != Location::Nodes || boundary.location() != Location::Nodes {
            return Err(Error::GridMismatch("source and boundary must be node fields".into()));
        }
        let interior = grid.interior_nodes();
        let mut unknown = vec![NONE; grid.num_nodes()];
        for (k, &node) in interior.iter().enumerate() {
            unknown[node] = k;
        }
        Ok(Self {
            grid,
            f,
            boundary,
            params,
            eps,
            weights: grid.node_weights(),
            interior,
            unknown,
        })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn source(&self) -> &ScalarField {
        &self.f
    }

    #[inline]
    pub fn boundary(&self) -> &ScalarField {
        &self.boundary
    }

    #[inline]
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    #[inline]
    pub fn eps(&self) -> Option<Epsilon> {
        self.eps
    }

    pub fn with_eps(&self, eps: Option<Epsilon>) -> Self {
        Self {
            eps,
            ..self.clone()
        }
    }

    pub fn with_source(&self, f: ScalarField) -> Result<Self> {
        self.grid.ensure_same(f.grid())?;
        if f.location() != Location::Nodes {
            return Err(Error::GridMismatch("source must be a node field".into()));
        }
        Ok(Self { f, ..self.clone() })
    }

    /// Lumped nodal quadrature weights.
    #[inline]
    pub fn node_weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn num_unknowns(&self) -> usize {
        self.interior.len()
    }

    /// Node index of each unknown.
    #[inline]
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Unknown index of a node, `None` on the boundary.
    #[inline]
    pub fn unknown_index(&self, node: usize) -> Option<usize> {
        let k = self.unknown[node];
        (k != NONE).then_some(k)
    }

    /// The boundary field itself: Dirichlet trace plus its interior lift.
    pub fn initial_guess(&self) -> ScalarField {
        self.boundary.clone()
    }

    /// `f ≡ 0` with homogeneous Dirichlet data.
    pub fn is_trivial(&self) -> bool {
        self.f.values().iter().all(|v| *v == 0.0)
            && (0..self.grid.num_nodes())
                .filter(|&k| self.grid.is_boundary(k))
                .all(|k| self.boundary.values()[k] == 0.0)
    }

    /// Errors unless `u` is a node field matching the Dirichlet data.
    pub fn check_boundary(&self, u: &ScalarField) -> Result<()> {
        self.grid.ensure_same(u.grid())?;
        if u.location() != Location::Nodes {
            return Err(Error::GridMismatch("expected a node field".into()));
        }
        let b = self.boundary.values();
        for k in (0..self.grid.num_nodes()).filter(|&k| self.grid.is_boundary(k)) {
            let d = abs(u.values()[k] - b[k]);
            if d > 1e-12 * (1.0 + abs(b[k])) {
                return Err(precondition!(
                    "boundary mismatch at node {k}: {} vs {}",
                    u.values()[k],
                    b[k]
                ));
            }
        }
        Ok(())
    }

    /// Interior samples of `u` in unknown order.
    pub fn gather(&self, u: &ScalarField) -> Vec<f64> {
        self.interior.iter().map(|&k| u.values()[k]).collect()
    }

    /// Writes unknowns into the interior samples of `u`.
    pub fn scatter(&self, x: &[f64], u: &mut ScalarField) {
        let v = u.values_mut();
        for (&node, &xi) in self.interior.iter().zip(x) {
            v[node] = xi;
        }
    }

    fn require_eps(&self) -> Result<Epsilon> {
        self.eps.ok_or_else(|| {
            invalid!("the limit functional (eps = 0) is not differentiable; use a positive eps")
        })
    }

    fn load(&self, u: &[f64]) -> f64 {
        self.f
            .values()
            .iter()
            .zip(u)
            .zip(&self.weights)
            .map(|((f, u), m)| m * f * u)
            .sum()
    }
}

/// `F^ε(u)`, or `F(u)` when the problem has no `ε`.
pub fn total_energy(prob: &Problem, u: &ScalarField) -> Result<f64> {
    prob.check_boundary(u)?;
    let e = internal_energy(prob, u) - prob.load(u.values());
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite("energy".into()))
    }
}

/// `∫ E^ε(∇u)` (or `∫ β|∇u| + E_p(∇u)`) without the load term.
pub fn internal_energy(prob: &Problem, u: &ScalarField) -> f64 {
    let g = &prob.grid;
    let a = g.cell_measure();
    let v = u.values();
    let par = &prob.params;
    match prob.eps {
        Some(eps) => (0..g.num_cells())
            .map(|c| a * e_eps(par, eps, g.stencil(c).gradient(v)))
            .sum(),
        None => (0..g.num_cells())
            .map(|c| a * e_limit(par, g.stencil(c).gradient(v)))
            .sum(),
    }
}

/// `F^ε(u + t d) − F^ε(u)` for a direction `d` given on the unknowns,
/// summed cellwise from cancellation-free increments.
pub fn energy_increment(prob: &Problem, u: &ScalarField, d: &[f64], t: f64) -> Result<f64> {
    let eps = prob.require_eps()?;
    let g = &prob.grid;
    let mut dn = vec![0.0; g.num_nodes()];
    for (&node, &di) in prob.interior.iter().zip(d) {
        dn[node] = t * di;
    }
    let a = g.cell_measure();
    let par = &prob.params;
    let mut s = 0.0;
    for c in 0..g.num_cells() {
        let st = g.stencil(c);
        s += a * e_eps_increment(par, eps, st.gradient(u.values()), st.gradient(&dn));
    }
    s -= prob.load(&dn);
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFinite("energy increment".into()))
    }
}

/// Gradient of `F^ε` with respect to the interior node values, as a node
/// field that vanishes on the boundary.
pub fn energy_gradient(prob: &Problem, u: &ScalarField) -> Result<ScalarField> {
    let eps = prob.require_eps()?;
    prob.check_boundary(u)?;
    let g = &prob.grid;
    let mut out = vec![0.0; g.num_nodes()];
    let a = g.cell_measure();
    for c in 0..g.num_cells() {
        let st = g.stencil(c);
        let flux = grad_e_eps(&prob.params, eps, st.gradient(u.values()));
        for k in 0..st.len {
            out[st.nodes[k]] += a * flux.dot(st.coef[k]);
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        if g.is_boundary(k) {
            *o = 0.0;
        } else {
            *o -= prob.weights[k] * prob.f.values()[k];
        }
    }
    ScalarField::nodes(*g, out)
}

/// Hessian sparsity over the unknowns, with the storage slot of every
/// (local row, local column) pair of every cell.
#[derive(Debug, Clone)]
pub struct HessianLayout {
    pub matrix: Csr,
    slots: Vec<[usize; 9]>,
}

impl HessianLayout {
    pub fn new(prob: &Problem) -> Self {
        let g = &prob.grid;
        let mut rows = vec![Vec::new(); prob.num_unknowns()];
        for c in 0..g.num_cells() {
            let st = g.stencil(c);
            for a in 0..st.len {
                if let Some(i) = prob.unknown_index(st.nodes[a]) {
                    for b in 0..st.len {
                        if let Some(j) = prob.unknown_index(st.nodes[b]) {
                            rows[i].push(j);
                        }
                    }
                }
            }
        }
        let matrix = Csr::from_pattern(rows);
        let slots = (0..g.num_cells())
            .map(|c| {
                let st = g.stencil(c);
                let mut s = [NONE; 9];
                for a in 0..st.len {
                    for b in 0..st.len {
                        if let (Some(i), Some(j)) =
                            (prob.unknown_index(st.nodes[a]), prob.unknown_index(st.nodes[b]))
                        {
                            s[3 * a + b] = matrix.slot(i, j).unwrap_or(NONE);
                        }
                    }
                }
                s
            })
            .collect();
        Self { matrix, slots }
    }
}

/// Local quantities of one Newton linearization.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// Energy gradient on the unknowns.
    pub gradient: Vec<f64>,
    pub energy: f64,
}

/// Assembles energy, gradient and Hessian of `F^ε` at `u` in one sweep;
/// the Hessian goes into `layout.matrix`.
pub fn linearize(prob: &Problem, u: &ScalarField, layout: &mut HessianLayout) -> Result<Linearization> {
    let eps = prob.require_eps()?;
    let g = &prob.grid;
    let a = g.cell_measure();
    let mut grad = vec![0.0; prob.num_unknowns()];
    let mut energy = 0.0;
    layout.matrix.clear();
    let vals = layout.matrix.values_mut();
    for c in 0..g.num_cells() {
        let st = g.stencil(c);
        let (e, flux, h) = e_eps_local(&prob.params, eps, st.gradient(u.values()));
        energy += a * e;
        let mut hc = [Point::zero(g.dim()); 3];
        for k in 0..st.len {
            hc[k] = h.apply(st.coef[k]);
        }
        for i in 0..st.len {
            let Some(ui) = prob.unknown_index(st.nodes[i]) else {
                continue;
            };
            grad[ui] += a * flux.dot(st.coef[i]);
            for j in 0..st.len {
                let s = layout.slots[c][3 * i + j];
                if s != NONE {
                    vals[s] += a * hc[j].dot(st.coef[i]);
                }
            }
        }
    }
    for (ui, &node) in prob.interior.iter().enumerate() {
        grad[ui] -= prob.weights[node] * prob.f.values()[node];
    }
    energy -= prob.load(u.values());
    if !energy.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linearization".into()));
    }
    Ok(Linearization {
        gradient: grad,
        energy,
    })
}

/// Cellwise total flux `β Z + ∇E_p(∇u)`.
pub fn limit_flux(prob: &Problem, u: &ScalarField, z: &VectorField) -> Result<VectorField> {
    let grad = crate::grid::gradient(u)?;
    prob.grid.ensure_same(z.grid())?;
    let p = prob.params.p;
    let beta = prob.params.beta;
    let values = grad
        .values()
        .iter()
        .zip(z.values())
        .map(|(&du, &zc)| zc * beta + grad_ep(p, du))
        .collect();
    VectorField::new(prob.grid, values)
}

/// Residual of the limit weak formulation
/// `β∫⟨Z|∇φ⟩ + ∫⟨∇E_p(∇u)|∇φ⟩ − ∫fφ` over the interior hat functions,
/// each normalized by `‖∇φ‖_{L^p}`; returns the maximum.
pub fn weak_residual(prob: &Problem, u: &ScalarField, z: &VectorField) -> Result<f64> {
    prob.check_boundary(u)?;
    let flux = limit_flux(prob, u, z)?;
    let g = &prob.grid;
    let a = g.cell_measure();
    let p = prob.params.p;
    let mut r = vec![0.0; g.num_nodes()];
    let mut norm = vec![0.0; g.num_nodes()];
    for (c, fc) in flux.values().iter().enumerate() {
        let st = g.stencil(c);
        for k in 0..st.len {
            r[st.nodes[k]] += a * fc.dot(st.coef[k]);
            norm[st.nodes[k]] += a * powf(st.coef[k].norm(), p);
        }
    }
    let mut worst = 0.0f64;
    for &node in prob.interior_nodes() {
        let rk = r[node] - prob.weights[node] * prob.f.values()[node];
        worst = worst.max(abs(rk) / powf(norm[node], 1.0 / p));
    }
    Ok(worst)
}
