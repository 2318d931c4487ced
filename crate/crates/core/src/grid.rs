//! Uniform grids on boxes in one and two dimensions.
//!
//! Nodes carry `u` and `f`; cells carry `∇u` and `Z`. In 1D a cell is an
//! interval `[x_i, x_{i+1}]`. In 2D every square is split along its
//! anti-diagonal into a lower triangle `(00, 10, 01)` and an upper triangle
//! `(11, 01, 10)`, so cellwise gradients are P1 gradients: exact on affine
//! functions and forming, with [`divergence`], an exact adjoint pair under
//! the lumped nodal weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, precondition};
use crate::integrand::Point;
use crate::math::{abs, powf};
use crate::{Error, Result};

/// Uniform grid over the box `origin + [0, side]^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    origin: [f64; 2],
    side: f64,
}

/// Nodes of a cell and the gradient weight of each node.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub nodes: [usize; 3],
    pub coef: [Point; 3],
    pub len: usize,
}

impl Stencil {
    #[inline]
    pub fn gradient(&self, u: &[f64]) -> Point {
        let mut g = self.coef[0] * u[self.nodes[0]];
        for k in 1..self.len {
            g = g + self.coef[k] * u[self.nodes[k]];
        }
        g
    }
}

impl Grid {
    pub fn new(dim: usize, cells_per_axis: usize, origin: [f64; 2], side: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid!("grid dimension must be 1 or 2 (got {dim})"));
        }
        if cells_per_axis < 4 {
            return Err(invalid!("need at least 4 cells per axis (got {cells_per_axis})"));
        }
        if !(side > 0.0 && side.is_finite()) || !origin.iter().all(|o| o.is_finite()) {
            return Err(invalid!("grid side must be positive and finite (got {side})"));
        }
        Ok(Self {
            dim,
            n: cells_per_axis,
            origin,
            side,
        })
    }

    /// `[0, 1]^dim` with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, [0.0, 0.0], 1.0)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    #[inline]
    pub fn side(&self) -> f64 {
        self.side
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    #[inline]
    pub fn nodes_per_axis(&self) -> usize {
        self.n + 1
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        if self.dim == 1 {
            self.n + 1
        } else {
            (self.n + 1) * (self.n + 1)
        }
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            2 * self.n * self.n
        }
    }

    #[inline]
    pub fn cell_measure(&self) -> f64 {
        let h = self.spacing();
        if self.dim == 1 {
            h
        } else {
            0.5 * h * h
        }
    }

    /// Measure of the whole box.
    pub fn domain_measure(&self) -> f64 {
        if self.dim == 1 {
            self.side
        } else {
            self.side * self.side
        }
    }

    /// Axis indices `(i, j)` of a node (`j = 0` in 1D).
    #[inline]
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        if self.dim == 1 {
            (node, 0)
        } else {
            (node % (self.n + 1), node / (self.n + 1))
        }
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            j * (self.n + 1) + i
        }
    }

    pub fn node_point(&self, node: usize) -> Point {
        let h = self.spacing();
        let (i, j) = self.node_ij(node);
        if self.dim == 1 {
            Point::d1(self.origin[0] + i as f64 * h)
        } else {
            Point::d2(self.origin[0] + i as f64 * h, self.origin[1] + j as f64 * h)
        }
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let (i, j) = self.node_ij(node);
        if self.dim == 1 {
            i == 0 || i == self.n
        } else {
            i == 0 || j == 0 || i == self.n || j == self.n
        }
    }

    /// Centroid of a cell.
    pub fn cell_center(&self, cell: usize) -> Point {
        let h = self.spacing();
        if self.dim == 1 {
            return Point::d1(self.origin[0] + (cell as f64 + 0.5) * h);
        }
        let sq = cell / 2;
        let (i, j) = ((sq % self.n) as f64, (sq / self.n) as f64);
        let off = if cell % 2 == 0 { 1.0 / 3.0 } else { 2.0 / 3.0 };
        Point::d2(self.origin[0] + (i + off) * h, self.origin[1] + (j + off) * h)
    }

    pub fn stencil(&self, cell: usize) -> Stencil {
        let ih = 1.0 / self.spacing();
        if self.dim == 1 {
            return Stencil {
                nodes: [cell, cell + 1, 0],
                coef: [Point::d1(-ih), Point::d1(ih), Point::d1(0.0)],
                len: 2,
            };
        }
        let sq = cell / 2;
        let (i, j) = (sq % self.n, sq / self.n);
        let n00 = self.node_index(i, j);
        let n10 = self.node_index(i + 1, j);
        let n01 = self.node_index(i, j + 1);
        let n11 = self.node_index(i + 1, j + 1);
        if cell % 2 == 0 {
            Stencil {
                nodes: [n00, n10, n01],
                coef: [Point::d2(-ih, -ih), Point::d2(ih, 0.0), Point::d2(0.0, ih)],
                len: 3,
            }
        } else {
            Stencil {
                nodes: [n11, n01, n10],
                coef: [Point::d2(ih, ih), Point::d2(-ih, 0.0), Point::d2(0.0, -ih)],
                len: 3,
            }
        }
    }

    /// Lumped nodal quadrature weight (trapezoid rule in 1D, one third of
    /// each adjacent triangle in 2D).
    pub fn node_weight(&self, node: usize) -> f64 {
        let h = self.spacing();
        let (i, j) = self.node_ij(node);
        if self.dim == 1 {
            return if i == 0 || i == self.n { 0.5 * h } else { h };
        }
        let n = self.n as isize;
        let (i, j) = (i as isize, j as isize);
        let ok = |a: isize, b: isize| (0..n).contains(&a) && (0..n).contains(&b);
        let count = [
            ok(i, j),
            ok(i - 1, j),
            ok(i, j - 1),
            ok(i - 1, j - 1),
            ok(i, j - 1),
            ok(i - 1, j),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        count as f64 * h * h / 6.0
    }

    pub fn node_weights(&self) -> Vec<f64> {
        (0..self.num_nodes()).map(|k| self.node_weight(k)).collect()
    }

    /// Interior node indices in increasing order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&k| !self.is_boundary(k)).collect()
    }

    /// Whether the closed ball lies inside the closed box.
    pub fn contains_ball(&self, center: Point, radius: f64) -> bool {
        (0..self.dim).all(|d| {
            let c = center.get(d);
            c - radius >= self.origin[d] - 1e-12 && c + radius <= self.origin[d] + self.side + 1e-12
        })
    }

    /// Center of the box.
    pub fn center(&self) -> Point {
        let half = 0.5 * self.side;
        if self.dim == 1 {
            Point::d1(self.origin[0] + half)
        } else {
            Point::d2(self.origin[0] + half, self.origin[1] + half)
        }
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(alloc::format!(
                "{}D/{} cells vs {}D/{} cells",
                self.dim,
                self.n,
                other.dim,
                other.n
            )))
        }
    }
}

/// Where the samples of a [`ScalarField`] live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Nodes,
    Cells,
}

/// Scalar samples at nodes or cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    location: Location,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, location: Location, values: Vec<f64>) -> Result<Self> {
        let expect = match location {
            Location::Nodes => grid.num_nodes(),
            Location::Cells => grid.num_cells(),
        };
        if values.len() != expect {
            return Err(Error::GridMismatch(alloc::format!(
                "expected {expect} samples, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("sample {k} is not finite")));
        }
        Ok(Self {
            grid,
            location,
            values,
        })
    }

    pub fn nodes(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, Location::Nodes, values)
    }

    pub fn cells(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, Location::Cells, values)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            location: Location::Nodes,
            values: vec![0.0; grid.num_nodes()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            location: Location::Nodes,
            values: vec![c; grid.num_nodes()],
        }
    }

    /// Samples `f` at the nodes.
    pub fn from_fn<F: Fn(Point) -> f64>(grid: Grid, f: F) -> Result<Self> {
        let values = (0..grid.num_nodes()).map(|k| f(grid.node_point(k))).collect();
        Self::nodes(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn location(&self) -> Location {
        self.location
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; callers keep the samples finite.
    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value of the field on a cell: the cell sample, or the vertex mean.
    #[inline]
    pub fn cell_value(&self, cell: usize) -> f64 {
        match self.location {
            Location::Cells => self.values[cell],
            Location::Nodes => {
                let s = self.grid.stencil(cell);
                let sum: f64 = s.nodes[..s.len].iter().map(|&k| self.values[k]).sum();
                sum / s.len as f64
            }
        }
    }

    /// Cell-averaged copy.
    pub fn to_cells(&self) -> ScalarField {
        let values = (0..self.grid.num_cells()).map(|c| self.cell_value(c)).collect();
        ScalarField {
            grid: self.grid,
            location: Location::Cells,
            values,
        }
    }

    /// Pointwise map preserving location.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            grid: self.grid,
            location: self.location,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Result<ScalarField> {
        self.grid.ensure_same(&other.grid)?;
        if self.location != other.location {
            return Err(Error::GridMismatch("node field vs cell field".into()));
        }
        Ok(ScalarField {
            grid: self.grid,
            location: self.location,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    /// Maximum absolute sample.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(abs(*v)))
    }
}

/// Cellwise vector samples.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<Point>,
}

impl VectorField {
    pub fn new(grid: Grid, values: Vec<Point>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::GridMismatch(alloc::format!(
                "expected {} cell vectors, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        if values.iter().any(|v| v.dim() != grid.dim()) {
            return Err(Error::GridMismatch("vector dimension differs from grid".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("cell vector {k} is not finite")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, v: Point) -> Result<Self> {
        Self::new(grid, vec![v; grid.num_cells()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![Point::zero(grid.dim()); grid.num_cells()],
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[Point] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [Point] {
        &mut self.values
    }

    /// Cellwise Euclidean norms.
    pub fn magnitude(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            location: Location::Cells,
            values: self.values.iter().map(|v| v.norm()).collect(),
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.grid.ensure_same(&other.grid)?;
        Ok(VectorField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a - *b)
                .collect(),
        })
    }
}

/// Closed ball `B_R(center)` with optional shrink factor `θ` for the inner
/// ball `B_{θR}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallRegion {
    pub center: Point,
    pub radius: f64,
    pub theta: Option<f64>,
}

impl BallRegion {
    pub fn new(center: Point, radius: f64, theta: Option<f64>) -> Result<Self> {
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(invalid!("ball radius must lie in (0, 1] (got {radius})"));
        }
        if let Some(t) = theta {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid!("shrink factor theta must lie in (0, 1) (got {t})"));
            }
        }
        Ok(Self {
            center,
            radius,
            theta,
        })
    }

    /// Ball centered in the box with `R = 0.4·side` (capped at 1) and
    /// `θ = 1/2`.
    pub fn centered(grid: &Grid) -> Self {
        Self {
            center: grid.center(),
            radius: (0.4 * grid.side()).min(1.0),
            theta: Some(0.5),
        }
    }

    /// Same center, radius `r`.
    pub fn with_radius(&self, r: f64) -> Self {
        Self {
            center: self.center,
            radius: r,
            theta: self.theta,
        }
    }

    /// `B_{θR}`; the ball itself when no `θ` is set.
    pub fn inner(&self) -> Self {
        let t = self.theta.unwrap_or(1.0);
        Self {
            center: self.center,
            radius: t * self.radius,
            theta: None,
        }
    }

    #[inline]
    pub fn contains(&self, x: Point) -> bool {
        (x - self.center).norm() <= self.radius
    }

    /// Errors unless the closed ball lies in the grid's box.
    pub fn ensure_inside(&self, grid: &Grid) -> Result<()> {
        if self.center.dim() != grid.dim() {
            return Err(Error::GridMismatch("ball center dimension differs from grid".into()));
        }
        if grid.contains_ball(self.center, self.radius) {
            Ok(())
        } else {
            Err(precondition!(
                "closed ball of radius {} leaves the domain",
                self.radius
            ))
        }
    }
}

/// Cell mask of a region; every cell when `region` is `None`.
pub fn cell_mask(grid: &Grid, region: Option<&BallRegion>) -> Vec<bool> {
    match region {
        None => vec![true; grid.num_cells()],
        Some(b) => (0..grid.num_cells())
            .map(|c| b.contains(grid.cell_center(c)))
            .collect(),
    }
}

fn selected(grid: &Grid, region: Option<&BallRegion>) -> Result<Vec<usize>> {
    let cells: Vec<usize> = cell_mask(grid, region)
        .iter()
        .enumerate()
        .filter_map(|(c, &m)| m.then_some(c))
        .collect();
    if cells.is_empty() {
        Err(Error::EmptyRegion)
    } else {
        Ok(cells)
    }
}

/// Cell gradients of a node field.
pub fn gradient(u: &ScalarField) -> Result<VectorField> {
    if u.location != Location::Nodes {
        return Err(Error::GridMismatch("gradient needs a node field".into()));
    }
    let g = u.grid;
    let values = (0..g.num_cells())
        .map(|c| g.stencil(c).gradient(&u.values))
        .collect();
    Ok(VectorField { grid: g, values })
}

/// Negative adjoint of [`gradient`] under cell measures and lumped nodal
/// weights: `Σ_c |c| ⟨V_c, ∇φ_c⟩ = -Σ_i m_i (div V)_i φ_i` for `φ` vanishing
/// on the boundary.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let a = g.cell_measure();
    let mut acc = vec![0.0; g.num_nodes()];
    for (c, vc) in v.values.iter().enumerate() {
        let s = g.stencil(c);
        for k in 0..s.len {
            acc[s.nodes[k]] += a * vc.dot(s.coef[k]);
        }
    }
    for (k, x) in acc.iter_mut().enumerate() {
        *x = -*x / g.node_weight(k);
    }
    ScalarField {
        grid: g,
        location: Location::Nodes,
        values: acc,
    }
}

/// `∫ g` over the cells whose centers lie in `region`.
pub fn integrate(g: &ScalarField, region: Option<&BallRegion>) -> Result<f64> {
    let cells = selected(&g.grid, region)?;
    let a = g.grid.cell_measure();
    Ok(cells.iter().map(|&c| a * g.cell_value(c)).sum())
}

/// Measure of the cells selected by `region`.
pub fn region_measure(grid: &Grid, region: Option<&BallRegion>) -> Result<f64> {
    Ok(selected(grid, region)?.len() as f64 * grid.cell_measure())
}

/// `L^p` norm with `p ∈ [1, ∞]`. Node fields are integrated as cell means
/// of `|g|^p`. The integrand is scaled by its maximum, so large `p` does not
/// overflow.
pub fn lp_norm(g: &ScalarField, p: f64, region: Option<&BallRegion>) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid!("norm exponent must satisfy p >= 1 (got {p})"));
    }
    lp_quasi_norm(g, p, region)
}

/// `(∫|g|^p)^{1/p}` for any `p > 0`; a quasi-norm below one.
pub(crate) fn lp_quasi_norm(g: &ScalarField, p: f64, region: Option<&BallRegion>) -> Result<f64> {
    if !(p > 0.0) {
        return Err(invalid!("norm exponent must be positive (got {p})"));
    }
    let cells = selected(&g.grid, region)?;
    let cell_pow = |c: usize, m: f64| -> f64 {
        match g.location {
            Location::Cells => powf(abs(g.values[c]) / m, p),
            Location::Nodes => {
                let s = g.grid.stencil(c);
                let sum: f64 = s.nodes[..s.len]
                    .iter()
                    .map(|&k| powf(abs(g.values[k]) / m, p))
                    .sum();
                sum / s.len as f64
            }
        }
    };
    let sup = cells.iter().fold(0.0f64, |m, &c| match g.location {
        Location::Cells => m.max(abs(g.values[c])),
        Location::Nodes => {
            let s = g.grid.stencil(c);
            s.nodes[..s.len].iter().fold(m, |m, &k| m.max(abs(g.values[k])))
        }
    });
    norm_from(p, sup, &cells, g.grid.cell_measure(), cell_pow)
}

fn norm_from<F: Fn(usize, f64) -> f64>(
    p: f64,
    sup: f64,
    cells: &[usize],
    a: f64,
    cell_pow: F,
) -> Result<f64> {
    if p == f64::INFINITY || sup == 0.0 {
        return Ok(sup);
    }
    let s: f64 = cells.iter().map(|&c| a * cell_pow(c, sup)).sum();
    Ok(sup * powf(s, 1.0 / p))
}

/// `max |g|` over the region.
pub fn sup_norm(g: &ScalarField, region: Option<&BallRegion>) -> Result<f64> {
    lp_norm(g, f64::INFINITY, region)
}

/// `L^p` norm of the cellwise magnitude of `v`.
pub fn vector_lp_norm(v: &VectorField, p: f64, region: Option<&BallRegion>) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid!("norm exponent must satisfy p >= 1 (got {p})"));
    }
    let cells = selected(&v.grid, region)?;
    let sup = cells.iter().fold(0.0f64, |m, &c| m.max(v.values[c].norm()));
    norm_from(p, sup, &cells, v.grid.cell_measure(), |c, m| {
        powf(v.values[c].norm() / m, p)
    })
}

pub fn vector_sup_norm(v: &VectorField, region: Option<&BallRegion>) -> Result<f64> {
    vector_lp_norm(v, f64::INFINITY, region)
}
