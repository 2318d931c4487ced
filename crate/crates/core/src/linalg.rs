//! Sparse symmetric linear algebra for Newton steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Zero matrix with the given sparsity pattern; each row's columns are
    /// sorted and deduplicated.
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        Self {
            n,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Storage slot of entry `(i, j)`, if it is in the pattern.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.cols[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.vals[s])
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    /// `Σ_j |a_ij|` per row.
    pub fn row_abs_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.vals[self.row_ptr[i]..self.row_ptr[i + 1]].iter().map(|v| v.abs()).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Main, sub and super diagonals, when the matrix is tridiagonal.
    pub fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let mut d = vec![0.0; n];
        let mut lo = vec![0.0; n.saturating_sub(1)];
        let mut up = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = self.vals[k];
                if j == i {
                    d[i] = v;
                } else if j + 1 == i {
                    lo[j] = v;
                } else if j == i + 1 {
                    up[i] = v;
                } else if v != 0.0 {
                    return None;
                }
            }
        }
        Some((d, lo, up))
    }
}

/// Solves a tridiagonal system by elimination without pivoting (stable for
/// symmetric positive definite and diagonally dominant matrices).
/// `lower[i]` is entry `(i+1, i)`, `upper[i]` is entry `(i, i+1)`.
pub fn solve_tridiagonal(diag: &[f64], lower: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut piv = diag[0];
    if !(piv.abs() > 0.0) {
        return None;
    }
    x[0] = rhs[0] / piv;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / piv;
        piv = diag[i] - lower[i - 1] * c[i - 1];
        if !(piv.abs() > 0.0) || !piv.is_finite() {
            return None;
        }
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

/// Preconditioner for [`pcg`].
#[derive(Debug, Clone)]
pub enum Preconditioner {
    Jacobi(Vec<f64>),
    /// Zero fill-in incomplete Cholesky factor stored row-wise (lower part,
    /// diagonal last in each row).
    IncompleteCholesky(Csr),
}

impl Preconditioner {
    pub fn jacobi(a: &Csr) -> Self {
        let inv = a
            .diagonal()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Preconditioner::Jacobi(inv)
    }

    /// IC(0) on the pattern of `a`; retries with a growing diagonal shift
    /// when a pivot is not positive, and falls back to Jacobi.
    pub fn incomplete_cholesky(a: &Csr) -> Self {
        let mut shift = 0.0;
        for _ in 0..8 {
            if let Some(l) = ic0(a, shift) {
                return Preconditioner::IncompleteCholesky(l);
            }
            shift = if shift == 0.0 { 1e-3 } else { shift * 10.0 };
        }
        Self::jacobi(a)
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Jacobi(inv) => {
                for i in 0..r.len() {
                    z[i] = inv[i] * r[i];
                }
            }
            Preconditioner::IncompleteCholesky(l) => {
                let n = l.n;
                // L y = r
                for i in 0..n {
                    let (lo, hi) = (l.row_ptr[i], l.row_ptr[i + 1]);
                    let mut s = r[i];
                    for k in lo..hi - 1 {
                        s -= l.vals[k] * z[l.cols[k]];
                    }
                    z[i] = s / l.vals[hi - 1];
                }
                // Lᵀ x = y, column-oriented sweep.
                for i in (0..n).rev() {
                    let (lo, hi) = (l.row_ptr[i], l.row_ptr[i + 1]);
                    z[i] /= l.vals[hi - 1];
                    let zi = z[i];
                    for k in lo..hi - 1 {
                        z[l.cols[k]] -= l.vals[k] * zi;
                    }
                }
            }
        }
    }
}

fn ic0(a: &Csr, shift: f64) -> Option<Csr> {
    let n = a.n;
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        rows.push(
            a.cols[a.row_ptr[i]..a.row_ptr[i + 1]]
                .iter()
                .copied()
                .filter(|&j| j <= i)
                .collect(),
        );
    }
    let mut l = Csr::from_pattern(rows);
    for i in 0..n {
        for k in l.row_ptr[i]..l.row_ptr[i + 1] {
            let j = l.cols[k];
            let mut v = a.get(i, j);
            if i == j {
                v *= 1.0 + shift;
            }
            l.vals[k] = v;
        }
    }
    for i in 0..n {
        let (lo, hi) = (l.row_ptr[i], l.row_ptr[i + 1]);
        for k in lo..hi {
            let j = l.cols[k];
            // l_ij -= Σ_{m<j} l_im l_jm over the shared pattern.
            let (jlo, jhi) = (l.row_ptr[j], l.row_ptr[j + 1]);
            let (mut a1, mut b1) = (lo, jlo);
            let mut s = l.vals[k];
            while a1 < k && b1 < jhi - 1 {
                let (ca, cb) = (l.cols[a1], l.cols[b1]);
                if ca == cb {
                    s -= l.vals[a1] * l.vals[b1];
                    a1 += 1;
                    b1 += 1;
                } else if ca < cb {
                    a1 += 1;
                } else {
                    b1 += 1;
                }
            }
            if j == i {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l.vals[k] = sqrt(s);
            } else {
                l.vals[k] = s / l.vals[jhi - 1];
            }
        }
    }
    Some(l)
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for SPD `a`, starting from `x`.
/// Stops when `‖b − a x‖ ≤ tol·‖b‖`.
pub fn pcg(a: &Csr, b: &[f64], x: &mut [f64], m: &Preconditioner, tol: f64, max_iter: usize) -> CgOutcome {
    let n = a.n;
    let bnorm = sqrt(b.iter().map(|v| v * v).sum::<f64>());
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut rnorm = sqrt(r.iter().map(|v| v * v).sum::<f64>());
    let mut it = 0;
    while rnorm > tol * bnorm && it < max_iter {
        a.mul_vec(&p, &mut q);
        let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        m.apply(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = sqrt(r.iter().map(|v| v * v).sum::<f64>());
        it += 1;
    }
    CgOutcome {
        iterations: it,
        relative_residual: rnorm / bnorm,
        converged: rnorm <= tol * bnorm,
    }
}
