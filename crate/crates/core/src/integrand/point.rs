use core::ops::{Add, Mul, Neg, Sub};

use crate::error::invalid;
use crate::math::sqrt;
use crate::Result;

/// A vector in ℝⁿ, `n ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    c: [f64; 2],
    dim: u8,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        match coords {
            [a] if a.is_finite() => Ok(Self::d1(*a)),
            [a, b] if a.is_finite() && b.is_finite() => Ok(Self::d2(*a, *b)),
            [_] | [_, _] => Err(invalid!("point coordinates must be finite")),
            _ => Err(invalid!("points have 1 or 2 coordinates (got {})", coords.len())),
        }
    }

    #[inline]
    pub const fn d1(x: f64) -> Self {
        Self { c: [x, 0.0], dim: 1 }
    }

    #[inline]
    pub const fn d2(x: f64, y: f64) -> Self {
        Self { c: [x, y], dim: 2 }
    }

    #[inline]
    pub fn zero(dim: usize) -> Self {
        debug_assert!(dim == 1 || dim == 2);
        Self {
            c: [0.0; 2],
            dim: dim as u8,
        }
    }

    /// Unit vector along axis `i`.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut z = Self::zero(dim);
        z.c[i] = 1.0;
        z
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.c[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: f64) {
        debug_assert!(i < self.dim as usize);
        self.c[i] = v;
    }

    /// Unused trailing coordinate is kept at zero, so the 2-sums are exact
    /// for `n = 1`.
    #[inline]
    pub fn dot(&self, o: Point) -> f64 {
        self.c[0] * o.c[0] + self.c[1] * o.c[1]
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(*self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        if self.dim == 1 {
            self.c[0].abs()
        } else {
            sqrt(self.norm_sq())
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c[0].is_finite() && self.c[1].is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point {
            c: [self.c[0] + o.c[0], self.c[1] + o.c[1]],
            dim: self.dim,
        }
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point {
            c: [self.c[0] - o.c[0], self.c[1] - o.c[1]],
            dim: self.dim,
        }
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point {
            c: [self.c[0] * s, self.c[1] * s],
            dim: self.dim,
        }
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        self * -1.0
    }
}

/// Symmetric `n×n` matrix, `n ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    /// `[a11, a12, a22]`; `a12 = a22 = 0` when `n = 1`.
    a: [f64; 3],
    dim: u8,
}

impl Sym2 {
    pub fn identity(dim: usize) -> Self {
        Self {
            a: [1.0, 0.0, if dim == 2 { 1.0 } else { 0.0 }],
            dim: dim as u8,
        }
    }

    /// `zzᵀ`.
    #[inline]
    pub fn outer(z: Point) -> Self {
        Self {
            a: [z.c[0] * z.c[0], z.c[0] * z.c[1], z.c[1] * z.c[1]],
            dim: z.dim,
        }
    }

    /// `|z|²I − zzᵀ`, formed without cancellation.
    #[inline]
    pub fn perp(z: Point) -> Self {
        if z.dim == 1 {
            return Self {
                a: [0.0; 3],
                dim: 1,
            };
        }
        Self {
            a: [z.c[1] * z.c[1], -z.c[0] * z.c[1], z.c[0] * z.c[0]],
            dim: 2,
        }
    }

    pub fn from_entries(dim: usize, a11: f64, a12: f64, a22: f64) -> Self {
        Self {
            a: [a11, a12, a22],
            dim: dim as u8,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.a[0],
            (0, 1) | (1, 0) => self.a[1],
            (1, 1) => self.a[2],
            _ => panic!("index out of range"),
        }
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        Self {
            a: [self.a[0] * s, self.a[1] * s, self.a[2] * s],
            dim: self.dim,
        }
    }

    #[inline]
    pub fn apply(&self, z: Point) -> Point {
        Point {
            c: [
                self.a[0] * z.c[0] + self.a[1] * z.c[1],
                self.a[1] * z.c[0] + self.a[2] * z.c[1],
            ],
            dim: z.dim,
        }
    }

    /// `⟨A ζ | ω⟩`.
    #[inline]
    pub fn form(&self, zeta: Point, omega: Point) -> f64 {
        self.apply(zeta).dot(omega)
    }

    /// Eigenvalues in ascending order (one value when `n = 1`).
    pub fn eigenvalues(&self) -> [f64; 2] {
        if self.dim == 1 {
            return [self.a[0], self.a[0]];
        }
        let m = 0.5 * (self.a[0] + self.a[2]);
        let d = 0.5 * (self.a[0] - self.a[2]);
        let r = sqrt(d * d + self.a[1] * self.a[1]);
        let hi = m + r;
        // The smaller root from the determinant avoids cancellation.
        let lo = if m > 0.0 {
            (self.a[0] * self.a[2] - self.a[1] * self.a[1]) / hi
        } else {
            m - r
        };
        [lo, hi]
    }

    /// Positive definiteness via Cholesky pivots.
    pub fn is_positive_definite(&self) -> bool {
        if !(self.a[0] > 0.0) {
            return false;
        }
        self.dim == 1 || self.a[2] - self.a[1] * self.a[1] / self.a[0] > 0.0
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    #[inline]
    fn add(self, o: Sym2) -> Sym2 {
        Sym2 {
            a: [self.a[0] + o.a[0], self.a[1] + o.a[1], self.a[2] + o.a[2]],
            dim: self.dim,
        }
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    #[inline]
    fn sub(self, o: Sym2) -> Sym2 {
        self + o.scale(-1.0)
    }
}
