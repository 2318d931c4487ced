//! Float shims that resolve to `std` when available and to `libm` otherwise.

use num_traits::Float;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}

#[inline]
pub fn powf(x: f64, e: f64) -> f64 {
    Float::powf(x, e)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    Float::abs(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    Float::ln(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    Float::ln_1p(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    Float::exp(x)
}

#[inline]
pub fn exp_m1(x: f64) -> f64 {
    Float::exp_m1(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    Float::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    Float::cos(x)
}

/// `(1+x)^e - 1` without cancellation for small `x`.
#[inline]
pub fn pow1p_m1(x: f64, e: f64) -> f64 {
    exp_m1(e * ln_1p(x))
}

/// Sign with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
