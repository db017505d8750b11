//! Scalar transcendental functions routed through `libm` so results are
//! bit-identical with and without `std`.

use num_complex::Complex64;

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn cabs(z: Complex64) -> f64 {
    libm::hypot(z.re, z.im)
}

#[inline]
pub(crate) fn carg(z: Complex64) -> f64 {
    libm::atan2(z.im, z.re)
}

#[inline]
pub(crate) fn is_finite_c(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}
