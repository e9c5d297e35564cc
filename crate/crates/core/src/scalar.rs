//! Scalar abstraction shared by every solver.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Complex amplitude type used for reflection coefficients.
pub type Complex<T> = nalgebra::Complex<T>;

/// Floating-point scalar the numerics are generic over (`f32` or `f64`).
///
/// The associated tolerances scale the self-verifying postconditions
/// (Lyapunov residual, uncertainty bound) to the precision of the type.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Relative Frobenius residual accepted from the Lyapunov solver.
    const LYAPUNOV_RTOL: Self;
    /// Slack allowed below 1/2 on symplectic eigenvalues.
    const UNCERTAINTY_SLACK: Self;
}

impl Real for f64 {
    const LYAPUNOV_RTOL: f64 = 1e-10;
    const UNCERTAINTY_SLACK: f64 = 1e-9;
}

impl Real for f32 {
    const LYAPUNOV_RTOL: f32 = 1e-4;
    const UNCERTAINTY_SLACK: f32 = 1e-4;
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn angular<T: Real>(nu: T) -> T {
    nu * T::two_pi()
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn ordinary<T: Real>(omega: T) -> T {
    omega / T::two_pi()
}

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn norm_sqr<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// `e^{i phi}`.
#[inline]
pub(crate) fn cis<T: Real>(phi: T) -> Complex<T> {
    Complex::new(phi.cos(), phi.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angular_round_trip_within_one_ulp() {
        for nu in [1.0_f64, 764e3, 5.343e9, 0.37, 2460e3] {
            let back = ordinary(angular(nu));
            assert!((back - nu).abs() <= f64::EPSILON * nu);
        }
    }

    #[test]
    fn literals_convert_for_both_precisions() {
        let a: f32 = lit(0.5);
        let b: f64 = lit(0.5);
        assert_eq!(a, 0.5);
        assert_eq!(b, 0.5);
    }
}
