use num_complex::Complex;

use super::matrix::ComplexMatrix;
use super::vector::{dot, norm};
use crate::scalar::Real;

pub const POWER_ITERATIONS: usize = 50;
pub const SAFETY_FACTOR: f64 = 1.01;

/// Upper bound on `lambda_max` of a Hermitian PSD matrix: Rayleigh quotient
/// after [`POWER_ITERATIONS`] power steps, inflated by [`SAFETY_FACTOR`].
pub fn spectral_upper_bound<T: Real>(c: &ComplexMatrix<T>) -> T {
    let n = c.rows();
    if n == 0 {
        return T::zero();
    }
    // Deterministic start with a component along every coordinate.
    let mut v: Vec<Complex<T>> = (0..n)
        .map(|i| {
            Complex::new(
                T::one() + T::of_usize(i) / T::of_usize(n),
                T::of(0.1) * T::of_usize(i % 3),
            )
        })
        .collect();
    let mut rayleigh = T::zero();
    for _ in 0..POWER_ITERATIONS {
        let nv = norm(&v);
        if nv == T::zero() {
            break;
        }
        for z in v.iter_mut() {
            *z /= nv;
        }
        let cv = c.mul_vec(&v);
        rayleigh = dot(&v, &cv).re;
        v = cv;
    }
    rayleigh.max(T::zero()) * T::of(SAFETY_FACTOR)
}
