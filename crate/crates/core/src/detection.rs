//! Pieces shared by the two ADMM detector families: the projected bit-plane
//! update, relaxed consensus targets and the detector output record.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::numerics::vector;
use crate::scalar::Real;
use crate::sysmodel::Constellation;

/// Soft and hard decisions plus per-iteration bookkeeping.
#[derive(Clone, Debug)]
pub struct Detection<T: Real> {
    pub x_soft: Vec<Complex<T>>,
    pub x_hard: Vec<Complex<T>>,
    pub diagnostics: Diagnostics<T>,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics<T: Real> {
    /// `||x^i - (1/alpha) sum_q 2^{q-1} v_q^i||` after each iteration.
    pub consensus_residual: Vec<T>,
    /// CG iterations spent in each iteration (empty for closed-form x-updates).
    pub cg_iterations: Vec<usize>,
    /// Curvature weight `eps` used by each simplified x-update.
    pub eps_used: Vec<T>,
    /// Hermitian factorisations of `K x K` (or larger) systems performed.
    pub factorizations: usize,
    /// Initial (pre-iteration) consensus residual.
    pub initial_residual: T,
}

impl<T: Real> Diagnostics<T> {
    pub fn total_cg_iterations(&self) -> usize {
        self.cg_iterations.iter().sum()
    }
}

/// `mu 4^{q-1} - 2 alpha^2 beta_q` for zero-based plane index `plane`.
pub fn plane_denominator<T: Real>(penalty: T, weight: T, alpha: T, plane: usize) -> T {
    penalty * T::of_usize(1 << (2 * plane)) - T::of(2.0) * alpha * alpha * weight
}

pub(crate) fn check_denominators<T: Real>(penalty: T, weights: &[T], alpha: T) -> Result<()> {
    for (plane, &w) in weights.iter().enumerate() {
        let den = plane_denominator(penalty, w, alpha, plane);
        if !(den > T::zero()) || !(penalty > T::zero()) {
            return Err(Error::NonconvexDenominator {
                plane,
                value: den.as_f64(),
            });
        }
    }
    Ok(())
}

/// Clamps real and imaginary parts to `[-1, 1]`.
#[inline]
pub fn project_box<T: Real>(z: Complex<T>) -> Complex<T> {
    let one = T::one();
    Complex::new(z.re.max(-one).min(one), z.im.max(-one).min(one))
}

/// Gauss-Seidel sweep of the projected closed-form bit-plane update:
/// `v_q = P_B{ 2^{q-1} mu eta_q / (mu 4^{q-1} - 2 alpha^2 beta_q) }`, with
/// `eta_q = alpha (x + lambda) - sum_{p != q} 2^{p-1} v_p` using the newest
/// values of the other planes.
pub fn bit_plane_sweep<T: Real>(
    planes: &mut [Vec<Complex<T>>],
    x_ref: &[Complex<T>],
    dual: &[Complex<T>],
    penalty: T,
    weights: &[T],
    c: &Constellation<T>,
) -> Result<()> {
    let alpha = c.alpha();
    check_denominators(penalty, weights, alpha)?;
    let k = x_ref.len();
    let qn = planes.len();
    for q in 0..qn {
        let den = plane_denominator(penalty, weights[q], alpha, q);
        let gain = T::of_usize(1 << q) * penalty / den;
        for i in 0..k {
            let mut eta = (x_ref[i] + dual[i]) * alpha;
            for (p, plane) in planes.iter().enumerate() {
                if p != q {
                    eta -= plane[i] * T::of_usize(1 << p);
                }
            }
            planes[q][i] = project_box(eta * gain);
        }
    }
    Ok(())
}

/// Consensus target `(relax/alpha) sum 2^{q-1} v_q + (1 - relax) x_prev`.
pub fn relaxed_target<T: Real>(
    c: &Constellation<T>,
    planes: &[Vec<Complex<T>>],
    relax: T,
    x_prev: &[Complex<T>],
) -> Vec<Complex<T>> {
    let mut z = c.combine(planes, relax);
    if relax != T::one() {
        for (zi, xi) in z.iter_mut().zip(x_prev) {
            *zi += xi * (T::one() - relax);
        }
    }
    z
}

/// `||x - (1/alpha) sum 2^{q-1} v_q||`.
pub fn consensus_residual<T: Real>(
    c: &Constellation<T>,
    planes: &[Vec<Complex<T>>],
    x: &[Complex<T>],
) -> T {
    vector::distance(x, &c.combine(planes, T::one()))
}
