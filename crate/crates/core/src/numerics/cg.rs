use num_complex::Complex;

use super::matrix::ComplexMatrix;
use super::vector::{axpy, dot, norm, norm_sqr};
use crate::error::{dims, Error, Result};
use crate::scalar::Real;

/// Result of a conjugate-gradient run.
#[derive(Clone, Debug)]
pub struct CgSolution<T: Real> {
    pub s: Vec<Complex<T>>,
    pub iters_used: usize,
    /// `||r_xi||_2` for xi = 0..=iters_used (recursive residuals).
    pub residual_history: Vec<T>,
}

/// Plain conjugate gradient for `R s = q`, started at `s0`.
///
/// Stops at the first iterate with `||q - R s|| <= tol ||q||` or after
/// `max_iters` iterations.
pub fn cg_solve<T: Real>(
    r: &ComplexMatrix<T>,
    q: &[Complex<T>],
    s0: &[Complex<T>],
    max_iters: usize,
    tol: T,
) -> Result<CgSolution<T>> {
    let n = r.rows();
    if !r.is_square() || q.len() != n || s0.len() != n {
        return Err(dims(format!(
            "CG needs square R matching q and s0 (R {}x{}, q {}, s0 {})",
            r.rows(),
            r.cols(),
            q.len(),
            s0.len()
        )));
    }
    let threshold = tol * norm(q);
    let mut s = s0.to_vec();
    let rs0 = r.mul_vec(&s);
    let mut res: Vec<Complex<T>> = q.iter().zip(&rs0).map(|(a, b)| a - b).collect();
    let mut p = res.clone();
    let mut rr = norm_sqr(&res);
    let mut history = vec![rr.sqrt()];
    let mut xi = 0;
    while xi < max_iters && rr.sqrt() > threshold {
        xi += 1;
        let rp = r.mul_vec(&p);
        let curvature = dot(&p, &rp).re;
        if !(curvature > T::zero()) {
            return Err(Error::Breakdown {
                iteration: xi,
                curvature: curvature.as_f64(),
            });
        }
        let tau = rr / curvature;
        axpy(Complex::new(tau, T::zero()), &p, &mut s);
        axpy(Complex::new(-tau, T::zero()), &rp, &mut res);
        let rr_new = norm_sqr(&res);
        let upsilon = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&res) {
            *pi = ri + *pi * upsilon;
        }
        rr = rr_new;
        history.push(rr.sqrt());
    }
    Ok(CgSolution {
        s,
        iters_used: xi,
        residual_history: history,
    })
}
