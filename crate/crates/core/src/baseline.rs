//! Reference detectors: linear MMSE with and without CSI-error awareness,
//! exhaustive mismatched ML, and exhaustive robust ML.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{dims, Error, Result};
use crate::numerics::{ComplexMatrix, HermitianFactor};
use crate::scalar::{czero, Real};
use crate::sysmodel::Constellation;

/// Largest alphabet product the mismatched ML search accepts.
pub const MISMATCHED_ML_LIMIT: u128 = 1_000_000;
/// Largest alphabet product the robust ML search accepts.
pub const ROBUST_ML_LIMIT: u128 = 100_000;

/// One received data symbol vector with its label.
#[derive(Clone, Debug)]
pub struct TransmissionInstance<T: Real> {
    pub y: Vec<Complex<T>>,
    pub x_true: Vec<Complex<T>>,
    pub sigma2: T,
}

/// `H_hat^H (H_hat H_hat^H + Sigma_H + s2 I)^{-1} y`.
pub fn robust_mmse<T: Real>(
    y: &[Complex<T>],
    h_hat: &ComplexMatrix<T>,
    sigma_row: &ComplexMatrix<T>,
    sigma2: T,
) -> Result<Vec<Complex<T>>> {
    let m = h_hat.rows();
    if y.len() != m || sigma_row.rows() != m || sigma_row.cols() != m {
        return Err(dims("MMSE inputs disagree on the antenna count"));
    }
    let mut a = &h_hat.matmul(&h_hat.adjoint()) + sigma_row;
    a.add_to_diagonal(sigma2);
    a.symmetrize();
    let u = HermitianFactor::new(&a)?.solve_vec(y)?;
    Ok(h_hat.adjoint_mul_vec(&u))
}

/// `H_hat^H (H_hat H_hat^H + s2 I)^{-1} y`.
pub fn mismatched_mmse<T: Real>(
    y: &[Complex<T>],
    h_hat: &ComplexMatrix<T>,
    sigma2: T,
) -> Result<Vec<Complex<T>>> {
    robust_mmse(
        y,
        h_hat,
        &ComplexMatrix::zeros(h_hat.rows(), h_hat.rows()),
        sigma2,
    )
}

fn search_size(points: usize, k: usize, limit: u128) -> Result<u128> {
    let mut total: u128 = 1;
    for _ in 0..k {
        total = total.saturating_mul(points as u128);
        if total > limit {
            return Err(Error::SearchSpaceTooLarge(total));
        }
    }
    Ok(total)
}

/// Decodes a candidate index; user 0 is the most significant digit.
fn candidate<T: Real>(points: &[Complex<T>], k: usize, mut idx: u128, out: &mut [Complex<T>]) {
    let base = points.len() as u128;
    for slot in out[..k].iter_mut().rev() {
        *slot = points[(idx % base) as usize];
        idx /= base;
    }
}

/// Parallel arg-min over `0..total`, deterministic on ties (lowest index).
fn exhaustive_argmin<T, F>(
    points: &[Complex<T>],
    k: usize,
    total: u128,
    cost: F,
) -> Result<Vec<Complex<T>>>
where
    T: Real,
    F: Fn(&[Complex<T>]) -> Result<T> + Sync,
{
    const CHUNK: u128 = 4096;
    let chunks = total.div_ceil(CHUNK) as u64;
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Option<(T, u128)>> {
            let mut x = vec![czero(); k];
            let mut best: Option<(T, u128)> = None;
            let lo = c as u128 * CHUNK;
            for idx in lo..(lo + CHUNK).min(total) {
                candidate(points, k, idx, &mut x);
                let v = cost(&x)?;
                if best.is_none_or(|(b, _)| v < b) {
                    best = Some((v, idx));
                }
            }
            Ok(best)
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(a), Some(b)) => Some(if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    }),
                    (a, None) => a,
                    (None, b) => b,
                })
            },
        )?;
    let (_, idx) = best.ok_or(Error::EmptyBatch)?;
    let mut x = vec![czero(); k];
    candidate(points, k, idx, &mut x);
    Ok(x)
}

/// `argmin_x ||y - H_hat x||^2` over the full alphabet product.
pub fn mismatched_ml<T: Real>(
    y: &[Complex<T>],
    h_hat: &ComplexMatrix<T>,
    c: &Constellation<T>,
) -> Result<Vec<Complex<T>>> {
    if y.len() != h_hat.rows() {
        return Err(dims("y and H_hat disagree on the antenna count"));
    }
    let k = h_hat.cols();
    let total = search_size(c.len(), k, MISMATCHED_ML_LIMIT)?;
    exhaustive_argmin(c.points(), k, total, |x| {
        Ok((0..y.len())
            .map(|m| {
                let mut r = y[m];
                for (kk, xk) in x.iter().enumerate() {
                    r -= h_hat[(m, kk)] * xk;
                }
                r.norm_sqr()
            })
            .sum())
    })
}

/// Candidate- and observation-independent parts of the robust ML objective:
/// `Sigma_h^{-1}` and `Sigma_h^{-1} h_hat`, shared by every symbol of a block.
#[derive(Clone, Debug)]
pub struct RobustMlWork<T: Real> {
    m: usize,
    k: usize,
    sigma2: T,
    sigma_h_inv: ComplexMatrix<T>,
    sigma_h_inv_h: Vec<Complex<T>>,
}

impl<T: Real> RobustMlWork<T> {
    pub fn new(
        m: usize,
        h_hat: &[Complex<T>],
        sigma_h: &ComplexMatrix<T>,
        sigma2: T,
    ) -> Result<Self> {
        let mk = h_hat.len();
        if m == 0 || !mk.is_multiple_of(m) || sigma_h.rows() != mk || !sigma_h.is_square() {
            return Err(dims("robust ML inputs have inconsistent shapes"));
        }
        let factor = HermitianFactor::new_jittered(sigma_h)?;
        let sigma_h_inv = factor.inverse();
        let sigma_h_inv_h = factor.solve_vec(h_hat)?;
        Ok(Self {
            m,
            k: mk / m,
            sigma2,
            sigma_h_inv,
            sigma_h_inv_h,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn sigma_h_inv(&self) -> &ComplexMatrix<T> {
        &self.sigma_h_inv
    }

    /// `R_X = (conj(x) x^T kron I_M) / s2 + Sigma_h^{-1}`.
    pub fn r_x(&self, x: &[Complex<T>]) -> ComplexMatrix<T> {
        let (m, inv_s2) = (self.m, T::one() / self.sigma2);
        let mut r = self.sigma_h_inv.clone();
        for k in 0..self.k {
            for k2 in 0..self.k {
                let g = x[k].conj() * x[k2] * inv_s2;
                for i in 0..m {
                    r[(k * m + i, k2 * m + i)] += g;
                }
            }
        }
        r
    }

    /// `q_X = (conj(x) kron y) / s2 + Sigma_h^{-1} h_hat`.
    pub fn q_x(&self, x: &[Complex<T>], y: &[Complex<T>]) -> Vec<Complex<T>> {
        let inv_s2 = T::one() / self.sigma2;
        let mut q = self.sigma_h_inv_h.clone();
        for (k, xk) in x.iter().enumerate() {
            let w = xk.conj() * inv_s2;
            for (i, yi) in y.iter().enumerate() {
                q[k * self.m + i] += w * yi;
            }
        }
        q
    }

    /// `ln det R_X - q_X^H R_X^{-1} q_X`.
    pub fn objective(&self, x: &[Complex<T>], y: &[Complex<T>]) -> Result<T> {
        if x.len() != self.k || y.len() != self.m {
            return Err(dims(format!(
                "candidate/observation lengths {}/{} do not match K = {}, M = {}",
                x.len(),
                y.len(),
                self.k,
                self.m
            )));
        }
        let f = HermitianFactor::new(&self.r_x(x))?;
        Ok(f.log_det() - f.inverse_quadratic_form(&self.q_x(x, y)))
    }

    /// Exhaustive minimiser of [`RobustMlWork::objective`] for one observation.
    pub fn exhaustive(&self, y: &[Complex<T>], c: &Constellation<T>) -> Result<Vec<Complex<T>>> {
        let total = search_size(c.len(), self.k, ROBUST_ML_LIMIT)?;
        exhaustive_argmin(c.points(), self.k, total, |x| self.objective(x, y))
    }
}

/// Robust ML objective at `x`, constants dropped.
pub fn robust_ml_objective<T: Real>(
    x: &[Complex<T>],
    y: &[Complex<T>],
    h_hat: &[Complex<T>],
    sigma_h: &ComplexMatrix<T>,
    sigma2: T,
) -> Result<T> {
    RobustMlWork::new(y.len(), h_hat, sigma_h, sigma2)?.objective(x, y)
}

/// Exhaustive minimiser of the robust ML objective.
pub fn robust_ml_exhaustive<T: Real>(
    y: &[Complex<T>],
    h_hat: &[Complex<T>],
    sigma_h: &ComplexMatrix<T>,
    sigma2: T,
    c: &Constellation<T>,
) -> Result<Vec<Complex<T>>> {
    let k = h_hat.len() / y.len().max(1);
    search_size(c.len(), k, ROBUST_ML_LIMIT)?;
    RobustMlWork::new(y.len(), h_hat, sigma_h, sigma2)?.exhaustive(y, c)
}
