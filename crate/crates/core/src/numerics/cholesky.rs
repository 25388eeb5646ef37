use num_complex::Complex;

use super::matrix::ComplexMatrix;
use crate::error::{dims, Error, Result};
use crate::scalar::{czero, Real};

/// Diagonal jitter (relative to the mean diagonal) tried once when a
/// semidefinite matrix fails to factor.
pub const JITTER: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = L L^H`.
#[derive(Clone, Debug)]
pub struct HermitianFactor<T: Real> {
    dim: usize,
    lower: ComplexMatrix<T>,
}

fn hermitian_tolerance<T: Real>(a: &ComplexMatrix<T>) -> T {
    // 1e-12 for f64 at unit scale; scaled by magnitude and precision.
    T::epsilon() * T::of(4096.0) * (T::one() + a.max_abs())
}

impl<T: Real> HermitianFactor<T> {
    /// Factors a Hermitian positive-definite matrix.
    pub fn new(a: &ComplexMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(dims(format!(
                "Cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let dev = a.hermitian_deviation();
        if dev > hermitian_tolerance(a) {
            return Err(Error::NotHermitian {
                deviation: dev.as_f64(),
            });
        }
        Self::factor_lower(a)
    }

    /// Like [`HermitianFactor::new`], retrying once with a relative diagonal
    /// jitter of [`JITTER`] for numerically semidefinite input.
    pub fn new_jittered(a: &ComplexMatrix<T>) -> Result<Self> {
        match Self::new(a) {
            Err(Error::NotPositiveDefinite { .. }) => {
                let n = a.rows().max(1);
                let mean_diag = a.trace().re / T::of_usize(n);
                let scale = if mean_diag > T::zero() {
                    mean_diag
                } else {
                    T::one()
                };
                let jitter = (T::of(JITTER) * scale).max(T::epsilon() * T::of(16.0) * scale);
                let mut b = a.clone();
                b.add_to_diagonal(jitter);
                Self::new(&b)
            }
            other => other,
        }
    }

    fn factor_lower(a: &ComplexMatrix<T>) -> Result<Self> {
        let n = a.rows();
        let mut l = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    index: j,
                    pivot: d.as_f64(),
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex::new(djj, T::zero());
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { dim: n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &ComplexMatrix<T> {
        &self.lower
    }

    /// Smallest diagonal entry of `L` squared (the smallest pivot).
    pub fn min_pivot(&self) -> T {
        (0..self.dim)
            .map(|i| self.lower[(i, i)].re * self.lower[(i, i)].re)
            .fold(T::infinity(), T::min)
    }

    /// `ln det A = 2 sum ln L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::of(2.0);
        (0..self.dim).map(|i| self.lower[(i, i)].re.ln()).sum::<T>() * two
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.dim;
        let l = &self.lower;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)].re;
        }
        x
    }

    /// `L^{-H} b`.
    pub fn solve_upper(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.dim;
        let l = &self.lower;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[(k, i)].conj() * x[k];
            }
            x[i] = s / l[(i, i)].re;
        }
        x
    }

    /// `A^{-1} b`.
    pub fn solve_vec(&self, b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if b.len() != self.dim {
            return Err(dims(format!(
                "right-hand side has length {}, factor has dimension {}",
                b.len(),
                self.dim
            )));
        }
        Ok(self.solve_upper(&self.solve_lower(b)))
    }

    /// `A^{-1} B`.
    pub fn solve(&self, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
        if b.rows() != self.dim {
            return Err(dims(format!(
                "right-hand side has {} rows, factor has dimension {}",
                b.rows(),
                self.dim
            )));
        }
        let mut out = ComplexMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_upper(&self.solve_lower(b.column(j)));
            out.column_mut(j).copy_from_slice(&x);
        }
        Ok(out)
    }

    /// `b^H A^{-1} b = ||L^{-1} b||^2`.
    pub fn inverse_quadratic_form(&self, b: &[Complex<T>]) -> T {
        super::vector::norm_sqr(&self.solve_lower(b))
    }

    pub fn inverse(&self) -> ComplexMatrix<T> {
        let mut inv = self
            .solve(&ComplexMatrix::identity(self.dim))
            .expect("identity has matching dimension");
        inv.symmetrize();
        inv
    }

    /// `L w`, used to colour white samples.
    pub fn mul_lower(&self, w: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.dim;
        (0..n)
            .map(|i| {
                let mut s = czero();
                for k in 0..=i {
                    s += self.lower[(i, k)] * w[k];
                }
                s
            })
            .collect()
    }

    /// `L L^H`.
    pub fn reconstruct(&self) -> ComplexMatrix<T> {
        self.lower.matmul(&self.lower.adjoint())
    }
}

/// Solves `A X = B` for Hermitian positive-definite `A` via Cholesky.
pub fn hermitian_solve<T: Real>(
    a: &ComplexMatrix<T>,
    b: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    if b.rows() != a.rows() {
        return Err(dims(format!(
            "A is {}x{}, B has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    HermitianFactor::new(a)?.solve(b)
}
