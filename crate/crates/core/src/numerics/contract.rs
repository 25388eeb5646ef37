//! Masked block contractions that turn `MK`-dimensional quantities into the
//! `K`-dimensional curvature and linear terms of the x-update.

use num_complex::Complex;

use super::matrix::{ComplexMatrix, RealMatrix};
use crate::error::{dims, Result};
use crate::scalar::{czero, Real};

/// `out[k, k'] = scale * sum_{m, m'} mtx[k' M + m, k M + m'] * w[m, m']`.
///
/// With `w = I` this is `scale` times the transposed matrix of per-block traces.
pub fn block_contract<T: Real>(
    mtx: &ComplexMatrix<T>,
    w: &RealMatrix<T>,
    scale: T,
) -> Result<ComplexMatrix<T>> {
    let m = w.rows();
    if w.cols() != m || m == 0 || !mtx.is_square() || !mtx.rows().is_multiple_of(m) {
        return Err(dims(format!(
            "block_contract needs square MK x MK input and M x M filter (got {}x{} and {}x{})",
            mtx.rows(),
            mtx.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let k = mtx.rows() / m;
    let identity = w.is_identity();
    Ok(ComplexMatrix::from_fn(k, k, |ka, kb| {
        let mut acc = czero();
        if identity {
            for mi in 0..m {
                acc += mtx[(kb * m + mi, ka * m + mi)];
            }
        } else {
            for mi in 0..m {
                for mj in 0..m {
                    let wv = w[(mi, mj)];
                    if wv != T::zero() {
                        acc += mtx[(kb * m + mi, ka * m + mj)] * wv;
                    }
                }
            }
        }
        acc * scale
    }))
}

/// Same contraction for a rank-one `s s^H` without forming it.
pub fn block_contract_outer<T: Real>(
    s: &[Complex<T>],
    w: &RealMatrix<T>,
    scale: T,
) -> Result<ComplexMatrix<T>> {
    let m = w.rows();
    if w.cols() != m || m == 0 || !s.len().is_multiple_of(m) {
        return Err(dims(format!(
            "block_contract_outer needs length-MK vector and M x M filter (got {} and {}x{})",
            s.len(),
            w.rows(),
            w.cols()
        )));
    }
    let k = s.len() / m;
    let identity = w.is_identity();
    Ok(ComplexMatrix::from_fn(k, k, |ka, kb| {
        let mut acc = czero();
        for mi in 0..m {
            if identity {
                acc += s[kb * m + mi] * s[ka * m + mi].conj();
            } else {
                for mj in 0..m {
                    let wv = w[(mi, mj)];
                    if wv != T::zero() {
                        acc += s[kb * m + mi] * s[ka * m + mj].conj() * wv;
                    }
                }
            }
        }
        acc * scale
    }))
}

/// `out[k] = scale * sum_{m', m} a[m', k M + m] * w[m', m]`.
///
/// With `w = I` this is `scale` times the trace of the k-th `M x M` block.
pub fn block_contract_rows<T: Real>(
    a: &ComplexMatrix<T>,
    w: &RealMatrix<T>,
    scale: T,
) -> Result<Vec<Complex<T>>> {
    let m = w.rows();
    if w.cols() != m || a.rows() != m || m == 0 || !a.cols().is_multiple_of(m) {
        return Err(dims(format!(
            "block_contract_rows needs M x MK input and M x M filter (got {}x{} and {}x{})",
            a.rows(),
            a.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let k = a.cols() / m;
    Ok((0..k)
        .map(|kk| {
            let mut acc = czero();
            for mr in 0..m {
                for mc in 0..m {
                    let wv = w[(mr, mc)];
                    if wv != T::zero() {
                        acc += a[(mr, kk * m + mc)] * wv;
                    }
                }
            }
            acc * scale
        })
        .collect())
}

/// Same as [`block_contract_rows`] for `A = y s^H` without forming it.
pub fn block_contract_rows_outer<T: Real>(
    y: &[Complex<T>],
    s: &[Complex<T>],
    w: &RealMatrix<T>,
    scale: T,
) -> Result<Vec<Complex<T>>> {
    let m = w.rows();
    if w.cols() != m || y.len() != m || m == 0 || !s.len().is_multiple_of(m) {
        return Err(dims(format!(
            "block_contract_rows_outer needs length-M y and length-MK s (got {} and {})",
            y.len(),
            s.len()
        )));
    }
    let k = s.len() / m;
    Ok((0..k)
        .map(|kk| {
            let mut acc = czero();
            for mr in 0..m {
                for mc in 0..m {
                    let wv = w[(mr, mc)];
                    if wv != T::zero() {
                        acc += y[mr] * s[kk * m + mc].conj() * wv;
                    }
                }
            }
            acc * scale
        })
        .collect())
}
