//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use robust_mimo::numerics::ComplexMatrix;
use robust_mimo::rng::{complex_normal, derive_rng_stream, Lane, Stream};
use robust_mimo::C64;

pub fn rng(seed: u64) -> Stream {
    derive_rng_stream(seed, 0, Lane::Trainer)
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn gaussian_vec(rng: &mut Stream, n: usize) -> Vec<C64> {
    (0..n).map(|_| complex_normal::<f64, _>(rng)).collect()
}

pub fn gaussian_matrix(rng: &mut Stream, rows: usize, cols: usize) -> ComplexMatrix<f64> {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal::<f64, _>(rng))
}

/// `G G^H + shift I`.
pub fn random_hpd(rng: &mut Stream, n: usize, shift: f64) -> ComplexMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    let mut a = g.matmul(&g.adjoint());
    a.add_to_diagonal(shift);
    a.symmetrize();
    a
}

/// Rank-deficient PSD matrix `G G^H` with `G` of `rank` columns.
pub fn random_psd(rng: &mut Stream, n: usize, rank: usize) -> ComplexMatrix<f64> {
    let g = gaussian_matrix(rng, n, rank);
    let mut a = g.matmul(&g.adjoint());
    a.symmetrize();
    a
}

pub fn to_na(a: &ComplexMatrix<f64>) -> DMatrix<C64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

pub fn from_na(a: &DMatrix<C64>) -> ComplexMatrix<f64> {
    ComplexMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenvalues of a Hermitian matrix by an independent dense solver.
pub fn eigenvalues(a: &ComplexMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = to_na(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|x, y| x.total_cmp(y));
    v
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn mat_max_diff(a: &ComplexMatrix<f64>, b: &ComplexMatrix<f64>) -> f64 {
    max_abs_diff(a.as_slice(), b.as_slice())
}

/// `||A - B||_F / ||B||_F`.
pub fn rel_frob(a: &ComplexMatrix<f64>, b: &ComplexMatrix<f64>) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm()
}

/// `(1/n) sum (v - mean)(v - mean)^H` with a known zero or given mean.
pub fn sample_covariance(samples: &[Vec<C64>], mean: Option<&[C64]>) -> ComplexMatrix<f64> {
    let n = samples[0].len();
    let mut acc = ComplexMatrix::zeros(n, n);
    for s in samples {
        let d: Vec<C64> = match mean {
            Some(m) => s.iter().zip(m).map(|(a, b)| a - b).collect(),
            None => s.clone(),
        };
        for j in 0..n {
            let dj = d[j].conj();
            for i in 0..n {
                acc[(i, j)] += d[i] * dj;
            }
        }
    }
    acc.scale(1.0 / samples.len() as f64)
}

pub fn uniform(rng: &mut Stream, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Timed section that prints its duration; keeps runtime budgets visible.
pub fn timed<R>(label: &str, f: impl FnOnce() -> R) -> (R, f64) {
    let t = std::time::Instant::now();
    let r = f();
    let s = t.elapsed().as_secs_f64();
    println!("{label}: {s:.2} s");
    (r, s)
}
