//! Kronecker-correlated Rayleigh channels with Gauss-Markov aging across
//! coherence blocks, orthogonal pilots and pilot-based LMMSE estimation.
//!
//! `h = vec(H)` uses column-major vectorisation, so entry `k*M + m` is the
//! gain from user `k` to antenna `m`.

use num_complex::Complex;
use rand::Rng;

use crate::error::{dims, Error, Result};
use crate::numerics::{hermitian_solve, ComplexMatrix, HermitianFactor};
use crate::rng::complex_normal_vec;
use crate::scalar::{czero, Real};

/// Real exponential Toeplitz correlation `R[i, j] = rho^{|i - j|}`.
pub fn exponential_correlation<T: Real>(n: usize, rho: T) -> ComplexMatrix<T> {
    ComplexMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j) as i32;
        Complex::new(if d == 0 { T::one() } else { rho.powi(d) }, T::zero())
    })
}

/// `C_h = R_t (K x K) kron R_r (M x M)`.
pub fn make_covariance<T: Real>(
    m: usize,
    k: usize,
    rho_t: T,
    rho_r: T,
) -> Result<ComplexMatrix<T>> {
    for rho in [rho_t, rho_r] {
        if !(rho.abs() < T::one()) {
            return Err(Error::InvalidCorrelation(rho.as_f64()));
        }
    }
    Ok(exponential_correlation(k, rho_t).kron(&exponential_correlation(m, rho_r)))
}

/// Prior covariance and aging operators of the channel process.
#[derive(Clone, Debug)]
pub struct ChannelStatistics<T: Real> {
    m: usize,
    k: usize,
    c_h: ComplexMatrix<T>,
    c_h_factor: HermitianFactor<T>,
    rho: Vec<T>,
    lambda: Vec<T>,
    lambda_bar: Vec<T>,
}

impl<T: Real> ChannelStatistics<T> {
    /// Kronecker prior with one temporal coefficient per user.
    pub fn kronecker(m: usize, k: usize, rho_t: T, rho_r: T, rho_time: &[T]) -> Result<Self> {
        Self::from_covariance(m, k, make_covariance(m, k, rho_t, rho_r)?, rho_time)
    }

    /// Same temporal coefficient for every user.
    pub fn kronecker_uniform(m: usize, k: usize, rho_t: T, rho_r: T, rho: T) -> Result<Self> {
        Self::kronecker(m, k, rho_t, rho_r, &vec![rho; k])
    }

    pub fn from_covariance(
        m: usize,
        k: usize,
        c_h: ComplexMatrix<T>,
        rho_time: &[T],
    ) -> Result<Self> {
        if c_h.rows() != m * k || !c_h.is_square() {
            return Err(dims(format!("C_h must be {0}x{0}", m * k)));
        }
        if rho_time.len() != k {
            return Err(dims(format!(
                "need {k} temporal coefficients, got {}",
                rho_time.len()
            )));
        }
        for &r in rho_time {
            if !(r >= T::zero() && r <= T::one()) {
                return Err(Error::InvalidCorrelation(r.as_f64()));
            }
        }
        let c_h_factor = HermitianFactor::new_jittered(&c_h)?;
        let lambda: Vec<T> = (0..m * k).map(|i| rho_time[i / m]).collect();
        let lambda_bar = lambda
            .iter()
            .map(|&r| (T::one() - r * r).max(T::zero()).sqrt())
            .collect();
        Ok(Self {
            m,
            k,
            c_h,
            c_h_factor,
            rho: rho_time.to_vec(),
            lambda,
            lambda_bar,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mk(&self) -> usize {
        self.m * self.k
    }

    pub fn c_h(&self) -> &ComplexMatrix<T> {
        &self.c_h
    }

    pub fn rho(&self) -> &[T] {
        &self.rho
    }

    /// Diagonal of `Lambda = diag(rho_k) kron I_M`.
    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    /// Diagonal of `Lambda_bar = diag(sqrt(1 - rho_k^2)) kron I_M`.
    pub fn lambda_bar(&self) -> &[T] {
        &self.lambda_bar
    }

    /// Draws `h ~ CN(0, C_h)`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex<T>> {
        self.c_h_factor
            .mul_lower(&complex_normal_vec(rng, self.mk()))
    }

    /// `Lambda h_prev + Lambda_bar w`, `w ~ CN(0, C_h)`.
    pub fn evolve_channel<R: Rng + ?Sized>(
        &self,
        h_prev: &[Complex<T>],
        rng: &mut R,
    ) -> Vec<Complex<T>> {
        let w = self.sample_prior(rng);
        h_prev
            .iter()
            .zip(&w)
            .enumerate()
            .map(|(i, (h, w))| h * self.lambda[i] + w * self.lambda_bar[i])
            .collect()
    }

    /// `D A D` for diagonal `D = diag(left) ... diag(right)`.
    fn diag_sandwich(a: &ComplexMatrix<T>, left: &[T], right: &[T]) -> ComplexMatrix<T> {
        ComplexMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] * (left[i] * right[j]))
    }

    /// `Lambda^p`.
    pub fn lambda_pow(&self, p: usize) -> Vec<T> {
        self.lambda.iter().map(|&l| l.powi(p as i32)).collect()
    }

    /// `Lambda A Lambda`.
    pub fn age(&self, a: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        Self::diag_sandwich(a, &self.lambda, &self.lambda)
    }

    /// `Lambda_bar C_h Lambda_bar`.
    pub fn innovation_cov(&self) -> ComplexMatrix<T> {
        Self::diag_sandwich(&self.c_h, &self.lambda_bar, &self.lambda_bar)
    }

    /// `C_w[n] = sum_{n'=1}^{n-1} Lambda^{n'-1} Lambda_bar C_h Lambda_bar Lambda^{n'-1}`.
    pub fn accumulated_innovation_cov(&self, n: usize) -> Result<ComplexMatrix<T>> {
        if n < 2 {
            return Err(Error::IndexError(n));
        }
        let base = self.innovation_cov();
        let mut acc = ComplexMatrix::zeros(self.mk(), self.mk());
        for p in 0..(n - 1) {
            let lp = self.lambda_pow(p);
            acc = &acc + &Self::diag_sandwich(&base, &lp, &lp);
        }
        Ok(acc)
    }
}

/// Channel vectors `h[1..=N+1]` of one frame.
#[derive(Clone, Debug)]
pub struct ChannelRealization<T: Real> {
    m: usize,
    k: usize,
    h: Vec<Vec<Complex<T>>>,
}

impl<T: Real> ChannelRealization<T> {
    /// Draws `h[1]` from the prior and ages it through `blocks - 1` steps.
    pub fn generate<R: Rng + ?Sized>(
        stats: &ChannelStatistics<T>,
        blocks: usize,
        rng: &mut R,
    ) -> Self {
        let mut h = Vec::with_capacity(blocks);
        if blocks > 0 {
            h.push(stats.sample_prior(rng));
        }
        while h.len() < blocks {
            let next = stats.evolve_channel(h.last().expect("non-empty"), rng);
            h.push(next);
        }
        Self {
            m: stats.m(),
            k: stats.k(),
            h,
        }
    }

    pub fn blocks(&self) -> usize {
        self.h.len()
    }

    /// `h[n]`, 1-based block index.
    pub fn h(&self, n: usize) -> &[Complex<T>] {
        &self.h[n - 1]
    }

    /// `H[n]` as an `M x K` matrix.
    pub fn matrix(&self, n: usize) -> ComplexMatrix<T> {
        ComplexMatrix::from_column_major(self.m, self.k, self.h[n - 1].clone())
    }
}

/// `K x L_P` pilots from the first `K` rows of an `L_P`-point DFT, so that
/// `S_P S_P^H = L_P I_K`.
pub fn dft_pilots<T: Real>(k: usize, l_p: usize) -> Result<ComplexMatrix<T>> {
    if l_p < k {
        return Err(dims(format!(
            "need L_P >= K for orthogonal pilots (L_P = {l_p}, K = {k})"
        )));
    }
    let two_pi = T::of(2.0 * std::f64::consts::PI);
    Ok(ComplexMatrix::from_fn(k, l_p, |r, c| {
        let phase = -two_pi * T::of_usize((r * c) % l_p) / T::of_usize(l_p);
        Complex::new(phase.cos(), phase.sin())
    }))
}

/// Received pilot block `Y_P = H[1] S_P + Z_P`.
#[derive(Clone, Debug)]
pub struct PilotBlock<T: Real> {
    pub s_p: ComplexMatrix<T>,
    pub y_p: ComplexMatrix<T>,
}

impl<T: Real> PilotBlock<T> {
    pub fn l_p(&self) -> usize {
        self.s_p.cols()
    }

    /// `P^H y_P = vec(Y_P S_P^H)`, without materialising `P = S_P^T kron I_M`.
    pub fn matched_filter(&self) -> Vec<Complex<T>> {
        self.y_p.matmul(&self.s_p.adjoint()).into_vec()
    }
}

pub fn transmit_pilots<T: Real, R: Rng + ?Sized>(
    h1: &[Complex<T>],
    s_p: &ComplexMatrix<T>,
    sigma2: T,
    rng: &mut R,
) -> Result<PilotBlock<T>> {
    let k = s_p.rows();
    if k == 0 || !h1.len().is_multiple_of(k) {
        return Err(dims("channel length is not a multiple of the user count"));
    }
    let m = h1.len() / k;
    let h = ComplexMatrix::from_column_major(m, k, h1.to_vec());
    let mut y_p = h.matmul(s_p);
    let sd = sigma2.sqrt();
    for i in 0..m {
        for j in 0..s_p.cols() {
            let z: Complex<T> = crate::rng::complex_normal(rng);
            y_p[(i, j)] += z * sd;
        }
    }
    Ok(PilotBlock {
        s_p: s_p.clone(),
        y_p,
    })
}

/// `Sigma_H[i, j] = sum_k Sigma_h[kM + i, kM + j]`.
pub fn row_covariance<T: Real>(sigma_h: &ComplexMatrix<T>, m: usize) -> Result<ComplexMatrix<T>> {
    if m == 0 || !sigma_h.is_square() || !sigma_h.rows().is_multiple_of(m) {
        return Err(dims(format!(
            "Sigma_h ({}x{}) is not MK x MK for M = {m}",
            sigma_h.rows(),
            sigma_h.cols()
        )));
    }
    let k = sigma_h.rows() / m;
    Ok(ComplexMatrix::from_fn(m, m, |i, j| {
        (0..k).map(|kk| sigma_h[(kk * m + i, kk * m + j)]).sum()
    }))
}

/// Channel estimate together with its error statistics.
#[derive(Clone, Debug)]
pub struct CsiBelief<T: Real> {
    m: usize,
    k: usize,
    h_hat: Vec<Complex<T>>,
    sigma_h: ComplexMatrix<T>,
    h_mat: ComplexMatrix<T>,
    sigma_row: ComplexMatrix<T>,
}

impl<T: Real> CsiBelief<T> {
    pub fn new(
        m: usize,
        k: usize,
        h_hat: Vec<Complex<T>>,
        sigma_h: ComplexMatrix<T>,
    ) -> Result<Self> {
        if h_hat.len() != m * k || sigma_h.rows() != m * k || !sigma_h.is_square() {
            return Err(dims(format!(
                "belief for M = {m}, K = {k} has wrong shapes"
            )));
        }
        let sigma_row = row_covariance(&sigma_h, m)?;
        let h_mat = ComplexMatrix::from_column_major(m, k, h_hat.clone());
        Ok(Self {
            m,
            k,
            h_hat,
            sigma_h,
            h_mat,
            sigma_row,
        })
    }

    /// Exact channel knowledge (`Sigma_h = 0`).
    pub fn perfect(m: usize, k: usize, h: &[Complex<T>]) -> Result<Self> {
        Self::new(m, k, h.to_vec(), ComplexMatrix::zeros(m * k, m * k))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h_hat(&self) -> &[Complex<T>] {
        &self.h_hat
    }

    /// `Sigma_h` (MK x MK).
    pub fn sigma_h(&self) -> &ComplexMatrix<T> {
        &self.sigma_h
    }

    /// `H_hat` (M x K).
    pub fn h_mat(&self) -> &ComplexMatrix<T> {
        &self.h_mat
    }

    /// `Sigma_H` (M x M).
    pub fn sigma_row(&self) -> &ComplexMatrix<T> {
        &self.sigma_row
    }

    /// `||H_hat - H||_F^2 / ||H||_F^2`.
    pub fn nmse(&self, h_true: &[Complex<T>]) -> T {
        let num: T = self
            .h_hat
            .iter()
            .zip(h_true)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: T = h_true.iter().map(|z| z.norm_sqr()).sum();
        num / den
    }
}

/// Pilot-based LMMSE estimate of `h[n]` and its error covariance.
pub fn lmmse_estimate<T: Real>(
    pilots: &PilotBlock<T>,
    stats: &ChannelStatistics<T>,
    sigma2: T,
    n: usize,
) -> Result<CsiBelief<T>> {
    if n == 0 {
        return Err(Error::IndexError(n));
    }
    let mk = stats.mk();
    let l_p = T::of_usize(pilots.l_p());
    let mut a = stats.c_h().scale(l_p);
    a.add_to_diagonal(sigma2);
    // G = (L_P C_h + s2 I)^{-1} C_h = C_h (L_P C_h + s2 I)^{-1}
    let mut g = hermitian_solve(&a, stats.c_h())?;
    g.symmetrize();
    let lam = stats.lambda_pow(n - 1);
    let h1 = g.mul_vec(&pilots.matched_filter());
    let h_hat: Vec<Complex<T>> = h1.iter().zip(&lam).map(|(z, &l)| z * l).collect();
    let mut sigma_h = ComplexMatrix::from_fn(mk, mk, |i, j| g[(i, j)] * (sigma2 * lam[i] * lam[j]));
    if n >= 2 {
        sigma_h = &sigma_h + &stats.accumulated_innovation_cov(n)?;
    }
    sigma_h.symmetrize();
    CsiBelief::new(stats.m(), stats.k(), h_hat, sigma_h)
}

/// Vector `X h` for `X = x^T kron I_M`, i.e. `H x`.
pub fn apply_symbols<T: Real>(h: &[Complex<T>], x: &[Complex<T>]) -> Vec<Complex<T>> {
    let k = x.len();
    let m = h.len() / k;
    let mut out = vec![czero(); m];
    for (kk, &xk) in x.iter().enumerate() {
        for (o, hv) in out.iter_mut().zip(&h[kk * m..(kk + 1) * m]) {
            *o += hv * xk;
        }
    }
    out
}
