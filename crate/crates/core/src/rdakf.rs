//! Data-aided Kalman tracking of the aging channel. Blocks after the pilot
//! block are refined with robust-MMSE soft symbol estimates used as the
//! measurement matrix, with the noise covariance inflated by the data error.

use num_complex::Complex;

use crate::channel::{apply_symbols, lmmse_estimate, ChannelStatistics, CsiBelief, PilotBlock};
use crate::error::{dims, Result};
use crate::numerics::{ComplexMatrix, HermitianFactor};
use crate::scalar::{czero, Real};
use crate::sysmodel::Constellation;

/// Innovation pivots below this skip the slot.
pub const INNOVATION_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct KalmanBelief<T: Real> {
    pub h_post: Vec<Complex<T>>,
    pub sigma_post: ComplexMatrix<T>,
    pub h_prior: Vec<Complex<T>>,
    pub sigma_prior: ComplexMatrix<T>,
}

impl<T: Real> KalmanBelief<T> {
    /// Posterior initialised from a pilot-based estimate.
    pub fn from_belief(b: &CsiBelief<T>) -> Self {
        Self {
            h_post: b.h_hat().to_vec(),
            sigma_post: b.sigma_h().clone(),
            h_prior: b.h_hat().to_vec(),
            sigma_prior: b.sigma_h().clone(),
        }
    }

    pub fn to_csi(&self, m: usize) -> Result<CsiBelief<T>> {
        let mk = self.h_post.len();
        CsiBelief::new(m, mk / m, self.h_post.clone(), self.sigma_post.clone())
    }
}

/// Data estimates of one block and the slot-independent error statistics.
#[derive(Clone, Debug)]
pub struct DataAidState<T: Real> {
    pub x_hat: Vec<Vec<Complex<T>>>,
    pub sigma_x: ComplexMatrix<T>,
    pub xi: ComplexMatrix<T>,
    pub c_z: ComplexMatrix<T>,
}

/// `h_prior = Lambda h_post`, `Sigma_prior = Lambda Sigma_post Lambda + Lambda_bar C_h Lambda_bar`.
pub fn kf_predict<T: Real>(
    prev: &KalmanBelief<T>,
    stats: &ChannelStatistics<T>,
) -> KalmanBelief<T> {
    let h_prior: Vec<Complex<T>> = prev
        .h_post
        .iter()
        .zip(stats.lambda())
        .map(|(h, &l)| h * l)
        .collect();
    let mut sigma_prior = &stats.age(&prev.sigma_post) + &stats.innovation_cov();
    sigma_prior.symmetrize();
    KalmanBelief {
        h_post: h_prior.clone(),
        sigma_post: sigma_prior.clone(),
        h_prior,
        sigma_prior,
    }
}

/// Robust MMSE soft estimate of one slot and `Sigma_x = I - H^H (H H^H + Sigma_H + s2 I)^{-1} H`.
pub fn data_estimate_batch<T: Real>(
    ys: &[Vec<Complex<T>>],
    prior: &CsiBelief<T>,
    sigma2: T,
) -> Result<(Vec<Vec<Complex<T>>>, ComplexMatrix<T>)> {
    let h = prior.h_mat();
    let mut a = &h.matmul(&h.adjoint()) + prior.sigma_row();
    a.add_to_diagonal(sigma2);
    a.symmetrize();
    let f = HermitianFactor::new(&a)?;
    let mut x_hat = Vec::with_capacity(ys.len());
    for y in ys {
        x_hat.push(h.adjoint_mul_vec(&f.solve_vec(y)?));
    }
    let mut sigma_x = h.adjoint_matmul(&f.solve(h)?).scale(-T::one());
    sigma_x.add_to_diagonal(T::one());
    sigma_x.symmetrize();
    Ok((x_hat, sigma_x))
}

pub fn data_estimate<T: Real>(
    y: &[Complex<T>],
    prior: &CsiBelief<T>,
    sigma2: T,
) -> Result<(Vec<Complex<T>>, ComplexMatrix<T>)> {
    let (mut x, s) = data_estimate_batch(&[y.to_vec()], prior, sigma2)?;
    Ok((x.pop().expect("one slot"), s))
}

/// `Xi[i, j] = sum_{k,l} Sigma_x[k, l] C_h[kM + i, lM + j]`.
pub fn xi_matrix<T: Real>(
    sigma_x: &ComplexMatrix<T>,
    c_h: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    let k = sigma_x.rows();
    if !sigma_x.is_square() || k == 0 || !c_h.is_square() || !c_h.rows().is_multiple_of(k) {
        return Err(dims("Sigma_x must be K x K and C_h MK x MK"));
    }
    let m = c_h.rows() / k;
    let mut xi = ComplexMatrix::zeros(m, m);
    for kk in 0..k {
        for ll in 0..k {
            let s = sigma_x[(kk, ll)];
            if s == czero() {
                continue;
            }
            for j in 0..m {
                for i in 0..m {
                    xi[(i, j)] += s * c_h[(kk * m + i, ll * m + j)];
                }
            }
        }
    }
    Ok(xi)
}

/// Outcome flag of one sequential update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotUpdate {
    Applied,
    Skipped,
}

/// One sequential Kalman update with measurement matrix `x_hat^T kron I_M`.
pub fn kf_sequential_update<T: Real>(
    belief: &mut KalmanBelief<T>,
    y: &[Complex<T>],
    x_hat: &[Complex<T>],
    c_z: &ComplexMatrix<T>,
) -> Result<SlotUpdate> {
    let m = y.len();
    let k = x_hat.len();
    let mk = belief.h_post.len();
    if m * k != mk || c_z.rows() != m || belief.sigma_post.rows() != mk {
        return Err(dims("Kalman update inputs have inconsistent shapes"));
    }
    let sigma = &belief.sigma_post;
    // P = X Sigma (M x MK)
    let mut p = ComplexMatrix::zeros(m, mk);
    for col in 0..mk {
        for (kk, &xk) in x_hat.iter().enumerate() {
            if xk == czero() {
                continue;
            }
            for i in 0..m {
                p[(i, col)] += xk * sigma[(kk * m + i, col)];
            }
        }
    }
    // S = C_z + P X^H
    let mut s = c_z.clone();
    for j in 0..m {
        for (kk, &xk) in x_hat.iter().enumerate() {
            let w = xk.conj();
            for i in 0..m {
                s[(i, j)] += p[(i, kk * m + j)] * w;
            }
        }
    }
    s.symmetrize();
    let f = match HermitianFactor::new(&s) {
        Ok(f) if f.min_pivot() >= T::of(INNOVATION_FLOOR) => f,
        Ok(_) | Err(crate::Error::NotPositiveDefinite { .. }) => return Ok(SlotUpdate::Skipped),
        Err(e) => return Err(e),
    };
    let pred = apply_symbols(&belief.h_post, x_hat);
    let innov: Vec<Complex<T>> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let w = f.solve_vec(&innov)?;
    let gain_innov = p.adjoint_mul_vec(&w);
    for (h, g) in belief.h_post.iter_mut().zip(&gain_innov) {
        *h += g;
    }
    let t = f.solve(&p)?;
    let mut post = sigma - &p.adjoint_matmul(&t);
    post.symmetrize();
    belief.sigma_post = post;
    Ok(SlotUpdate::Applied)
}

#[derive(Clone, Debug, Default)]
pub struct RdakfConfig {
    /// Slice soft symbol estimates before using them as the measurement.
    pub slice_data: bool,
}

/// Per-frame tracking output.
#[derive(Clone, Debug)]
pub struct TrackedFrame<T: Real> {
    /// `beliefs[n - 1]` is the belief for block `n`.
    pub beliefs: Vec<CsiBelief<T>>,
    pub skipped_slots: usize,
}

/// Tracks blocks `2..=N+1` given the pilot block and the data observations
/// `observations[n - 2][t]` of each later block.
pub fn track_frame<T: Real>(
    pilots: &PilotBlock<T>,
    observations: &[Vec<Vec<Complex<T>>>],
    stats: &ChannelStatistics<T>,
    sigma2: T,
    cfg: &RdakfConfig,
    c: Option<&Constellation<T>>,
) -> Result<TrackedFrame<T>> {
    let m = stats.m();
    let first = lmmse_estimate(pilots, stats, sigma2, 1)?;
    let mut kb = KalmanBelief::from_belief(&first);
    let mut beliefs = vec![first];
    let mut skipped = 0;
    for ys in observations {
        let mut pred = kf_predict(&kb, stats);
        let prior_csi =
            CsiBelief::new(m, stats.k(), pred.h_prior.clone(), pred.sigma_prior.clone())?;
        let (mut x_hat, sigma_x) = data_estimate_batch(ys, &prior_csi, sigma2)?;
        if cfg.slice_data {
            let c = c.ok_or_else(|| dims("slicing needs a constellation"))?;
            for x in x_hat.iter_mut() {
                *x = c.slice(x);
            }
        }
        let mut c_z = xi_matrix(&sigma_x, stats.c_h())?;
        c_z.add_to_diagonal(sigma2);
        c_z.symmetrize();
        for (y, x) in ys.iter().zip(&x_hat) {
            if kf_sequential_update(&mut pred, y, x, &c_z)? == SlotUpdate::Skipped {
                skipped += 1;
            }
        }
        beliefs.push(pred.to_csi(m)?);
        kb = pred;
    }
    Ok(TrackedFrame {
        beliefs,
        skipped_slots: skipped,
    })
}
