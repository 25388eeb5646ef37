//! Low-complexity robust ADMM detector: the channel error is folded into a
//! Gaussian residual with covariance `C_r = Sigma_H + s2 I`, which makes the
//! x-update an exact solve with one cached `K x K` factor.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::baseline::robust_mmse;
use crate::channel::CsiBelief;
use crate::detection::{
    bit_plane_sweep, check_denominators, consensus_residual, relaxed_target, Detection, Diagnostics,
};
use crate::error::{dims, Result};
use crate::numerics::{ComplexMatrix, HermitianFactor};
use crate::radmm::default_weights;
use crate::scalar::{czero, Real};
use crate::sysmodel::Constellation;

/// Factors that stay fixed while `delta` is fixed.
#[derive(Clone, Debug)]
pub struct LcPrecomp<T: Real> {
    delta: T,
    cr_factor: HermitianFactor<T>,
    /// `C_r^{-1} H_hat` (M x K).
    g: ComplexMatrix<T>,
    phi: ComplexMatrix<T>,
    phi_factor: HermitianFactor<T>,
    phi_factorizations: usize,
}

impl<T: Real> LcPrecomp<T> {
    pub fn delta(&self) -> T {
        self.delta
    }

    /// `Phi = H_hat^H C_r^{-1} H_hat + (delta/2) I`.
    pub fn phi(&self) -> &ComplexMatrix<T> {
        &self.phi
    }

    pub fn phi_factor(&self) -> &HermitianFactor<T> {
        &self.phi_factor
    }

    pub fn cr_factor(&self) -> &HermitianFactor<T> {
        &self.cr_factor
    }

    pub fn phi_factorizations(&self) -> usize {
        self.phi_factorizations
    }

    /// `g0 = H_hat^H C_r^{-1} y`.
    pub fn g0(&self, y: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if y.len() != self.g.rows() {
            return Err(dims("observation length differs from M"));
        }
        Ok(self.g.adjoint_mul_vec(y))
    }
}

pub fn lc_precompute<T: Real>(
    h_hat: &ComplexMatrix<T>,
    sigma_row: &ComplexMatrix<T>,
    sigma2: T,
    delta: T,
) -> Result<LcPrecomp<T>> {
    let m = h_hat.rows();
    if sigma_row.rows() != m || sigma_row.cols() != m {
        return Err(dims("Sigma_H must be M x M"));
    }
    let mut cr = sigma_row.clone();
    cr.add_to_diagonal(sigma2);
    cr.symmetrize();
    let cr_factor = HermitianFactor::new(&cr)?;
    let g = cr_factor.solve(h_hat)?;
    let mut phi = h_hat.adjoint_matmul(&g);
    phi.add_to_diagonal(delta / T::of(2.0));
    phi.symmetrize();
    let phi_factor = HermitianFactor::new(&phi)?;
    Ok(LcPrecomp {
        delta,
        cr_factor,
        g,
        phi,
        phi_factor,
        phi_factorizations: 1,
    })
}

/// Penalties of the low-complexity family. `kappa[i]` and `upsilon[i]`
/// belong to iteration (layer) `i`; `delta` is shared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcParams<T> {
    pub delta: T,
    pub kappa: Vec<Vec<T>>,
    pub upsilon: Vec<T>,
}

impl<T: Real> LcParams<T> {
    /// Constant penalties over `iters` iterations, no relaxation.
    pub fn constant(delta: T, kappa: Vec<T>, iters: usize) -> Self {
        Self {
            delta,
            kappa: vec![kappa; iters],
            upsilon: vec![T::one(); iters],
        }
    }

    /// `delta = 2`, `kappa_q` at half the convexity limit.
    pub fn default_for(c: &Constellation<T>, iters: usize) -> Self {
        let delta = T::of(2.0);
        Self::constant(delta, default_weights(delta, c), iters)
    }

    pub fn layers(&self) -> usize {
        self.kappa.len()
    }

    pub fn validate(&self, c: &Constellation<T>) -> Result<()> {
        if self.upsilon.len() != self.kappa.len() {
            return Err(dims("kappa and upsilon must have one entry per layer"));
        }
        for k in &self.kappa {
            if k.len() != c.bits_per_dimension() {
                return Err(dims("kappa length differs from Q"));
            }
            check_denominators(self.delta, k, c.alpha())?;
        }
        Ok(())
    }
}

/// Projected Gauss-Seidel update of the bit planes `u_q`.
pub fn u_update<T: Real>(
    u: &mut [Vec<Complex<T>>],
    x_ref: &[Complex<T>],
    theta_ref: &[Complex<T>],
    delta: T,
    kappa: &[T],
    c: &Constellation<T>,
) -> Result<()> {
    bit_plane_sweep(u, x_ref, theta_ref, delta, kappa, c)
}

/// `gamma = g0 + (delta/2)(z - theta)` with relaxed target `z`; returns
/// `(x = Phi^{-1} gamma, gamma, z)`.
#[allow(clippy::type_complexity)]
pub fn lc_x_update<T: Real>(
    pre: &LcPrecomp<T>,
    g0: &[Complex<T>],
    u: &[Vec<Complex<T>>],
    theta: &[Complex<T>],
    upsilon: T,
    x_prev: &[Complex<T>],
    c: &Constellation<T>,
) -> Result<(Vec<Complex<T>>, Vec<Complex<T>>, Vec<Complex<T>>)> {
    let z = relaxed_target(c, u, upsilon, x_prev);
    let half = pre.delta / T::of(2.0);
    let gamma: Vec<Complex<T>> = g0
        .iter()
        .zip(&z)
        .zip(theta)
        .map(|((g, zi), th)| g + (zi - th) * half)
        .collect();
    let x = pre.phi_factor.solve_vec(&gamma)?;
    Ok((x, gamma, z))
}

/// Low-complexity detector bound to one CSI belief and `delta`.
#[derive(Clone, Debug)]
pub struct LcDetector<T: Real> {
    pre: LcPrecomp<T>,
    h_mat: ComplexMatrix<T>,
    sigma_row: ComplexMatrix<T>,
    sigma2: T,
    c: Constellation<T>,
}

impl<T: Real> LcDetector<T> {
    pub fn new(belief: &CsiBelief<T>, sigma2: T, delta: T, c: &Constellation<T>) -> Result<Self> {
        Ok(Self {
            pre: lc_precompute(belief.h_mat(), belief.sigma_row(), sigma2, delta)?,
            h_mat: belief.h_mat().clone(),
            sigma_row: belief.sigma_row().clone(),
            sigma2,
            c: c.clone(),
        })
    }

    pub fn precomp(&self) -> &LcPrecomp<T> {
        &self.pre
    }

    pub fn detect(&self, y: &[Complex<T>], p: &LcParams<T>) -> Result<Detection<T>> {
        p.validate(&self.c)?;
        if p.delta != self.pre.delta {
            return Err(dims(
                "parameters carry a different delta than the precomputation",
            ));
        }
        let c = &self.c;
        let g0 = self.pre.g0(y)?;
        let mut x = robust_mmse(y, &self.h_mat, &self.sigma_row, self.sigma2)?;
        let mut u = c.decompose(&c.slice(&x))?;
        let mut theta = vec![czero(); x.len()];
        let mut diag = Diagnostics {
            initial_residual: consensus_residual(c, &u, &x),
            factorizations: self.pre.phi_factorizations,
            ..Diagnostics::default()
        };
        for (kappa, &upsilon) in p.kappa.iter().zip(&p.upsilon) {
            u_update(&mut u, &x, &theta, p.delta, kappa, c)?;
            let (x_new, _, z) = lc_x_update(&self.pre, &g0, &u, &theta, upsilon, &x, c)?;
            for ((th, xi), zi) in theta.iter_mut().zip(&x_new).zip(&z) {
                *th += xi - zi;
            }
            x = x_new;
            diag.consensus_residual.push(consensus_residual(c, &u, &x));
        }
        let x_hard = c.slice(&x);
        Ok(Detection {
            x_soft: x,
            x_hard,
            diagnostics: diag,
        })
    }
}

/// Algorithm mode (constant penalties).
pub fn lcradmm_detect<T: Real>(
    y: &[Complex<T>],
    belief: &CsiBelief<T>,
    sigma2: T,
    params: &LcParams<T>,
    c: &Constellation<T>,
) -> Result<Detection<T>> {
    LcDetector::new(belief, sigma2, params.delta, c)?.detect(y, params)
}

/// Network mode (layer-wise `kappa`, relaxation `upsilon`).
pub fn lcradmmnet_forward<T: Real>(
    y: &[Complex<T>],
    belief: &CsiBelief<T>,
    sigma2: T,
    params: &LcParams<T>,
    c: &Constellation<T>,
) -> Result<Detection<T>> {
    lcradmm_detect(y, belief, sigma2, params, c)
}
