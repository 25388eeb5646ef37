//! Robust ADMM detector with majorize-minimize x-updates, and its unfolded
//! network form with layer-wise penalties, a shared filter `W`, CG warm
//! starts across layers and over-relaxation.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::baseline::{robust_mmse, RobustMlWork};
use crate::channel::CsiBelief;
use crate::detection::{
    bit_plane_sweep, check_denominators, consensus_residual, relaxed_target, Detection, Diagnostics,
};
use crate::error::{dims, Result};
use crate::numerics::{
    block_contract, block_contract_outer, block_contract_rows_outer, cg_solve,
    spectral_upper_bound, ComplexMatrix, HermitianFactor, RealMatrix,
};
use crate::scalar::{czero, Real};
use crate::sysmodel::Constellation;

/// Problem size (`MK`) up to which [`Curvature::Auto`] uses the exact curvature.
pub const EXACT_CURVATURE_LIMIT: usize = 64;

/// How the log-det majorizer enters the x-update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Curvature<T> {
    /// Exact `C` at every iteration.
    Exact,
    /// `eps = 2 lambda_max(C^0)` (spectral bound) from the first iteration, reused.
    FirstBound,
    /// Fixed `eps` in `2F + (eps + mu) I`.
    Fixed(T),
    /// `Exact` when `MK <= 64`, otherwise `FirstBound`.
    Auto,
}

/// Mutable iterate of one detection run.
#[derive(Clone, Debug)]
pub struct RadmmState<T: Real> {
    pub x: Vec<Complex<T>>,
    pub v: Vec<Vec<Complex<T>>>,
    pub lambda: Vec<Complex<T>>,
    /// Last CG solution `R_X^{-1} q_X`, the warm start of the next solve.
    pub s_cache: Option<Vec<Complex<T>>>,
    pub iter: usize,
}

/// Algorithm parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadmmParams<T> {
    pub mu: T,
    pub beta: Vec<T>,
    pub iters: usize,
    /// CG iteration cap for the first (cold-start) solve.
    pub cg_iters_first: usize,
    /// CG iteration cap for warm-started solves.
    pub cg_iters_rest: usize,
    pub cg_tol: T,
    pub curvature: Curvature<T>,
}

impl<T: Real> RadmmParams<T> {
    /// `mu = 2`, `beta_q` at half the convexity limit, 50 iterations.
    pub fn default_for(c: &Constellation<T>) -> Self {
        Self::with_mu(c, T::of(2.0))
    }

    pub fn with_mu(c: &Constellation<T>, mu: T) -> Self {
        Self {
            mu,
            beta: default_weights(mu, c),
            iters: 50,
            cg_iters_first: 200,
            cg_iters_rest: 200,
            cg_tol: T::of(1e-8),
            curvature: Curvature::Auto,
        }
    }

    pub fn validate(&self, c: &Constellation<T>) -> Result<()> {
        if self.beta.len() != c.bits_per_dimension() {
            return Err(dims(format!(
                "need {} beta values, got {}",
                c.bits_per_dimension(),
                self.beta.len()
            )));
        }
        check_denominators(self.mu, &self.beta, c.alpha())
    }
}

/// `w_q = penalty 4^{q-1} / (4 alpha^2)`, half the convexity limit.
pub fn default_weights<T: Real>(penalty: T, c: &Constellation<T>) -> Vec<T> {
    let a2 = c.alpha() * c.alpha();
    (0..c.bits_per_dimension())
        .map(|q| penalty * T::of_usize(1 << (2 * q)) / (T::of(4.0) * a2))
        .collect()
}

/// One unfolded layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadmmNetLayer<T> {
    pub mu: T,
    pub beta: Vec<T>,
    pub eps: T,
    pub relax: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadmmNetParams<T: Real> {
    pub layers: Vec<RadmmNetLayer<T>>,
    pub w: RealMatrix<T>,
    /// CG iterations of the first layer (`I_CG`); later layers run one.
    pub cg_iters_first: usize,
}

impl<T: Real> RadmmNetParams<T> {
    /// Untrained network: algorithm defaults in every layer, `W = I`.
    pub fn untrained(m: usize, c: &Constellation<T>, layers: usize, eps: T) -> Self {
        let p = RadmmParams::default_for(c);
        Self::from_algorithm(&p, m, layers, eps)
    }

    pub fn from_algorithm(p: &RadmmParams<T>, m: usize, layers: usize, eps: T) -> Self {
        Self {
            layers: (0..layers)
                .map(|_| RadmmNetLayer {
                    mu: p.mu,
                    beta: p.beta.clone(),
                    eps,
                    relax: T::one(),
                })
                .collect(),
            w: RealMatrix::identity(m),
            cg_iters_first: 15,
        }
    }

    pub fn validate(&self, c: &Constellation<T>) -> Result<()> {
        for layer in &self.layers {
            if layer.beta.len() != c.bits_per_dimension() {
                return Err(dims("layer beta length differs from Q"));
            }
            check_denominators(layer.mu, &layer.beta, c.alpha())?;
        }
        if !self.w.as_row_major().iter().all(|v| v.is_finite()) {
            return Err(dims("filter W has non-finite entries"));
        }
        Ok(())
    }
}

/// Projected Gauss-Seidel update of all bit planes.
pub fn v_update<T: Real>(
    state: &mut RadmmState<T>,
    x_ref: &[Complex<T>],
    lambda_ref: &[Complex<T>],
    mu: T,
    beta: &[T],
    c: &Constellation<T>,
) -> Result<()> {
    bit_plane_sweep(&mut state.v, x_ref, lambda_ref, mu, beta, c)
}

/// Linear and quadratic terms of the majorizer at `x_prev`.
#[derive(Clone, Debug)]
pub struct Surrogate<T: Real> {
    pub d: Vec<Complex<T>>,
    pub f: ComplexMatrix<T>,
    /// `s ~= R_X^{-1} q_X`.
    pub s: Vec<Complex<T>>,
    /// `R_X` at `x_prev`.
    pub r: ComplexMatrix<T>,
    pub cg_iters: usize,
}

/// Builds `R_X, q_X` at `x_prev`, solves for `s` by CG from `s_prev`
/// (zero when absent), and contracts `A = y s^H`, `B = s s^H` with `W`.
#[allow(clippy::too_many_arguments)]
pub fn mm_surrogate<T: Real>(
    work: &RobustMlWork<T>,
    x_prev: &[Complex<T>],
    s_prev: Option<&[Complex<T>]>,
    y: &[Complex<T>],
    w: &RealMatrix<T>,
    cg_iters: usize,
    cg_tol: T,
) -> Result<Surrogate<T>> {
    if w.rows() != work.m() {
        return Err(dims("filter W must be M x M"));
    }
    let r = work.r_x(x_prev);
    let q = work.q_x(x_prev, y);
    let zero;
    let s0 = match s_prev {
        Some(s) => s,
        None => {
            zero = vec![czero(); q.len()];
            &zero
        }
    };
    let sol = cg_solve(&r, &q, s0, cg_iters, cg_tol)?;
    let scale = T::one() / work.sigma2();
    let d = block_contract_rows_outer(y, &sol.s, w, scale)?;
    let f = block_contract_outer(&sol.s, w, scale)?;
    Ok(Surrogate {
        d,
        f,
        s: sol.s,
        r,
        cg_iters: sol.iters_used,
    })
}

/// Exact log-det curvature `C = (1/s2) [tr block_{k',k}(R^{-1})]_{k,k'}`.
pub fn curvature_matrix<T: Real>(
    r: &ComplexMatrix<T>,
    m: usize,
    sigma2: T,
) -> Result<ComplexMatrix<T>> {
    let r_inv = HermitianFactor::new(r)?.inverse();
    let mut c = block_contract(&r_inv, &RealMatrix::identity(m), T::one() / sigma2)?;
    c.symmetrize();
    Ok(c)
}

/// Curvature term handed to [`x_update`].
#[derive(Clone, Copy, Debug)]
pub enum XCurvature<'a, T: Real> {
    /// `(2(C + F) + mu I)`.
    Exact(&'a ComplexMatrix<T>),
    /// `(2F + (eps + mu) I)`.
    Eps(T),
}

/// `x = (2(C + F) + mu I)^{-1} (2d - mu psi)` or the `eps` variant.
pub fn x_update<T: Real>(
    d: &[Complex<T>],
    f: &ComplexMatrix<T>,
    curvature: XCurvature<'_, T>,
    mu: T,
    psi: &[Complex<T>],
) -> Result<Vec<Complex<T>>> {
    let two = T::of(2.0);
    let mut a = match curvature {
        XCurvature::Exact(c) => {
            let mut a = (f + c).scale(two);
            a.add_to_diagonal(mu);
            a
        }
        XCurvature::Eps(eps) => {
            let mut a = f.scale(two);
            a.add_to_diagonal(eps + mu);
            a
        }
    };
    a.symmetrize();
    let b: Vec<Complex<T>> = d
        .iter()
        .zip(psi)
        .map(|(di, pi)| di * two - pi * mu)
        .collect();
    HermitianFactor::new(&a)?.solve_vec(&b)
}

#[derive(Clone, Copy, Debug)]
enum LayerCurvature<T> {
    Exact,
    FirstBound,
    Eps(T),
}

struct LayerSpec<'a, T: Real> {
    mu: T,
    beta: &'a [T],
    curvature: LayerCurvature<T>,
    relax: T,
    cg_iters: usize,
    cg_tol: T,
}

/// Per-block precomputation for repeated detections with one CSI belief.
#[derive(Clone, Debug)]
pub struct RadmmDetector<T: Real> {
    work: RobustMlWork<T>,
    h_mat: ComplexMatrix<T>,
    sigma_row: ComplexMatrix<T>,
    sigma2: T,
    c: Constellation<T>,
}

impl<T: Real> RadmmDetector<T> {
    pub fn new(belief: &CsiBelief<T>, sigma2: T, c: &Constellation<T>) -> Result<Self> {
        Ok(Self {
            work: RobustMlWork::new(belief.m(), belief.h_hat(), belief.sigma_h(), sigma2)?,
            h_mat: belief.h_mat().clone(),
            sigma_row: belief.sigma_row().clone(),
            sigma2,
            c: c.clone(),
        })
    }

    pub fn work(&self) -> &RobustMlWork<T> {
        &self.work
    }

    /// Initial iterate: robust MMSE point, planes of its slice, zero duals.
    pub fn initial_state(&self, y: &[Complex<T>]) -> Result<RadmmState<T>> {
        let x = robust_mmse(y, &self.h_mat, &self.sigma_row, self.sigma2)?;
        let v = self.c.decompose(&self.c.slice(&x))?;
        Ok(RadmmState {
            lambda: vec![czero(); x.len()],
            x,
            v,
            s_cache: None,
            iter: 0,
        })
    }

    /// Algorithm mode.
    pub fn detect(&self, y: &[Complex<T>], p: &RadmmParams<T>) -> Result<Detection<T>> {
        p.validate(&self.c)?;
        let curvature = match p.curvature {
            Curvature::Exact => LayerCurvature::Exact,
            Curvature::FirstBound => LayerCurvature::FirstBound,
            Curvature::Fixed(e) => LayerCurvature::Eps(e),
            Curvature::Auto if self.work.m() * self.work.k() <= EXACT_CURVATURE_LIMIT => {
                LayerCurvature::Exact
            }
            Curvature::Auto => LayerCurvature::FirstBound,
        };
        let layers = (0..p.iters).map(|i| LayerSpec {
            mu: p.mu,
            beta: &p.beta,
            curvature,
            relax: T::one(),
            cg_iters: if i == 0 {
                p.cg_iters_first
            } else {
                p.cg_iters_rest
            },
            cg_tol: p.cg_tol,
        });
        self.run(y, &RealMatrix::identity(self.work.m()), layers)
    }

    /// Unfolded network mode.
    pub fn forward(&self, y: &[Complex<T>], p: &RadmmNetParams<T>) -> Result<Detection<T>> {
        p.validate(&self.c)?;
        let layers = p.layers.iter().enumerate().map(|(i, l)| LayerSpec {
            mu: l.mu,
            beta: &l.beta,
            curvature: LayerCurvature::Eps(l.eps),
            relax: l.relax,
            cg_iters: if i == 0 { p.cg_iters_first } else { 1 },
            cg_tol: T::zero(),
        });
        self.run(y, &p.w, layers)
    }

    /// Spectral bound `2 lambda_max(C)` at the initial iterate.
    pub fn initial_eps(&self, y: &[Complex<T>]) -> Result<T> {
        let st = self.initial_state(y)?;
        let c = curvature_matrix(&self.work.r_x(&st.x), self.work.m(), self.sigma2)?;
        Ok(T::of(2.0) * spectral_upper_bound(&c))
    }

    fn run<'a, I>(&self, y: &[Complex<T>], w: &RealMatrix<T>, layers: I) -> Result<Detection<T>>
    where
        I: Iterator<Item = LayerSpec<'a, T>>,
    {
        if y.len() != self.work.m() {
            return Err(dims("observation length differs from M"));
        }
        let c = &self.c;
        let mut st = self.initial_state(y)?;
        let mut diag = Diagnostics {
            initial_residual: consensus_residual(c, &st.v, &st.x),
            factorizations: 1,
            ..Diagnostics::default()
        };
        let mut frozen_eps: Option<T> = None;
        for layer in layers {
            let x_prev = st.x.clone();
            let lambda_prev = st.lambda.clone();
            v_update(&mut st, &x_prev, &lambda_prev, layer.mu, layer.beta, c)?;
            let sur = mm_surrogate(
                &self.work,
                &x_prev,
                st.s_cache.as_deref(),
                y,
                w,
                layer.cg_iters,
                layer.cg_tol,
            )?;
            let z = relaxed_target(c, &st.v, layer.relax, &x_prev);
            let psi: Vec<Complex<T>> = lambda_prev.iter().zip(&z).map(|(l, zi)| l - zi).collect();
            let c_exact;
            let curv = match layer.curvature {
                LayerCurvature::Exact => {
                    c_exact = curvature_matrix(&sur.r, self.work.m(), self.sigma2)?;
                    diag.factorizations += 1;
                    XCurvature::Exact(&c_exact)
                }
                LayerCurvature::Eps(e) => XCurvature::Eps(e),
                LayerCurvature::FirstBound => {
                    let e = match frozen_eps {
                        Some(e) => e,
                        None => {
                            let c0 = curvature_matrix(&sur.r, self.work.m(), self.sigma2)?;
                            diag.factorizations += 1;
                            let e = T::of(2.0) * spectral_upper_bound(&c0);
                            frozen_eps = Some(e);
                            e
                        }
                    };
                    XCurvature::Eps(e)
                }
            };
            if let XCurvature::Eps(e) = curv {
                diag.eps_used.push(e);
            }
            st.x = x_update(&sur.d, &sur.f, curv, layer.mu, &psi)?;
            diag.factorizations += 1;
            for ((l, xi), zi) in st.lambda.iter_mut().zip(&st.x).zip(&z) {
                *l += xi - zi;
            }
            st.s_cache = Some(sur.s);
            st.iter += 1;
            diag.cg_iterations.push(sur.cg_iters);
            diag.consensus_residual
                .push(consensus_residual(c, &st.v, &st.x));
        }
        let x_hard = c.slice(&st.x);
        Ok(Detection {
            x_soft: st.x,
            x_hard,
            diagnostics: diag,
        })
    }
}

/// Runs the algorithm for one observation.
pub fn radmm_detect<T: Real>(
    y: &[Complex<T>],
    belief: &CsiBelief<T>,
    sigma2: T,
    params: &RadmmParams<T>,
    c: &Constellation<T>,
) -> Result<Detection<T>> {
    RadmmDetector::new(belief, sigma2, c)?.detect(y, params)
}

/// Runs the unfolded network for one observation.
pub fn radmmnet_forward<T: Real>(
    y: &[Complex<T>],
    belief: &CsiBelief<T>,
    sigma2: T,
    params: &RadmmNetParams<T>,
    c: &Constellation<T>,
) -> Result<Detection<T>> {
    RadmmDetector::new(belief, sigma2, c)?.forward(y, params)
}
