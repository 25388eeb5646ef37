//! Quick built-in oracle checks, run by the `selftest` subcommand.

use rand::Rng;

use crate::baseline::{mismatched_mmse, robust_mmse};
use crate::bench::{run_ser_cell, to_csv_string, DetectorKind, DetectorSpec, McBudget};
use crate::channel::{ChannelStatistics, CsiBelief};
use crate::error::Result;
use crate::lcradmm::{LcDetector, LcParams};
use crate::numerics::{cg_solve, hermitian_solve, ComplexMatrix};
use crate::radmm::{Curvature, RadmmDetector, RadmmNetParams, RadmmParams};
use crate::rdakf::{kf_sequential_update, KalmanBelief, SlotUpdate};
use crate::rng::{complex_normal, complex_normal_vec, derive_rng_stream, Lane, Stream};
use crate::sim::{CsiMethod, FrameSimulator, C64};
use crate::sysmodel::{Constellation, SystemConfig};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, err: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: err.is_finite() && err <= tol,
        detail: format!("max error {err:.3e} (tolerance {tol:.0e})"),
    }
}

/// `A A^H + n I` with Gaussian `A`.
pub fn random_hpd(n: usize, rng: &mut Stream) -> ComplexMatrix<f64> {
    let a = ComplexMatrix::from_fn(n, n, |_, _| complex_normal::<f64, _>(rng));
    let mut r = a.matmul(&a.adjoint());
    r.add_to_diagonal(n as f64);
    r.symmetrize();
    r
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn check_cg(rng: &mut Stream) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(1..=32);
        let r = random_hpd(n, rng);
        let q: Vec<C64> = complex_normal_vec(rng, n);
        let cg = cg_solve(&r, &q, &vec![C64::new(0.0, 0.0); n], n, 1e-12)?;
        let direct = hermitian_solve(&r, &ComplexMatrix::from_column_major(n, 1, q))?;
        let num = max_abs_diff(&cg.s, direct.as_slice());
        let den = direct
            .as_slice()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        worst = worst.max(num / den);
    }
    Ok(outcome("cg_vs_cholesky", worst, 1e-7))
}

/// One stacked update of all slots versus the slot-by-slot recursion.
fn check_kalman(rng: &mut Stream) -> Result<CheckOutcome> {
    let (m, k, l) = (4usize, 2usize, 5usize);
    let mk = m * k;
    let sigma = random_hpd(mk, rng).scale(0.1);
    let h0: Vec<C64> = complex_normal_vec(rng, mk);
    let mut c_z = random_hpd(m, rng).scale(0.05);
    c_z.symmetrize();
    let xs: Vec<Vec<C64>> = (0..l).map(|_| complex_normal_vec(rng, k)).collect();
    let ys: Vec<Vec<C64>> = (0..l).map(|_| complex_normal_vec(rng, m)).collect();

    let mut seq = KalmanBelief {
        h_post: h0.clone(),
        sigma_post: sigma.clone(),
        h_prior: h0.clone(),
        sigma_prior: sigma.clone(),
    };
    for (y, x) in ys.iter().zip(&xs) {
        if kf_sequential_update(&mut seq, y, x, &c_z)? == SlotUpdate::Skipped {
            return Ok(CheckOutcome {
                name: "kalman_sequential_vs_batch",
                passed: false,
                detail: "update skipped".into(),
            });
        }
    }

    let a = ComplexMatrix::from_fn(l * m, mk, |row, col| {
        let (t, i) = (row / m, row % m);
        let (kk, j) = (col / m, col % m);
        if i == j {
            xs[t][kk]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let mut s = a.matmul(&sigma).matmul(&a.adjoint());
    for t in 0..l {
        for j in 0..m {
            for i in 0..m {
                s[(t * m + i, t * m + j)] += c_z[(i, j)];
            }
        }
    }
    s.symmetrize();
    let y_all: Vec<C64> = ys.concat();
    let innov: Vec<C64> = y_all
        .iter()
        .zip(a.mul_vec(&h0))
        .map(|(y, p)| y - p)
        .collect();
    let sa = sigma.matmul(&a.adjoint());
    let w = hermitian_solve(&s, &ComplexMatrix::from_column_major(l * m, 1, innov))?;
    let h_batch: Vec<C64> = h0
        .iter()
        .zip(sa.mul_vec(w.as_slice()))
        .map(|(h, g)| h + g)
        .collect();
    let sigma_batch = &sigma - &sa.matmul(&hermitian_solve(&s, &sa.adjoint())?);
    let err = max_abs_diff(&seq.h_post, &h_batch).max(max_abs_diff(
        seq.sigma_post.as_slice(),
        sigma_batch.as_slice(),
    ));
    Ok(outcome("kalman_sequential_vs_batch", err, 1e-8))
}

fn random_belief(m: usize, k: usize, rng: &mut Stream) -> Result<CsiBelief<f64>> {
    let h: Vec<C64> = complex_normal_vec(rng, m * k);
    let sigma = random_hpd(m * k, rng).scale(0.01);
    CsiBelief::new(m, k, h, sigma)
}

fn random_observation(m: usize, rng: &mut Stream) -> Vec<C64> {
    (0..m)
        .map(|_| complex_normal::<f64, _>(rng) * 2.0)
        .collect()
}

fn check_reductions(rng: &mut Stream) -> Result<Vec<CheckOutcome>> {
    let (m, k) = (8usize, 4usize);
    let c = Constellation::<f64>::qpsk();
    let sigma2 = 0.1;
    let belief = random_belief(m, k, rng)?;
    let y = random_observation(m, rng);

    let zero = ComplexMatrix::zeros(m, m);
    let a = robust_mmse(&y, belief.h_mat(), &zero, sigma2)?;
    let b = mismatched_mmse(&y, belief.h_mat(), sigma2)?;
    let mmse = outcome(
        "robust_mmse_zero_error_reduction",
        max_abs_diff(&a, &b),
        0.0,
    );

    let det = RadmmDetector::new(&belief, sigma2, &c)?;
    let eps = det.initial_eps(&y)?;
    let mut worst = 0.0f64;
    for depth in 1..=10 {
        let mut alg = RadmmParams::default_for(&c);
        alg.iters = depth;
        alg.curvature = Curvature::Fixed(eps);
        alg.cg_iters_first = 15;
        alg.cg_iters_rest = 1;
        alg.cg_tol = 0.0;
        let net = RadmmNetParams::from_algorithm(&alg, m, depth, eps);
        let x1 = det.detect(&y, &alg)?.x_soft;
        let x2 = det.forward(&y, &net)?.x_soft;
        worst = worst.max(max_abs_diff(&x1, &x2));
    }
    let radmm = outcome("radmmnet_neutral_equals_radmm", worst, 1e-10);

    let alg = LcParams::default_for(&c, 10);
    let lc = LcDetector::new(&belief, sigma2, alg.delta, &c)?;
    let x1 = lc.detect(&y, &alg)?.x_soft;
    let net = LcParams {
        upsilon: vec![1.0; 10],
        ..alg.clone()
    };
    let x2 = lc.detect(&y, &net)?.x_soft;
    let lcr = outcome(
        "lcradmmnet_constant_equals_lcradmm",
        max_abs_diff(&x1, &x2),
        1e-10,
    );
    Ok(vec![mmse, radmm, lcr])
}

fn check_slicing(rng: &mut Stream) -> Result<CheckOutcome> {
    let mut mismatches = 0usize;
    for q in 1..=3 {
        let c = Constellation::<f64>::new(q)?;
        for _ in 0..500 {
            let z: C64 = complex_normal::<f64, _>(rng) * 1.5;
            let sliced = c.slice(&[z])[0];
            let best = c
                .points()
                .iter()
                .copied()
                .min_by(|a, b| (a - z).norm_sqr().total_cmp(&(b - z).norm_sqr()))
                .expect("non-empty alphabet");
            if (sliced - z).norm_sqr() > (best - z).norm_sqr() + 1e-12 {
                mismatches += 1;
            }
        }
    }
    Ok(CheckOutcome {
        name: "slicing_vs_nearest_point",
        passed: mismatches == 0,
        detail: format!("{mismatches} of 1500 draws not at a nearest point"),
    })
}

fn check_determinism() -> Result<CheckOutcome> {
    let sys = SystemConfig::new(4, 2, 10, 2, 5, 15.0)?;
    let stats = ChannelStatistics::kronecker_uniform(4, 2, 0.5, 0.5, 0.99)?;
    let sim = FrameSimulator::new(sys, stats, Constellation::qpsk())?;
    let det = DetectorSpec::new(DetectorKind::Lcradmm, 10, &sim.constellation);
    let budget = McBudget {
        min_symbol_errors: 100,
        max_trials: 300,
        batch: 37,
    };
    let run = |batch: usize| {
        run_ser_cell(
            &sim,
            10.0,
            5,
            CsiMethod::Lmmse,
            &det,
            McBudget { batch, ..budget },
            5,
            false,
        )
        .map(|r| to_csv_string(&[r]))
    };
    let (a, b) = (run(37)?, run(1)?);
    Ok(CheckOutcome {
        name: "ser_cell_determinism",
        passed: a == b,
        detail: if a == b {
            "identical CSV".into()
        } else {
            format!("{a:?} vs {b:?}")
        },
    })
}

/// Runs every check with a fixed seed.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = derive_rng_stream(seed, 0, Lane::Trainer);
    let mut out = vec![check_cg(&mut rng)?, check_kalman(&mut rng)?];
    out.extend(check_reductions(&mut rng)?);
    out.push(check_slicing(&mut rng)?);
    out.push(check_determinism()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all(11).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
