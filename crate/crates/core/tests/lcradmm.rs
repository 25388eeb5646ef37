mod common;

use common::*;
use rand::Rng;
use robust_mimo::baseline::mismatched_ml;
use robust_mimo::channel::CsiBelief;
use robust_mimo::lcradmm::{lc_precompute, lc_x_update, u_update, LcDetector, LcParams};
use robust_mimo::numerics::ComplexMatrix;
use robust_mimo::radmm::default_weights;
use robust_mimo::sysmodel::Constellation;
use robust_mimo::C64;

fn residual(phi: &ComplexMatrix<f64>, x: &[C64], gamma: &[C64]) -> f64 {
    phi.mul_vec(x)
        .iter()
        .zip(gamma)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn solve(a: &ComplexMatrix<f64>, b: &[C64]) -> Vec<C64> {
    to_na(a)
        .lu()
        .solve(&nalgebra::DVector::from_vec(b.to_vec()))
        .unwrap()
        .as_slice()
        .to_vec()
}

#[test]
fn phi_is_hermitian_positive_definite() {
    let mut r = rng(50);
    for _ in 0..20 {
        let (m, k) = (6, 3);
        let h = gaussian_matrix(&mut r, m, k);
        let s = random_psd(&mut r, m, 2).scale(0.1);
        let pre = lc_precompute(&h, &s, 0.3, 2.0).unwrap();
        let phi = pre.phi();
        assert!(mat_max_diff(phi, &phi.adjoint()) <= 1e-12);
        assert!(eigenvalues(phi)[0] > 0.0);
        let mut cr = s.clone();
        cr.add_to_diagonal(0.3);
        let mut dense = h
            .adjoint()
            .matmul(&from_na(&to_na(&cr).try_inverse().unwrap()))
            .matmul(&h);
        dense.add_to_diagonal(1.0);
        assert!(mat_max_diff(phi, &dense) <= 1e-10);
    }
}

#[test]
fn no_uncertainty_precompute() {
    let mut r = rng(51);
    let h = gaussian_matrix(&mut r, 4, 2);
    let pre = lc_precompute(&h, &ComplexMatrix::zeros(4, 4), 0.5, 3.0).unwrap();
    let mut want = h.adjoint().matmul(&h).scale(2.0);
    want.add_to_diagonal(1.5);
    assert!(mat_max_diff(pre.phi(), &want) <= 1e-12);
    let y = gaussian_vec(&mut r, 4);
    let g0: Vec<C64> = h.adjoint_mul_vec(&y).iter().map(|v| v * 2.0).collect();
    assert!(max_abs_diff(&pre.g0(&y).unwrap(), &g0) <= 1e-12);
}

#[test]
fn u_update_formulas() {
    let mut r = rng(52);
    let clamp = |z: C64| c(z.re.clamp(-1.0, 1.0), z.im.clamp(-1.0, 1.0));
    let q1 = Constellation::<f64>::qpsk();
    let a = q1.alpha();
    let (x, th) = (gaussian_vec(&mut r, 3), gaussian_vec(&mut r, 3));
    let (delta, kappa) = (2.0, 0.3);
    let mut u = vec![vec![c(0.0, 0.0); 3]];
    u_update(&mut u, &x, &th, delta, &[kappa], &q1).unwrap();
    for i in 0..3 {
        let want = clamp((x[i] + th[i]) * (delta * a / (delta - 2.0 * a * a * kappa)));
        assert!((u[0][i] - want).norm() < 1e-12);
    }

    let q2 = Constellation::<f64>::new(2).unwrap();
    let a = q2.alpha();
    let kap = default_weights(delta, &q2);
    let old = vec![gaussian_vec(&mut r, 3), gaussian_vec(&mut r, 3)];
    let mut u = old.clone();
    u_update(&mut u, &x, &th, delta, &kap, &q2).unwrap();
    for i in 0..3 {
        let u1 =
            clamp((a * (x[i] + th[i]) - 2.0 * old[1][i]) * delta / (delta - 2.0 * a * a * kap[0]));
        let u2 =
            clamp((a * (x[i] + th[i]) - u1) * 2.0 * delta / (4.0 * delta - 2.0 * a * a * kap[1]));
        assert!((u[0][i] - u1).norm() < 1e-12 && (u[1][i] - u2).norm() < 1e-12);
    }

    let zero = vec![c(0.0, 0.0); 3];
    let mut u = vec![vec![c(0.4, 0.4); 3]];
    u_update(&mut u, &zero, &zero, delta, &[kappa], &q1).unwrap();
    assert_eq!(u[0], zero);
}

#[test]
fn x_update_residual_and_limits() {
    let mut r = rng(53);
    let cst = Constellation::<f64>::new(2).unwrap();
    let (m, k) = (6, 3);
    let h = gaussian_matrix(&mut r, m, k);
    let s = random_psd(&mut r, m, 3).scale(0.05);
    let y = gaussian_vec(&mut r, m);
    let u = vec![gaussian_vec(&mut r, k), gaussian_vec(&mut r, k)];
    let th = gaussian_vec(&mut r, k);
    let x_prev = gaussian_vec(&mut r, k);

    let pre = lc_precompute(&h, &s, 0.2, 2.0).unwrap();
    let g0 = pre.g0(&y).unwrap();
    for relax in [1.0, 1.4] {
        let (x, gamma, _) = lc_x_update(&pre, &g0, &u, &th, relax, &x_prev, &cst).unwrap();
        assert!(residual(pre.phi(), &x, &gamma) <= 1e-9);
    }
    let zeros = vec![vec![c(0.0, 0.0); k]; 2];
    let zk = vec![c(0.0, 0.0); k];
    let (x, _, _) = lc_x_update(&pre, &g0, &zeros, &zk, 1.0, &x_prev, &cst).unwrap();
    assert!(max_abs_diff(&x, &solve(pre.phi(), &g0)) <= 1e-10);

    let big = lc_precompute(&h, &s, 0.2, 1e6).unwrap();
    let (x, _, _) = lc_x_update(&big, &big.g0(&y).unwrap(), &u, &th, 1.0, &x_prev, &cst).unwrap();
    let want: Vec<C64> = cst
        .reconstruct(&u)
        .unwrap()
        .iter()
        .zip(&th)
        .map(|(z, t)| z - t)
        .collect();
    assert!(max_abs_diff(&x, &want) <= 1e-3);
}

#[test]
fn vanishing_delta_gives_weighted_least_squares() {
    let mut r = rng(54);
    let (m, k) = (6, 2);
    let h = gaussian_matrix(&mut r, m, k);
    let pre = lc_precompute(&h, &ComplexMatrix::zeros(m, m), 0.1, 1e-8).unwrap();
    let y = gaussian_vec(&mut r, m);
    let x = pre.phi_factor().solve_vec(&pre.g0(&y).unwrap()).unwrap();
    let ls = solve(&h.adjoint().matmul(&h), &h.adjoint_mul_vec(&y));
    assert!(max_abs_diff(&x, &ls) <= 1e-4);
}

fn belief(r: &mut robust_mimo::rng::Stream, m: usize, k: usize) -> CsiBelief<f64> {
    let s = random_hpd(r, m * k, 0.5).scale(0.02);
    CsiBelief::new(m, k, gaussian_vec(r, m * k), s).unwrap()
}

#[test]
fn single_factorization_and_box_iterates() {
    let mut r = rng(55);
    let cst = Constellation::<f64>::new(2).unwrap();
    let b = belief(&mut r, 4, 2);
    for layers in [1, 10, 40] {
        let p = LcParams::default_for(&cst, layers);
        let det = LcDetector::new(&b, 0.1, p.delta, &cst).unwrap();
        let out = det.detect(&gaussian_vec(&mut r, 4), &p).unwrap();
        assert_eq!(out.diagnostics.factorizations, 1);
        assert_eq!(out.diagnostics.consensus_residual.len(), layers);
    }
}

/// Layer loop rebuilt from the public pieces: residual `Phi x = gamma` per
/// layer, box invariant, and agreement with the detector.
#[test]
fn network_layers_satisfy_exact_solves() {
    let mut r = rng(56);
    let cst = Constellation::<f64>::new(2).unwrap();
    let (m, k) = (6, 3);
    let b = belief(&mut r, m, k);
    let y = gaussian_vec(&mut r, m);
    let mut p = LcParams::default_for(&cst, 10);
    for (i, kap) in p.kappa.iter_mut().enumerate() {
        kap.iter_mut().for_each(|v| *v *= 0.5 + 0.05 * i as f64);
    }
    p.upsilon = (0..10).map(|i| 0.8 + 0.06 * i as f64).collect();
    let det = LcDetector::new(&b, 0.1, p.delta, &cst).unwrap();
    let out = det.detect(&y, &p).unwrap();

    let pre = det.precomp();
    let g0 = pre.g0(&y).unwrap();
    let mut x = robust_mimo::baseline::robust_mmse(&y, b.h_mat(), b.sigma_row(), 0.1).unwrap();
    let mut u = cst.decompose(&cst.slice(&x)).unwrap();
    let mut th = vec![c(0.0, 0.0); k];
    for (kap, &ups) in p.kappa.iter().zip(&p.upsilon) {
        u_update(&mut u, &x, &th, p.delta, kap, &cst).unwrap();
        assert!(u
            .iter()
            .flatten()
            .all(|z| z.re.abs() <= 1.0 && z.im.abs() <= 1.0));
        let (xn, gamma, z) = lc_x_update(pre, &g0, &u, &th, ups, &x, &cst).unwrap();
        assert!(residual(pre.phi(), &xn, &gamma) <= 1e-9);
        for ((t, a), b) in th.iter_mut().zip(&xn).zip(&z) {
            *t += a - b;
        }
        x = xn;
    }
    assert!(max_abs_diff(&x, &out.x_soft) <= 1e-12);
}

#[test]
fn consensus_residual_usually_shrinks() {
    let mut r = rng(57);
    let cst = Constellation::<f64>::qpsk();
    let p = LcParams::default_for(&cst, 10);
    let mut shrank = 0;
    for _ in 0..1000 {
        let b = belief(&mut r, 8, 4);
        let det = LcDetector::new(&b, 0.1, p.delta, &cst).unwrap();
        let xs: Vec<C64> = (0..4).map(|_| cst.points()[r.random_range(0..4)]).collect();
        let y: Vec<C64> = b
            .h_mat()
            .mul_vec(&xs)
            .iter()
            .zip(gaussian_vec(&mut r, 8))
            .map(|(a, n)| a + n * 0.1f64.sqrt())
            .collect();
        let d = det.detect(&y, &p).unwrap().diagnostics;
        shrank += usize::from(*d.consensus_residual.last().unwrap() <= d.initial_residual);
    }
    assert!(shrank >= 900, "{shrank}");
}

#[test]
fn perfect_csi_is_close_to_ml() {
    let mut r = rng(58);
    let cst = Constellation::<f64>::qpsk();
    // 10 dB; delta = 8 is the penalty used for the larger system as well.
    let (m, k, s2) = (4, 2, 0.2f64);
    let p = LcParams::constant(8.0, default_weights(8.0, &cst), 10);
    let (mut e_lc, mut e_ml) = (0usize, 0usize);
    for _ in 0..10_000 {
        let h = gaussian_vec(&mut r, m * k);
        let b = CsiBelief::new(m, k, h, ComplexMatrix::zeros(m * k, m * k)).unwrap();
        let xs: Vec<C64> = (0..k).map(|_| cst.points()[r.random_range(0..4)]).collect();
        let y: Vec<C64> = b
            .h_mat()
            .mul_vec(&xs)
            .iter()
            .zip(gaussian_vec(&mut r, m))
            .map(|(a, n)| a + n * s2.sqrt())
            .collect();
        let lc = LcDetector::new(&b, s2, p.delta, &cst)
            .unwrap()
            .detect(&y, &p)
            .unwrap()
            .x_hard;
        let ml = mismatched_ml(&y, b.h_mat(), &cst).unwrap();
        e_lc += lc.iter().zip(&xs).filter(|(a, b)| a != b).count();
        e_ml += ml.iter().zip(&xs).filter(|(a, b)| a != b).count();
    }
    println!("lcradmm errors {e_lc}, ml errors {e_ml}");
    assert!(e_ml >= 50);
    assert!((e_lc as f64) <= 1.5 * e_ml as f64);
}

#[test]
fn delta_mismatch_is_rejected() {
    let mut r = rng(59);
    let cst = Constellation::<f64>::qpsk();
    let b = belief(&mut r, 4, 2);
    let det = LcDetector::new(&b, 0.1, 2.0, &cst).unwrap();
    let p = LcParams::constant(3.0, default_weights(3.0, &cst), 5);
    assert!(det.detect(&gaussian_vec(&mut r, 4), &p).is_err());
    let bad = LcParams::constant(2.0, vec![10.0], 5);
    assert!(det.detect(&gaussian_vec(&mut r, 4), &bad).is_err());
}
