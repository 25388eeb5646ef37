mod common;

use common::*;
use rand::Rng;
use robust_mimo::baseline::{mismatched_ml, RobustMlWork};
use robust_mimo::channel::CsiBelief;
use robust_mimo::detection::consensus_residual;
use robust_mimo::numerics::{spectral_upper_bound, ComplexMatrix, RealMatrix};
use robust_mimo::radmm::{
    curvature_matrix, default_weights, mm_surrogate, v_update, x_update, Curvature, RadmmDetector,
    RadmmNetParams, RadmmParams, RadmmState, XCurvature,
};
use robust_mimo::sysmodel::Constellation;
use robust_mimo::C64;

fn logdet(a: &ComplexMatrix<f64>) -> f64 {
    to_na(a).determinant().re.ln()
}

fn quad(x: &[C64], a: &ComplexMatrix<f64>) -> f64 {
    x.iter()
        .zip(a.mul_vec(x))
        .map(|(xi, ai)| (xi.conj() * ai).re)
        .sum()
}

fn inv_quad(q: &[C64], r: &ComplexMatrix<f64>) -> f64 {
    let qv = nalgebra::DVector::from_vec(q.to_vec());
    qv.dotc(&to_na(r).lu().solve(&qv).unwrap()).re
}

fn random_belief(
    r: &mut robust_mimo::rng::Stream,
    m: usize,
    k: usize,
    scale: f64,
) -> CsiBelief<f64> {
    let sigma = random_hpd(r, m * k, 0.5).scale(scale);
    CsiBelief::new(m, k, gaussian_vec(r, m * k), sigma).unwrap()
}

fn state(v: Vec<Vec<C64>>) -> RadmmState<f64> {
    let k = v[0].len();
    RadmmState {
        x: vec![c(0.0, 0.0); k],
        v,
        lambda: vec![c(0.0, 0.0); k],
        s_cache: None,
        iter: 0,
    }
}

#[test]
fn v_update_matches_direct_formula_for_two_planes() {
    let mut r = rng(30);
    let cst = Constellation::<f64>::new(2).unwrap();
    let a = cst.alpha();
    let clamp = |z: C64| c(z.re.clamp(-1.0, 1.0), z.im.clamp(-1.0, 1.0));
    for _ in 0..50 {
        let k = 3;
        let (x, lam) = (gaussian_vec(&mut r, k), gaussian_vec(&mut r, k));
        let old = vec![gaussian_vec(&mut r, k), gaussian_vec(&mut r, k)];
        let mu = uniform(&mut r, 0.5, 4.0);
        let b1 = uniform(&mut r, 0.05, 0.9) * mu / (2.0 * a * a);
        let b2 = uniform(&mut r, 0.05, 0.9) * 4.0 * mu / (2.0 * a * a);
        let mut st = state(old.clone());
        v_update(&mut st, &x, &lam, mu, &[b1, b2], &cst).unwrap();
        for i in 0..k {
            let v1 = clamp((a * (x[i] + lam[i]) - 2.0 * old[1][i]) * mu / (mu - 2.0 * a * a * b1));
            let v2 = clamp((a * (x[i] + lam[i]) - v1) * 2.0 * mu / (4.0 * mu - 2.0 * a * a * b2));
            assert!((st.v[0][i] - v1).norm() < 1e-12 && (st.v[1][i] - v2).norm() < 1e-12);
        }
    }
}

#[test]
fn v_update_single_bit_and_zero_cases() {
    let cst = Constellation::<f64>::qpsk();
    let a = cst.alpha();
    let x = vec![c(0.3, -0.2), c(2.0, -3.0)];
    let lam = vec![c(0.1, 0.1), c(0.0, 0.0)];
    let mut st = state(vec![vec![c(0.0, 0.0); 2]]);
    v_update(&mut st, &x, &lam, 1.0, &[1e-12], &cst).unwrap();
    assert!((st.v[0][0] - c(0.4 * a, -0.1 * a)).norm() < 1e-9);
    assert_eq!(st.v[0][1], c(1.0, -1.0));
    let mut st = state(vec![vec![c(0.5, 0.5); 2]]);
    let zero = vec![c(0.0, 0.0); 2];
    v_update(&mut st, &zero, &zero, 1.0, &[0.2], &cst).unwrap();
    assert_eq!(st.v[0], zero);
    assert!(v_update(&mut st, &x, &lam, 1.0, &[1.0], &cst).is_err());
}

#[test]
fn v_iterates_stay_in_box() {
    let mut r = rng(31);
    for q in 1..=3 {
        let cst = Constellation::<f64>::new(q).unwrap();
        let mut st = state((0..q).map(|_| vec![c(0.0, 0.0); 4]).collect());
        for _ in 0..100 {
            let x: Vec<C64> = gaussian_vec(&mut r, 4).iter().map(|z| z * 5.0).collect();
            let lam = gaussian_vec(&mut r, 4);
            v_update(&mut st, &x, &lam, 2.0, &default_weights(2.0, &cst), &cst).unwrap();
            assert!(st
                .v
                .iter()
                .flatten()
                .all(|z| z.re.abs() <= 1.0 && z.im.abs() <= 1.0));
        }
    }
}

#[test]
fn surrogate_terms_match_dense_construction() {
    let mut r = rng(32);
    let (m, k, s2) = (2, 2, 0.4);
    let b = random_belief(&mut r, m, k, 0.1);
    let work = RobustMlWork::new(m, b.h_hat(), b.sigma_h(), s2).unwrap();
    let (x0, y) = (gaussian_vec(&mut r, k), gaussian_vec(&mut r, m));
    let sur = mm_surrogate(&work, &x0, None, &y, &RealMatrix::identity(m), 100, 1e-14).unwrap();
    // A = y s^H is M x MK; d_k is the trace of its k-th M x M block.
    let a = ComplexMatrix::from_fn(m, m * k, |i, j| y[i] * sur.s[j].conj());
    let bm = ComplexMatrix::from_fn(m * k, m * k, |i, j| sur.s[i] * sur.s[j].conj());
    for kk in 0..k {
        let tr: C64 = (0..m).map(|i| a[(i, kk * m + i)]).sum();
        assert!((sur.d[kk] - tr / s2).norm() < 1e-12);
        for kp in 0..k {
            // x^H F x = ||sum_k x_k s_k||^2, so F[k][k'] = s_k^H s_k'.
            let tr: C64 = (0..m).map(|i| bm[(kp * m + i, kk * m + i)]).sum();
            assert!((sur.f[(kk, kp)] - tr / s2).norm() < 1e-12);
        }
    }
    let direct = to_na(&work.r_x(&x0))
        .lu()
        .solve(&nalgebra::DVector::from_vec(work.q_x(&x0, &y)))
        .unwrap();
    assert!(max_abs_diff(&sur.s, direct.as_slice()) < 1e-9);
}

#[test]
fn zero_data_gives_zero_surrogate() {
    let mut r = rng(33);
    let (m, k) = (3, 2);
    let sigma = random_hpd(&mut r, m * k, 0.5).scale(0.1);
    let work = RobustMlWork::new(m, &vec![c(0.0, 0.0); m * k], &sigma, 0.3).unwrap();
    let sur = mm_surrogate(
        &work,
        &gaussian_vec(&mut r, k),
        None,
        &[c(0.0, 0.0); 3],
        &RealMatrix::identity(m),
        20,
        0.0,
    )
    .unwrap();
    assert!(sur.d.iter().all(|z| z.norm() == 0.0));
    assert_eq!(sur.f.max_abs(), 0.0);
}

#[test]
fn majorization_and_minorization_are_tight_at_anchor() {
    let mut r = rng(34);
    let (m, k, s2) = (4, 2, 0.3);
    let mut worst_gap = 0.0f64;
    for _ in 0..100 {
        let b = random_belief(&mut r, m, k, 0.1);
        let work = RobustMlWork::new(m, b.h_hat(), b.sigma_h(), s2).unwrap();
        let y = gaussian_vec(&mut r, m);
        let (x0, x) = (gaussian_vec(&mut r, k), gaussian_vec(&mut r, k));
        let r0 = work.r_x(&x0);
        let cm = curvature_matrix(&r0, m, s2).unwrap();
        let sur = mm_surrogate(&work, &x0, None, &y, &RealMatrix::identity(m), 200, 1e-15).unwrap();
        let sig_inv = work.sigma_h_inv();
        let s0 = &sur.s;
        let konst = 2.0
            * s0.iter()
                .zip(sig_inv.mul_vec(b.h_hat()))
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
            - quad(s0, sig_inv);
        let upper = |x: &[C64]| logdet(&r0) + quad(x, &cm) - quad(&x0, &cm);
        let lower = |x: &[C64]| {
            2.0 * x
                .iter()
                .zip(&sur.d)
                .map(|(xi, di)| (xi.conj() * di).re)
                .sum::<f64>()
                - quad(x, &sur.f)
                + konst
        };
        let ld = logdet(&work.r_x(&x));
        let iq = inv_quad(&work.q_x(&x, &y), &work.r_x(&x));
        assert!(ld <= upper(&x) + 1e-9, "log-det bound");
        assert!(iq >= lower(&x) - 1e-9, "tangent bound");
        let iq0 = inv_quad(&work.q_x(&x0, &y), &r0);
        worst_gap = worst_gap
            .max((upper(&x0) - logdet(&r0)).abs())
            .max((lower(&x0) - iq0).abs());
    }
    assert!(worst_gap <= 1e-8, "{worst_gap}");
}

#[test]
fn spectral_eps_dominates_curvature_and_f_is_psd() {
    let mut r = rng(35);
    for _ in 0..30 {
        let (m, k) = (4, 3);
        let b = random_belief(&mut r, m, k, 0.2);
        let work = RobustMlWork::new(m, b.h_hat(), b.sigma_h(), 0.2).unwrap();
        let x0 = gaussian_vec(&mut r, k);
        let cm = curvature_matrix(&work.r_x(&x0), m, 0.2).unwrap();
        let mut gap = cm.scale(-1.0);
        gap.add_to_diagonal(spectral_upper_bound(&cm));
        assert!(eigenvalues(&gap)[0] >= -1e-9);
        let sur = mm_surrogate(
            &work,
            &x0,
            None,
            &gaussian_vec(&mut r, m),
            &RealMatrix::identity(m),
            50,
            1e-12,
        )
        .unwrap();
        assert!(eigenvalues(&sur.f)[0] >= -1e-9);
    }
}

#[test]
fn x_update_solves_its_system() {
    let mut r = rng(36);
    let k = 4;
    let g = gaussian_matrix(&mut r, k, k);
    let f = g.matmul(&g.adjoint());
    let cm = random_hpd(&mut r, k, 0.1);
    let (d, psi) = (gaussian_vec(&mut r, k), gaussian_vec(&mut r, k));
    let mu = 1.7;
    let rhs: Vec<C64> = d.iter().zip(&psi).map(|(a, b)| 2.0 * a - mu * b).collect();
    for (curv, mut a) in [
        (XCurvature::Exact(&cm), (&f + &cm).scale(2.0)),
        (XCurvature::Eps(0.9), f.scale(2.0)),
    ] {
        a.add_to_diagonal(if matches!(curv, XCurvature::Eps(_)) {
            0.9 + mu
        } else {
            mu
        });
        let x = x_update(&d, &f, curv, mu, &psi).unwrap();
        assert!(max_abs_diff(&a.mul_vec(&x), &rhs) <= 1e-9);
    }
    let zero = ComplexMatrix::zeros(k, k);
    let x = x_update(&vec![c(0.0, 0.0); k], &zero, XCurvature::Eps(0.0), mu, &psi).unwrap();
    assert!(max_abs_diff(&x, &psi.iter().map(|p| -p).collect::<Vec<_>>()) < 1e-14);
    let a = x_update(
        &d,
        &f,
        XCurvature::Exact(&ComplexMatrix::scaled_identity(k, 0.6)),
        mu,
        &psi,
    )
    .unwrap();
    let b = x_update(&d, &f, XCurvature::Eps(1.2), mu, &psi).unwrap();
    assert!(max_abs_diff(&a, &b) < 1e-12);
}

/// Algorithm loop rebuilt from the public pieces, checking the dual update.
#[test]
fn detector_equals_hand_rolled_iteration() {
    let mut r = rng(37);
    let cst = Constellation::<f64>::new(2).unwrap();
    let (m, k, s2) = (4, 2, 0.2);
    let b = random_belief(&mut r, m, k, 0.05);
    let y = gaussian_vec(&mut r, m);
    let det = RadmmDetector::new(&b, s2, &cst).unwrap();
    let mut p = RadmmParams::with_mu(&cst, 3.0);
    p.iters = 12;
    p.curvature = Curvature::Exact;
    let out = det.detect(&y, &p).unwrap();

    let mut st = det.initial_state(&y).unwrap();
    for i in 0..p.iters {
        let (xp, lp) = (st.x.clone(), st.lambda.clone());
        v_update(&mut st, &xp, &lp, p.mu, &p.beta, &cst).unwrap();
        let w = RealMatrix::identity(m);
        let sur = mm_surrogate(
            det.work(),
            &xp,
            st.s_cache.as_deref(),
            &y,
            &w,
            200,
            p.cg_tol,
        )
        .unwrap();
        let z = cst.reconstruct(&st.v).unwrap();
        let psi: Vec<C64> = lp.iter().zip(&z).map(|(l, zi)| l - zi).collect();
        let cm = curvature_matrix(&sur.r, m, s2).unwrap();
        st.x = x_update(&sur.d, &sur.f, XCurvature::Exact(&cm), p.mu, &psi).unwrap();
        let step: Vec<C64> = st.x.iter().zip(&z).map(|(x, z)| x - z).collect();
        for (l, s) in st.lambda.iter_mut().zip(&step) {
            *l += s;
        }
        let dl: Vec<C64> = st.lambda.iter().zip(&lp).map(|(a, b)| a - b).collect();
        let norm = dl.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - out.diagnostics.consensus_residual[i]).abs() < 1e-9);
        assert!((norm - consensus_residual(&cst, &st.v, &st.x)).abs() < 1e-12);
        st.s_cache = Some(sur.s);
    }
    assert!(max_abs_diff(&st.x, &out.x_soft) < 1e-9);
    assert_eq!(out.x_hard, cst.slice(&out.x_soft));
}

#[test]
fn near_perfect_csi_matches_mismatched_ml() {
    let mut r = rng(38);
    let cst = Constellation::<f64>::qpsk();
    let (m, k, s2) = (4, 2, 0.01f64);
    let p = RadmmParams::default_for(&cst);
    let mut agree = 0;
    for _ in 0..1000 {
        let h = gaussian_vec(&mut r, m * k);
        let b =
            CsiBelief::new(m, k, h.clone(), ComplexMatrix::scaled_identity(m * k, 1e-6)).unwrap();
        let x: Vec<C64> = (0..k).map(|_| cst.points()[r.random_range(0..4)]).collect();
        let y: Vec<C64> = b
            .h_mat()
            .mul_vec(&x)
            .iter()
            .zip(gaussian_vec(&mut r, m))
            .map(|(a, n)| a + n * s2.sqrt())
            .collect();
        let out = RadmmDetector::new(&b, s2, &cst)
            .unwrap()
            .detect(&y, &p)
            .unwrap();
        agree += usize::from(out.x_hard == mismatched_ml(&y, b.h_mat(), &cst).unwrap());
    }
    assert!(agree >= 950, "{agree}");
}

#[test]
fn network_cg_budget_is_24() {
    let mut r = rng(39);
    let cst = Constellation::<f64>::qpsk();
    let (m, k) = (8, 4);
    let b = random_belief(&mut r, m, k, 0.02);
    let det = RadmmDetector::new(&b, 0.05, &cst).unwrap();
    let y = gaussian_vec(&mut r, m);
    let net = RadmmNetParams::untrained(m, &cst, 10, det.initial_eps(&y).unwrap());
    assert_eq!(net.cg_iters_first, 15);
    let out = det.forward(&y, &net).unwrap();
    assert_eq!(out.diagnostics.total_cg_iterations(), 24);
    assert_eq!(out.diagnostics.cg_iterations.len(), 10);
}

#[test]
fn over_relaxation_changes_output_and_unit_relax_is_neutral() {
    let mut r = rng(40);
    let cst = Constellation::<f64>::qpsk();
    let b = random_belief(&mut r, 4, 2, 0.05);
    let det = RadmmDetector::new(&b, 0.1, &cst).unwrap();
    let y = gaussian_vec(&mut r, 4);
    let base = RadmmNetParams::untrained(4, &cst, 6, det.initial_eps(&y).unwrap());
    let mut relaxed = base.clone();
    relaxed.layers.iter_mut().for_each(|l| l.relax = 1.5);
    let a = det.forward(&y, &base).unwrap().x_soft;
    let b2 = det.forward(&y, &relaxed).unwrap().x_soft;
    assert!(max_abs_diff(&a, &b2) > 1e-6);
    assert_eq!(det.forward(&y, &base).unwrap().x_soft, a);
}

#[test]
fn single_precision_tracks_double() {
    let mut r = rng(41);
    let cst64 = Constellation::<f64>::qpsk();
    let cst32 = Constellation::<f32>::qpsk();
    let (m, k) = (4, 2);
    let mut agree = 0;
    for _ in 0..200 {
        let b = random_belief(&mut r, m, k, 0.02);
        let y = gaussian_vec(&mut r, m);
        let to32 = |z: &C64| num_complex::Complex::new(z.re as f32, z.im as f32);
        let sig32 = ComplexMatrix::from_fn(m * k, m * k, |i, j| to32(&b.sigma_h()[(i, j)]));
        let b32 = CsiBelief::new(m, k, b.h_hat().iter().map(to32).collect(), sig32).unwrap();
        let y32: Vec<_> = y.iter().map(to32).collect();
        let x64 = RadmmDetector::new(&b, 0.1, &cst64)
            .unwrap()
            .detect(&y, &RadmmParams::default_for(&cst64))
            .unwrap();
        let mut p32 = RadmmParams::default_for(&cst32);
        p32.cg_tol = 1e-5;
        let x32 = RadmmDetector::new(&b32, 0.1f32, &cst32)
            .unwrap()
            .detect(&y32, &p32)
            .unwrap();
        assert!(x32
            .x_soft
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite()));
        let same =
            x64.x_hard.iter().zip(&x32.x_hard).all(|(a, b)| {
                (a.re as f32 - b.re).abs() < 1e-4 && (a.im as f32 - b.im).abs() < 1e-4
            });
        agree += usize::from(same);
    }
    assert!(agree >= 190, "{agree}");
}
