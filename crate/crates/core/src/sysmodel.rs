//! System configuration, square 4^Q-QAM constellations and their binary
//! bit-plane decomposition.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::scalar::{czero, Real};

/// Antenna counts, frame geometry and noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Receive antennas.
    #[serde(alias = "M")]
    pub m: usize,
    /// Single-antenna users.
    #[serde(alias = "K")]
    pub k: usize,
    /// Symbols per coherence block.
    #[serde(alias = "L")]
    pub l: usize,
    /// Pilot symbols in the first block.
    #[serde(alias = "L_P")]
    pub l_p: usize,
    /// Trailing data-only blocks.
    #[serde(alias = "N")]
    pub n: usize,
    #[serde(default = "default_snr_db")]
    pub snr_db: f64,
}

fn default_snr_db() -> f64 {
    15.0
}

impl SystemConfig {
    pub fn new(m: usize, k: usize, l: usize, l_p: usize, n: usize, snr_db: f64) -> Result<Self> {
        let cfg = Self {
            m,
            k,
            l,
            l_p,
            n,
            snr_db,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::Config("M and K must be positive".into()));
        }
        if self.l_p < self.k {
            return Err(Error::Config(format!(
                "L_P = {} must be at least K = {}",
                self.l_p, self.k
            )));
        }
        if self.l < self.l_p {
            return Err(Error::Config(format!(
                "L = {} must be at least L_P = {}",
                self.l, self.l_p
            )));
        }
        Ok(())
    }

    /// Data symbols in the first block.
    pub fn l_d(&self) -> usize {
        self.l - self.l_p
    }

    /// Total blocks per frame (`N + 1`).
    pub fn blocks(&self) -> usize {
        self.n + 1
    }

    pub fn sigma2(&self) -> f64 {
        noise_variance(self.k, self.snr_db)
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self {
            snr_db,
            ..self.clone()
        }
    }
}

/// `sigma^2 = K / 10^(SNR/10)`.
pub fn noise_variance(k: usize, snr_db: f64) -> f64 {
    k as f64 / 10f64.powf(snr_db / 10.0)
}

/// Unit-average-power square QAM with `4^Q` points.
///
/// Points are sorted by `(Re, Im)` ascending; that order is the enumeration
/// and tie-break order everywhere a search runs over the alphabet.
#[derive(Clone, Debug)]
pub struct Constellation<T: Real> {
    q: usize,
    alpha: T,
    points: Vec<Complex<T>>,
}

impl<T: Real> Constellation<T> {
    pub fn new(q: usize) -> Result<Self> {
        if !(1..=3).contains(&q) {
            return Err(Error::UnsupportedOrder(q));
        }
        let alpha = T::of(alpha_q(q));
        let side = 1usize << q;
        let mut points = Vec::with_capacity(side * side);
        for a in 0..side {
            for b in 0..side {
                points.push(Complex::new(level(q, a), level(q, b)) / alpha);
            }
        }
        let c = Self { q, alpha, points };
        debug_assert!((c.average_power() - T::one()).abs() < T::of(1e-5));
        Ok(c)
    }

    pub fn qpsk() -> Self {
        Self::new(1).expect("Q = 1 is supported")
    }

    pub fn bits_per_dimension(&self) -> usize {
        self.q
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn average_power(&self) -> T {
        self.points.iter().map(|p| p.norm_sqr()).sum::<T>() / T::of_usize(self.points.len())
    }

    /// Weights `2^{q-1}` of the bit planes.
    pub fn plane_weight(&self, plane: usize) -> T {
        T::of_usize(1 << plane)
    }

    /// Splits constellation vectors into `Q` bit-plane vectors with
    /// `Re, Im in {-1, 1}` such that `x = (1/alpha) sum 2^{q-1} v_q`.
    pub fn decompose(&self, x: &[Complex<T>]) -> Result<Vec<Vec<Complex<T>>>> {
        let side = 1i64 << self.q;
        let tol = T::of(1e-6).max(T::epsilon() * T::of(1e4));
        let mut planes = vec![vec![czero(); x.len()]; self.q];
        for (idx, z) in x.iter().enumerate() {
            let re = to_level_index(z.re * self.alpha, side, tol)
                .ok_or(Error::NotAConstellationPoint { index: idx })?;
            let im = to_level_index(z.im * self.alpha, side, tol)
                .ok_or(Error::NotAConstellationPoint { index: idx })?;
            for (plane, v) in planes.iter_mut().enumerate() {
                v[idx] = Complex::new(bit_sign(re, plane), bit_sign(im, plane));
            }
        }
        Ok(planes)
    }

    /// `(1/alpha) sum_q 2^{q-1} v_q`; accepts relaxed (non-binary) planes.
    pub fn reconstruct(&self, planes: &[Vec<Complex<T>>]) -> Result<Vec<Complex<T>>> {
        if planes.len() != self.q {
            return Err(dims(format!(
                "expected {} bit planes, got {}",
                self.q,
                planes.len()
            )));
        }
        let k = planes[0].len();
        if planes.iter().any(|p| p.len() != k) {
            return Err(dims("bit planes have different lengths"));
        }
        Ok(self.combine(planes, T::one()))
    }

    /// `(scale/alpha) sum_q 2^{q-1} v_q` without shape checks.
    pub(crate) fn combine(&self, planes: &[Vec<Complex<T>>], scale: T) -> Vec<Complex<T>> {
        let k = planes.first().map_or(0, Vec::len);
        let mut out = vec![czero(); k];
        for (plane, v) in planes.iter().enumerate() {
            let w = self.plane_weight(plane) * scale / self.alpha;
            for (o, z) in out.iter_mut().zip(v) {
                *o += z * w;
            }
        }
        out
    }

    /// Nearest-point hard decision; ties go to the smaller `(Re, then Im)`.
    pub fn slice(&self, x_soft: &[Complex<T>]) -> Vec<Complex<T>> {
        x_soft
            .iter()
            .map(|&z| self.points[self.nearest_index(z)])
            .collect()
    }

    /// Index into [`Constellation::points`] of the nearest point.
    pub fn nearest_index(&self, z: Complex<T>) -> usize {
        let side = 1usize << self.q;
        let a = nearest_level(z.re * self.alpha, side);
        let b = nearest_level(z.im * self.alpha, side);
        a * side + b
    }
}

/// `alpha_Q = sqrt(2 (4^Q - 1) / 3)`.
pub fn alpha_q(q: usize) -> f64 {
    (2.0 * ((1u64 << (2 * q)) as f64 - 1.0) / 3.0).sqrt()
}

/// Odd amplitude `2j - (2^Q - 1)` of the j-th level.
fn level<T: Real>(q: usize, j: usize) -> T {
    T::of((2 * j) as f64 - ((1usize << q) - 1) as f64)
}

fn to_level_index<T: Real>(u: T, side: i64, tol: T) -> Option<i64> {
    let j = (u + T::of((side - 1) as f64)) / T::of(2.0);
    let r = j.round();
    if (j - r).abs() > tol {
        return None;
    }
    let ji = r.to_i64()?;
    (0..side).contains(&ji).then_some(ji)
}

/// Bit `plane` of the level index, mapped 0 -> -1, 1 -> +1.
fn bit_sign<T: Real>(j: i64, plane: usize) -> T {
    if (j >> plane) & 1 == 1 {
        T::one()
    } else {
        -T::one()
    }
}

fn nearest_level<T: Real>(u: T, side: usize) -> usize {
    let j = (u + T::of_usize(side - 1)) / T::of(2.0);
    // round half down so ties resolve to the smaller level
    let r = (j - T::of(0.5)).ceil();
    if r.is_nan() || r <= T::zero() {
        0
    } else {
        r.to_usize().unwrap_or(side - 1).min(side - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;

    fn brute_nearest(c: &Constellation<f64>, z: Complex<f64>) -> Complex<f64> {
        let mut best = c.points()[0];
        let mut best_d = (z - best).norm_sqr();
        for &p in &c.points()[1..] {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = p;
                best_d = d;
            }
        }
        best
    }

    #[test]
    fn qpsk_points_and_alpha() {
        let c = Constellation::<f64>::new(1).unwrap();
        assert!((c.alpha() - 2f64.sqrt()).abs() < 1e-15);
        let s = 1.0 / 2f64.sqrt();
        for p in c.points() {
            assert!((p.re.abs() - s).abs() < 1e-15 && (p.im.abs() - s).abs() < 1e-15);
        }
    }

    #[test]
    fn sixteen_qam_levels() {
        let c = Constellation::<f64>::new(2).unwrap();
        assert!((c.alpha() - 10f64.sqrt()).abs() < 1e-15);
        let mut levels: Vec<f64> = c
            .points()
            .iter()
            .map(|p| (p.re * 10f64.sqrt()).round())
            .collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert_eq!(levels, vec![-3.0, -1.0, 1.0, 3.0]);
    }

    #[test]
    fn alpha_matches_empirical_power_oracle() {
        for q in 1..=3 {
            let side = 1i64 << q;
            let mut acc = 0.0;
            for a in 0..side {
                for b in 0..side {
                    let (ra, rb) = ((2 * a - side + 1) as f64, (2 * b - side + 1) as f64);
                    acc += ra * ra + rb * rb;
                }
            }
            let empirical = (acc / (side * side) as f64).sqrt();
            assert!((empirical - alpha_q(q)).abs() < 1e-12);
            let c = Constellation::<f64>::new(q).unwrap();
            assert_eq!(c.len(), 1 << (2 * q));
            assert!((c.average_power() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unsupported_orders() {
        assert!(matches!(
            Constellation::<f64>::new(0),
            Err(Error::UnsupportedOrder(0))
        ));
        assert!(matches!(
            Constellation::<f64>::new(4),
            Err(Error::UnsupportedOrder(4))
        ));
    }

    #[test]
    fn decompose_qpsk_point() {
        let c = Constellation::<f64>::new(1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let v = c.decompose(&[cplx(s, s)]).unwrap();
        assert_eq!(v, vec![vec![cplx(1.0, 1.0)]]);
    }

    #[test]
    fn decompose_16qam_point() {
        let c = Constellation::<f64>::new(2).unwrap();
        let r10 = 10f64.sqrt();
        let v = c.decompose(&[cplx(3.0 / r10, -1.0 / r10)]).unwrap();
        assert_eq!(v[0], vec![cplx(1.0, 1.0)]);
        assert_eq!(v[1], vec![cplx(1.0, -1.0)]);
    }

    #[test]
    fn decomposition_matches_enumeration_oracle() {
        for q in 1..=3 {
            let c = Constellation::<f64>::new(q).unwrap();
            for &p in c.points() {
                let planes = c.decompose(&[p]).unwrap();
                // enumerate every sign pattern per dimension
                let mut matches = 0;
                for pattern in 0..(1usize << q) {
                    let amp: f64 = (0..q)
                        .map(|b| {
                            if (pattern >> b) & 1 == 1 {
                                (1 << b) as f64
                            } else {
                                -((1 << b) as f64)
                            }
                        })
                        .sum();
                    if (amp - p.re * c.alpha()).abs() < 1e-9 {
                        matches += 1;
                        for b in 0..q {
                            let sign = if (pattern >> b) & 1 == 1 { 1.0 } else { -1.0 };
                            assert_eq!(planes[b][0].re, sign);
                        }
                    }
                }
                assert_eq!(matches, 1);
            }
        }
    }

    #[test]
    fn non_points_are_rejected() {
        let c = Constellation::<f64>::new(1).unwrap();
        assert!(matches!(
            c.decompose(&[cplx(0.1, 0.7)]),
            Err(Error::NotAConstellationPoint { index: 0 })
        ));
    }

    #[test]
    fn reconstruct_zero_and_shape_errors() {
        let c = Constellation::<f64>::new(2).unwrap();
        let z = c
            .reconstruct(&[vec![czero(); 3], vec![czero(); 3]])
            .unwrap();
        assert_eq!(z, vec![czero(); 3]);
        assert!(c.reconstruct(&[vec![czero(); 3]]).is_err());
        assert!(c
            .reconstruct(&[vec![czero(); 3], vec![czero(); 2]])
            .is_err());
    }

    #[test]
    fn binary_planes_reconstruct_to_points() {
        for q in 1..=3 {
            let c = Constellation::<f64>::new(q).unwrap();
            let side = 1usize << q;
            for re_bits in 0..side {
                for im_bits in 0..side {
                    let planes: Vec<Vec<Complex<f64>>> = (0..q)
                        .map(|b| {
                            let s = |bits: usize| if (bits >> b) & 1 == 1 { 1.0 } else { -1.0 };
                            vec![cplx(s(re_bits), s(im_bits))]
                        })
                        .collect();
                    let x = c.reconstruct(&planes).unwrap()[0];
                    assert!(c.points().iter().any(|p| (p - x).norm() < 1e-12));
                    assert_eq!(c.decompose(&[x]).unwrap(), planes);
                }
            }
        }
    }

    #[test]
    fn slicing_quadrant_rule() {
        let c = Constellation::<f64>::new(1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(c.slice(&[cplx(0.9, 0.1)]), vec![cplx(s, s)]);
    }

    #[test]
    fn slicing_ties_go_low() {
        let c = Constellation::<f64>::new(1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(c.slice(&[cplx(0.0, 0.0)]), vec![cplx(-s, -s)]);
        let c2 = Constellation::<f64>::new(2).unwrap();
        let r10 = 10f64.sqrt();
        // exactly between levels 1 and 3
        let out = c2.slice(&[cplx(2.0 / r10, 0.0)])[0];
        assert!((out.re - 1.0 / r10).abs() < 1e-15);
        assert!((out.im + 1.0 / r10).abs() < 1e-15);
    }

    #[test]
    fn slicing_matches_exhaustive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for q in 1..=3 {
            let c = Constellation::<f64>::new(q).unwrap();
            for _ in 0..2000 {
                let z = cplx(rng.random_range(-1.6..1.6), rng.random_range(-1.6..1.6));
                assert_eq!(c.slice(&[z])[0], brute_nearest(&c, z));
            }
        }
    }

    #[test]
    fn slicing_is_idempotent_on_points() {
        let c = Constellation::<f64>::new(3).unwrap();
        assert_eq!(c.slice(c.points()), c.points().to_vec());
    }

    #[test]
    fn config_invariants() {
        let cfg = SystemConfig::new(8, 4, 10, 4, 5, 15.0).unwrap();
        assert_eq!(cfg.l_d(), 6);
        assert!((cfg.sigma2() - 4.0 / 10f64.powf(1.5)).abs() < 1e-15);
        assert!(SystemConfig::new(8, 4, 10, 3, 5, 15.0).is_err());
        assert!(SystemConfig::new(8, 4, 3, 4, 5, 15.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let c = Constellation::<f32>::new(2).unwrap();
        assert!((c.average_power() - 1.0).abs() < 1e-6);
        let x = c.slice(&[Complex::new(0.33f32, -0.9)]);
        let planes = c.decompose(&x).unwrap();
        let back = c.reconstruct(&planes).unwrap();
        assert!((back[0] - x[0]).norm() < 1e-6);
    }
}
