//! Counter-based random streams: every `(master_seed, trial, lane)` triple
//! addresses its own ChaCha stream, so trials can run in any order or on
//! any thread and still draw identical numbers.

use std::fmt;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type Stream = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Lane {
    Channel = 0,
    PilotNoise = 1,
    DataSymbols = 2,
    DataNoise = 3,
    Trainer = 4,
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Lane::Channel => "channel",
            Lane::PilotNoise => "pilot-noise",
            Lane::DataSymbols => "data-symbols",
            Lane::DataNoise => "data-noise",
            Lane::Trainer => "trainer",
        };
        f.write_str(s)
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds extra coordinates (e.g. sweep-cell indices) into a seed.
pub fn mix_seed(seed: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(seed), |acc, &c| {
        splitmix64(acc ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

/// The ChaCha key is expanded from `master_seed`; the 64-bit stream id is
/// `trial_index << 3 | lane`, so streams are distinct for `trial_index < 2^61`.
pub fn derive_rng_stream(master_seed: u64, trial_index: u64, lane: Lane) -> Stream {
    let mut key = [0u8; 32];
    let mut state = master_seed;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream((trial_index << 3) | lane as u64);
    rng
}

/// Standard circularly-symmetric complex Gaussian `CN(0, 1)`.
pub fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::of(re * s), T::of(im * s))
}

pub fn complex_normal_vec<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex<T>> {
    (0..n).map(|_| complex_normal(rng)).collect()
}
