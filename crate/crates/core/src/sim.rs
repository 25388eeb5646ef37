//! Frame-level simulation: channel aging, pilots, data symbols, received
//! samples, and the receiver's CSI belief for a chosen block.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    dft_pilots, lmmse_estimate, transmit_pilots, ChannelRealization, ChannelStatistics, CsiBelief,
    PilotBlock,
};
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::rdakf::{track_frame, RdakfConfig};
use crate::rng::{complex_normal, derive_rng_stream, Lane};
use crate::sysmodel::{noise_variance, Constellation, SystemConfig};

pub use crate::C64;

/// How the receiver forms its channel belief.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiMethod {
    /// Pilot-based LMMSE estimate aged to the requested block.
    Lmmse,
    /// Data-aided Kalman tracking from the pilot block onward.
    Rdakf,
    /// True channel with zero error covariance.
    Perfect,
}

impl fmt::Display for CsiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsiMethod::Lmmse => "lmmse",
            CsiMethod::Rdakf => "rdakf",
            CsiMethod::Perfect => "perfect",
        })
    }
}

impl FromStr for CsiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lmmse" => Ok(CsiMethod::Lmmse),
            "rdakf" => Ok(CsiMethod::Rdakf),
            "perfect" => Ok(CsiMethod::Perfect),
            other => Err(Error::Config(format!("unknown CSI method '{other}'"))),
        }
    }
}

/// Symbols and observations of one coherence block.
#[derive(Clone, Debug)]
pub struct BlockData {
    pub x: Vec<Vec<C64>>,
    pub y: Vec<Vec<C64>>,
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub channel: ChannelRealization<f64>,
    pub pilots: PilotBlock<f64>,
    /// `blocks[n - 1]` holds the data of block `n`.
    pub blocks: Vec<BlockData>,
    pub sigma2: f64,
}

impl Frame {
    pub fn block(&self, n: usize) -> &BlockData {
        &self.blocks[n - 1]
    }
}

/// Immutable description of the simulated link.
#[derive(Clone, Debug)]
pub struct FrameSimulator {
    pub sys: SystemConfig,
    pub stats: ChannelStatistics<f64>,
    pub constellation: Constellation<f64>,
    pub s_p: ComplexMatrix<f64>,
    pub rdakf: RdakfConfig,
}

impl FrameSimulator {
    pub fn new(
        sys: SystemConfig,
        stats: ChannelStatistics<f64>,
        constellation: Constellation<f64>,
    ) -> Result<Self> {
        sys.validate()?;
        if stats.m() != sys.m || stats.k() != sys.k {
            return Err(Error::Config("channel statistics do not match M, K".into()));
        }
        let s_p = dft_pilots(sys.k, sys.l_p)?;
        Ok(Self {
            sys,
            stats,
            constellation,
            s_p,
            rdakf: RdakfConfig::default(),
        })
    }

    /// Kronecker channel with a common temporal coefficient.
    pub fn kronecker(
        sys: SystemConfig,
        q: usize,
        rho_t: f64,
        rho_r: f64,
        rho: f64,
    ) -> Result<Self> {
        let stats = ChannelStatistics::kronecker_uniform(sys.m, sys.k, rho_t, rho_r, rho)?;
        Self::new(sys, stats, Constellation::new(q)?)
    }

    pub fn sigma2(&self, snr_db: f64) -> f64 {
        noise_variance(self.sys.k, snr_db)
    }

    /// Data slots carried by block `n`.
    pub fn slots(&self, n: usize) -> usize {
        if n == 1 {
            self.sys.l_d()
        } else {
            self.sys.l
        }
    }

    /// Simulates blocks `1..=upto` of one frame from the trial's streams.
    pub fn frame(&self, seed: u64, trial: u64, sigma2: f64, upto: usize) -> Result<Frame> {
        if upto == 0 || upto > self.sys.blocks() {
            return Err(Error::IndexError(upto));
        }
        let mut ch_rng = derive_rng_stream(seed, trial, Lane::Channel);
        let mut pn_rng = derive_rng_stream(seed, trial, Lane::PilotNoise);
        let mut xs_rng = derive_rng_stream(seed, trial, Lane::DataSymbols);
        let mut dn_rng = derive_rng_stream(seed, trial, Lane::DataNoise);
        let channel = ChannelRealization::generate(&self.stats, upto, &mut ch_rng);
        let pilots = transmit_pilots(channel.h(1), &self.s_p, sigma2, &mut pn_rng)?;
        let sd = sigma2.sqrt();
        let mut blocks = Vec::with_capacity(upto);
        for n in 1..=upto {
            let h = channel.h(n);
            let (m, k) = (self.sys.m, self.sys.k);
            let mut bx = Vec::with_capacity(self.slots(n));
            let mut by = Vec::with_capacity(self.slots(n));
            for _ in 0..self.slots(n) {
                let x = random_symbols(&self.constellation, k, &mut xs_rng);
                let mut y = crate::channel::apply_symbols(h, &x);
                debug_assert_eq!(y.len(), m);
                for yi in y.iter_mut() {
                    let z: C64 = complex_normal(&mut dn_rng);
                    *yi += z * sd;
                }
                bx.push(x);
                by.push(y);
            }
            blocks.push(BlockData { x: bx, y: by });
        }
        Ok(Frame {
            channel,
            pilots,
            blocks,
            sigma2,
        })
    }

    /// Receiver belief about `h[n]`.
    pub fn belief(&self, frame: &Frame, n: usize, method: CsiMethod) -> Result<CsiBelief<f64>> {
        match method {
            CsiMethod::Lmmse => lmmse_estimate(&frame.pilots, &self.stats, frame.sigma2, n),
            CsiMethod::Perfect => CsiBelief::perfect(self.sys.m, self.sys.k, frame.channel.h(n)),
            CsiMethod::Rdakf => {
                let obs: Vec<Vec<Vec<C64>>> = (2..=n).map(|b| frame.block(b).y.clone()).collect();
                let tracked = track_frame(
                    &frame.pilots,
                    &obs,
                    &self.stats,
                    frame.sigma2,
                    &self.rdakf,
                    Some(&self.constellation),
                )?;
                Ok(tracked
                    .beliefs
                    .into_iter()
                    .nth(n - 1)
                    .expect("one belief per block"))
            }
        }
    }
}

/// Uniform draw from the alphabet.
pub fn random_symbols<R: Rng + ?Sized>(c: &Constellation<f64>, k: usize, rng: &mut R) -> Vec<C64> {
    let p = c.points();
    (0..k).map(|_| p[rng.random_range(0..p.len())]).collect()
}
