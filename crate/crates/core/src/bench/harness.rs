//! Monte-Carlo cells. A trial is one simulated frame; every detector and CSI
//! method evaluated at the same `(snr, block)` sees the same frames.

use std::time::Instant;

use rayon::prelude::*;

use super::detectors::DetectorSpec;
use super::record::ResultRecord;
use crate::error::{Error, Result};
use crate::rng::mix_seed;
use crate::sim::{CsiMethod, FrameSimulator};

/// Stopping rule of a SER cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McBudget {
    pub min_symbol_errors: u64,
    pub max_trials: u64,
    /// Trials simulated per parallel batch.
    pub batch: usize,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            min_symbol_errors: 1000,
            max_trials: 1_000_000,
            batch: 256,
        }
    }
}

/// Seed of the frames shared by all cells at `(snr_db, block)`.
pub fn cell_seed(master_seed: u64, snr_db: f64, block: usize) -> u64 {
    mix_seed(master_seed, &[snr_db.to_bits(), block as u64])
}

fn check_block(sim: &FrameSimulator, block: usize) -> Result<()> {
    if block == 0 || block > sim.sys.blocks() {
        return Err(Error::Config(format!(
            "block {block} outside 1..={} (N + 1)",
            sim.sys.blocks()
        )));
    }
    if sim.slots(block) == 0 {
        return Err(Error::Config(format!(
            "block {block} carries no data symbols"
        )));
    }
    Ok(())
}

/// `(symbol errors, symbols)` of one trial.
pub fn ser_trial(
    sim: &FrameSimulator,
    seed: u64,
    trial: u64,
    snr_db: f64,
    block: usize,
    csi: CsiMethod,
    det: &DetectorSpec,
) -> Result<(u64, u64)> {
    let sigma2 = sim.sigma2(snr_db);
    let frame = sim.frame(seed, trial, sigma2, block)?;
    let belief = sim.belief(&frame, block, csi)?;
    let data = frame.block(block);
    let decisions = det.detect_block(&belief, sigma2, &data.y, &sim.constellation)?;
    let mut errors = 0u64;
    let mut symbols = 0u64;
    for (x_hat, x) in decisions.iter().zip(&data.x) {
        for (a, b) in x_hat.iter().zip(x) {
            symbols += 1;
            if (a - b).norm_sqr() > 1e-12 {
                errors += 1;
            }
        }
    }
    Ok((errors, symbols))
}

fn cell_error(det: &str, snr_db: f64, block: usize, csi: CsiMethod, e: Error) -> Error {
    Error::Cell {
        context: format!("{det} at {snr_db} dB, block {block}, {csi} CSI"),
        source: Box::new(e),
    }
}

/// Runs trials until `min_symbol_errors` errors or `max_trials` frames.
///
/// Batches run in parallel but are consumed in trial order and the scan
/// stops at the exact trial that meets the target, so the record does not
/// depend on the thread count.
pub fn run_ser_cell(
    sim: &FrameSimulator,
    snr_db: f64,
    block: usize,
    csi: CsiMethod,
    det: &DetectorSpec,
    budget: McBudget,
    master_seed: u64,
    timing: bool,
) -> Result<ResultRecord> {
    check_block(sim, block)?;
    let start = Instant::now();
    let seed = cell_seed(master_seed, snr_db, block);
    let batch = budget.batch.max(1) as u64;
    let (mut trials, mut errors, mut symbols) = (0u64, 0u64, 0u64);
    'outer: while trials < budget.max_trials {
        let lo = trials;
        let hi = (lo + batch).min(budget.max_trials);
        let results: Vec<Result<(u64, u64)>> = (lo..hi)
            .into_par_iter()
            .map(|t| ser_trial(sim, seed, t, snr_db, block, csi, det))
            .collect();
        for r in results {
            let (e, s) = r.map_err(|e| cell_error(&det.label, snr_db, block, csi, e))?;
            trials += 1;
            errors += e;
            symbols += s;
            if errors >= budget.min_symbol_errors {
                break 'outer;
            }
        }
    }
    Ok(ResultRecord {
        detector: det.label.clone(),
        snr_db,
        block,
        csi,
        trials,
        symbols,
        errors,
        ser: Some(if symbols == 0 {
            0.0
        } else {
            errors as f64 / symbols as f64
        }),
        nmse: None,
        wall_s: timing.then(|| start.elapsed().as_secs_f64()),
        seed: master_seed,
    })
}

/// NMSE of the block-`block` channel belief of one trial.
pub fn nmse_trial(
    sim: &FrameSimulator,
    seed: u64,
    trial: u64,
    snr_db: f64,
    block: usize,
    csi: CsiMethod,
) -> Result<f64> {
    let sigma2 = sim.sigma2(snr_db);
    let frame = sim.frame(seed, trial, sigma2, block)?;
    let belief = sim.belief(&frame, block, csi)?;
    Ok(belief.nmse(frame.channel.h(block)))
}

/// Mean of per-trial `||H_hat - H||_F^2 / ||H||_F^2` over `trials` frames.
pub fn run_nmse_cell(
    sim: &FrameSimulator,
    snr_db: f64,
    block: usize,
    csi: CsiMethod,
    trials: u64,
    master_seed: u64,
    timing: bool,
) -> Result<ResultRecord> {
    if block == 0 || block > sim.sys.blocks() {
        return Err(Error::Config(format!(
            "block {block} outside 1..={}",
            sim.sys.blocks()
        )));
    }
    let start = Instant::now();
    let seed = cell_seed(master_seed, snr_db, block);
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| nmse_trial(sim, seed, t, snr_db, block, csi))
        .collect::<Result<Vec<f64>>>()
        .map_err(|e| cell_error("nmse", snr_db, block, csi, e))?;
    // sequential sum keeps the mean independent of the thread count
    let mut acc = 0.0;
    for v in &values {
        acc += v;
    }
    Ok(ResultRecord {
        detector: "channel".into(),
        snr_db,
        block,
        csi,
        trials,
        symbols: 0,
        errors: 0,
        ser: None,
        nmse: Some(if trials == 0 {
            0.0
        } else {
            acc / trials as f64
        }),
        wall_s: timing.then(|| start.elapsed().as_secs_f64()),
        seed: master_seed,
    })
}
