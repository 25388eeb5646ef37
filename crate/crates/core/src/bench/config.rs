//! Experiment description read from TOML, and the sweep loops over it.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::detectors::{DetectorKind, DetectorSpec};
use super::harness::{run_nmse_cell, run_ser_cell, McBudget};
use super::record::ResultRecord;
use crate::error::{Error, Result};
use crate::radmm::RadmmNetParams;
use crate::sim::{CsiMethod, FrameSimulator};
use crate::sysmodel::SystemConfig;
use crate::trainer::{
    default_eps, generate_dataset, train, NetworkKind, NetworkParams, ParamFile, TrainConfig,
    TrainOutcome,
};

/// A scalar or a list in the TOML file.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ChannelSection {
    pub rho_t: f64,
    pub rho_r: f64,
    /// Common temporal coefficient or one per user.
    pub rho_time: OneOrMany<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ModulationSection {
    #[serde(alias = "q")]
    #[serde(rename = "Q")]
    pub q: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct CsiSection {
    pub method: OneOrMany<CsiMethod>,
    /// Slice data estimates before reuse in the tracker.
    #[serde(default)]
    pub slice_data: bool,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct DetectorEntry {
    pub kind: String,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub params_file: Option<PathBuf>,
    #[serde(default)]
    pub label: Option<String>,
    /// Penalty override for the algorithmic detectors.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
}

fn default_depth() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct SweepSection {
    pub snr_db: OneOrMany<f64>,
    pub blocks: OneOrMany<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct McSection {
    #[serde(default = "default_min_errors")]
    pub min_symbol_errors: u64,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Frames per NMSE cell.
    #[serde(default = "default_nmse_trials")]
    pub nmse_trials: u64,
    #[serde(default)]
    pub timing: bool,
}

fn default_min_errors() -> u64 {
    1000
}
fn default_max_trials() -> u64 {
    1_000_000
}
fn default_nmse_trials() -> u64 {
    2000
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            min_symbol_errors: default_min_errors(),
            max_trials: default_max_trials(),
            master_seed: 0,
            nmse_trials: default_nmse_trials(),
            timing: false,
        }
    }
}

/// Settings of the `train` job; the network trained is the first
/// `radmmnet` or `lcradmmnet` entry among the detectors.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub train_size: usize,
    pub val_size: usize,
    #[serde(flatten)]
    pub optimiser: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            train_size: 2000,
            val_size: 500,
            optimiser: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub channel: ChannelSection,
    pub modulation: ModulationSection,
    pub csi: CsiSection,
    #[serde(default)]
    pub detectors: Vec<DetectorEntry>,
    pub sweep: SweepSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub train: TrainSection,
    /// Directory against which relative `params_file` paths resolve.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks plus existence and shape of parameter files.
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.mc.min_symbol_errors < 100 {
            return Err(Error::Config(format!(
                "min_symbol_errors = {} is below 100",
                self.mc.min_symbol_errors
            )));
        }
        if self.mc.max_trials == 0 {
            return Err(Error::Config("max_trials must be positive".into()));
        }
        let blocks = self.sweep.blocks.to_vec();
        if blocks.is_empty() || self.sweep.snr_db.to_vec().is_empty() {
            return Err(Error::Config(
                "sweep needs at least one SNR and one block".into(),
            ));
        }
        for b in blocks {
            if b == 0 || b > self.system.blocks() {
                return Err(Error::Config(format!(
                    "block {b} outside 1..={}",
                    self.system.blocks()
                )));
            }
        }
        if let OneOrMany::Many(r) = &self.channel.rho_time {
            if r.len() != self.system.k {
                return Err(Error::Config(format!(
                    "rho_time lists {} users, K = {}",
                    r.len(),
                    self.system.k
                )));
            }
        }
        for d in &self.detectors {
            d.kind.parse::<DetectorKind>()?;
            if let Some(p) = &d.params_file {
                let path = self.resolve(p);
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "params_file {} does not exist",
                        path.display()
                    )));
                }
                ParamFile::load(&path)?.check_dims(
                    self.system.m,
                    self.system.k,
                    self.modulation.q,
                )?;
            }
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn simulator(&self) -> Result<FrameSimulator> {
        let stats = crate::channel::ChannelStatistics::kronecker(
            self.system.m,
            self.system.k,
            self.channel.rho_t,
            self.channel.rho_r,
            &match &self.channel.rho_time {
                OneOrMany::One(r) => vec![*r; self.system.k],
                OneOrMany::Many(v) => v.clone(),
            },
        )?;
        let mut sim = FrameSimulator::new(
            self.system.clone(),
            stats,
            crate::sysmodel::Constellation::new(self.modulation.q)?,
        )?;
        sim.rdakf.slice_data = self.csi.slice_data;
        Ok(sim)
    }

    pub fn budget(&self) -> McBudget {
        McBudget {
            min_symbol_errors: self.mc.min_symbol_errors,
            max_trials: self.mc.max_trials,
            ..McBudget::default()
        }
    }

    /// Resolved detectors. `override_params` replaces every network's
    /// `params_file`; untrained networks use default parameters.
    pub fn detector_specs(
        &self,
        sim: &FrameSimulator,
        override_params: Option<&Path>,
    ) -> Result<Vec<DetectorSpec>> {
        let c = &sim.constellation;
        let mut out = Vec::with_capacity(self.detectors.len());
        for d in &self.detectors {
            let kind: DetectorKind = d.kind.parse()?;
            let mut spec = DetectorSpec::new(kind, d.depth, c);
            if let Some(mu) = d.mu {
                spec.radmm = crate::radmm::RadmmParams::with_mu(c, mu);
                spec.radmm.iters = d.depth;
            }
            if let Some(delta) = d.delta {
                spec.lc = crate::lcradmm::LcParams::constant(
                    delta,
                    crate::radmm::default_weights(delta, c),
                    d.depth,
                );
            }
            let file = match (kind, override_params) {
                (DetectorKind::Radmmnet | DetectorKind::Lcradmmnet, Some(p)) => {
                    Some(p.to_path_buf())
                }
                _ => d.params_file.as_ref().map(|p| self.resolve(p)),
            };
            match kind {
                DetectorKind::Radmmnet => {
                    spec.radmmnet = Some(match file {
                        Some(path) => match load_network(&path, self, NetworkKind::Radmmnet)? {
                            NetworkParams::Radmm(p) => p,
                            NetworkParams::Lc(_) => unreachable!("kind checked on load"),
                        },
                        None => self.untrained_radmmnet(sim, d.depth)?,
                    });
                }
                DetectorKind::Lcradmmnet => {
                    if let Some(path) = file {
                        spec.lc = match load_network(&path, self, NetworkKind::Lcradmmnet)? {
                            NetworkParams::Lc(p) => p,
                            NetworkParams::Radmm(_) => unreachable!("kind checked on load"),
                        };
                    }
                }
                _ => {}
            }
            if let Some(l) = &d.label {
                spec = spec.with_label(l.clone());
            }
            out.push(spec);
        }
        Ok(out)
    }

    /// Default network whose `eps` is calibrated on a small dataset at the
    /// first sweep point.
    fn untrained_radmmnet(
        &self,
        sim: &FrameSimulator,
        depth: usize,
    ) -> Result<RadmmNetParams<f64>> {
        let snr = self.sweep.snr_db.to_vec()[0];
        let block = self.sweep.blocks.to_vec()[0];
        let csi = self.csi.method.to_vec()[0];
        let data = generate_dataset(sim, block, snr, csi, 200, self.mc.master_seed)?;
        let eps = default_eps(&data, &sim.constellation)?;
        Ok(RadmmNetParams::untrained(
            sim.sys.m,
            &sim.constellation,
            depth,
            eps,
        ))
    }
}

fn load_network(path: &Path, cfg: &ExperimentConfig, want: NetworkKind) -> Result<NetworkParams> {
    let file = ParamFile::load(path)?;
    file.check_dims(cfg.system.m, cfg.system.k, cfg.modulation.q)?;
    if file.network != want {
        return Err(Error::Config(format!(
            "{} holds {:?} parameters, detector expects {:?}",
            path.display(),
            file.network,
            want
        )));
    }
    file.to_params()
}

/// One record per `(snr, block, csi, detector)` cell, in that loop order.
pub fn run_ser_experiment(
    cfg: &ExperimentConfig,
    override_params: Option<&Path>,
) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    if cfg.detectors.is_empty() {
        return Err(Error::Config("no detectors configured".into()));
    }
    let sim = cfg.simulator()?;
    let specs = cfg.detector_specs(&sim, override_params)?;
    let budget = cfg.budget();
    let mut out = Vec::new();
    for snr in cfg.sweep.snr_db.to_vec() {
        for block in cfg.sweep.blocks.to_vec() {
            for csi in cfg.csi.method.to_vec() {
                for det in &specs {
                    out.push(run_ser_cell(
                        &sim,
                        snr,
                        block,
                        csi,
                        det,
                        budget,
                        cfg.mc.master_seed,
                        cfg.mc.timing,
                    )?);
                }
            }
        }
    }
    Ok(out)
}

/// Trains the first network detector at the first sweep point. Training
/// and validation frames come from seeds distinct from the benchmark ones.
pub fn run_training(cfg: &ExperimentConfig) -> Result<(ParamFile, TrainOutcome)> {
    cfg.validate()?;
    let sim = cfg.simulator()?;
    let entry = cfg
        .detectors
        .iter()
        .find(|d| {
            matches!(
                d.kind.parse(),
                Ok(DetectorKind::Radmmnet | DetectorKind::Lcradmmnet)
            )
        })
        .ok_or_else(|| Error::Config("train needs a radmmnet or lcradmmnet detector".into()))?;
    let snr = cfg.sweep.snr_db.to_vec()[0];
    let block = cfg.sweep.blocks.to_vec()[0];
    let csi = cfg.csi.method.to_vec()[0];
    let t = &cfg.train;
    let seed = t.optimiser.seed ^ cfg.mc.master_seed;
    let data = generate_dataset(&sim, block, snr, csi, t.train_size, seed)?;
    let val = generate_dataset(&sim, block, snr, csi, t.val_size, seed.wrapping_add(1))?;
    let c = &sim.constellation;
    let init = match entry.kind.parse::<DetectorKind>()? {
        DetectorKind::Radmmnet => NetworkParams::Radmm(RadmmNetParams::untrained(
            sim.sys.m,
            c,
            entry.depth,
            default_eps(&data, c)?,
        )),
        _ => {
            let mut spec = DetectorSpec::new(DetectorKind::Lcradmmnet, entry.depth, c);
            if let Some(delta) = entry.delta {
                spec.lc = crate::lcradmm::LcParams::constant(
                    delta,
                    crate::radmm::default_weights(delta, c),
                    entry.depth,
                );
            }
            NetworkParams::Lc(spec.lc)
        }
    };
    let out = train(&init, &data, &val, c, &t.optimiser)?;
    let file = ParamFile::from_params(&out.params, sim.sys.m, sim.sys.k, cfg.modulation.q);
    Ok((file, out))
}

/// One record per `(snr, block, csi)` cell.
pub fn run_nmse_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let sim = cfg.simulator()?;
    let mut out = Vec::new();
    for snr in cfg.sweep.snr_db.to_vec() {
        for block in cfg.sweep.blocks.to_vec() {
            for csi in cfg.csi.method.to_vec() {
                out.push(run_nmse_cell(
                    &sim,
                    snr,
                    block,
                    csi,
                    cfg.mc.nmse_trials,
                    cfg.mc.master_seed,
                    cfg.mc.timing,
                )?);
            }
        }
    }
    Ok(out)
}
