//! Offline tuning of the unfolded networks: dataset generation, the MSE
//! loss, an SPSA optimiser with Adam moments over a reparameterised search
//! space, and the JSON parameter file.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::CsiBelief;
use crate::error::{Error, Result};
use crate::lcradmm::{LcDetector, LcParams};
use crate::numerics::RealMatrix;
use crate::radmm::{RadmmDetector, RadmmNetLayer, RadmmNetParams};
use crate::rng::{derive_rng_stream, mix_seed, Lane};
use crate::sim::{CsiMethod, FrameSimulator, C64};
use crate::sysmodel::Constellation;

/// Tag folded into dataset seeds so training frames never coincide with
/// benchmark frames drawn from the same master seed.
const DATASET_TAG: u64 = 0x7452_4149_4e53_4554;

#[derive(Clone, Debug)]
pub struct TrainSample {
    pub y: Vec<C64>,
    pub belief: CsiBelief<f64>,
    pub sigma2: f64,
    pub x_true: Vec<C64>,
}

/// `(1/|S|) sum ||x_hat - x||^2`.
pub fn mse_loss(outputs: &[Vec<C64>], labels: &[Vec<C64>]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if outputs.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} outputs vs {} labels",
            outputs.len(),
            labels.len()
        )));
    }
    let mut acc = 0.0;
    for (o, l) in outputs.iter().zip(labels) {
        acc += crate::numerics::vector::norm_sqr(&crate::numerics::vector::sub(o, l));
    }
    Ok(acc / outputs.len() as f64)
}

/// `size` samples, each from its own frame: slot 0 of block `block`.
pub fn generate_dataset(
    sim: &FrameSimulator,
    block: usize,
    snr_db: f64,
    csi: CsiMethod,
    size: usize,
    seed: u64,
) -> Result<Vec<TrainSample>> {
    if size == 0 {
        return Err(Error::EmptyBatch);
    }
    if sim.slots(block) == 0 {
        return Err(Error::Config(format!(
            "block {block} carries no data symbols"
        )));
    }
    let sigma2 = sim.sigma2(snr_db);
    let s = mix_seed(seed, &[DATASET_TAG, block as u64, snr_db.to_bits()]);
    (0..size as u64)
        .into_par_iter()
        .map(|t| {
            let frame = sim.frame(s, t, sigma2, block)?;
            let belief = sim.belief(&frame, block, csi)?;
            let data = frame.block(block);
            Ok(TrainSample {
                y: data.y[0].clone(),
                belief,
                sigma2,
                x_true: data.x[0].clone(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Radmmnet,
    Lcradmmnet,
}

/// Parameters of either network.
#[derive(Clone, Debug, PartialEq)]
pub enum NetworkParams {
    Radmm(RadmmNetParams<f64>),
    Lc(LcParams<f64>),
}

impl NetworkParams {
    pub fn kind(&self) -> NetworkKind {
        match self {
            NetworkParams::Radmm(_) => NetworkKind::Radmmnet,
            NetworkParams::Lc(_) => NetworkKind::Lcradmmnet,
        }
    }

    pub fn layers(&self) -> usize {
        match self {
            NetworkParams::Radmm(p) => p.layers.len(),
            NetworkParams::Lc(p) => p.layers(),
        }
    }

    /// Soft outputs on a batch.
    pub fn forward_batch(
        &self,
        data: &[TrainSample],
        c: &Constellation<f64>,
    ) -> Result<Vec<Vec<C64>>> {
        data.par_iter()
            .map(|s| {
                match self {
                    NetworkParams::Radmm(p) => {
                        RadmmDetector::new(&s.belief, s.sigma2, c)?.forward(&s.y, p)
                    }
                    NetworkParams::Lc(p) => {
                        LcDetector::new(&s.belief, s.sigma2, p.delta, c)?.detect(&s.y, p)
                    }
                }
                .map(|d| d.x_soft)
            })
            .collect()
    }

    pub fn loss(&self, data: &[TrainSample], c: &Constellation<f64>) -> Result<f64> {
        let out = self.forward_batch(data, c)?;
        let labels: Vec<Vec<C64>> = data.iter().map(|s| s.x_true.clone()).collect();
        mse_loss(&out, &labels)
    }

    /// Fraction of wrongly sliced symbols on a batch.
    pub fn ser(&self, data: &[TrainSample], c: &Constellation<f64>) -> Result<f64> {
        let out = self.forward_batch(data, c)?;
        let (mut err, mut tot) = (0usize, 0usize);
        for (o, s) in out.iter().zip(data) {
            for (a, b) in c.slice(o).iter().zip(&s.x_true) {
                tot += 1;
                if (a - b).norm_sqr() > 1e-12 {
                    err += 1;
                }
            }
        }
        Ok(err as f64 / tot.max(1) as f64)
    }
}

/// Median over `data` of the per-instance spectral curvature bound, the
/// starting `eps` of an untrained RADMMNet.
pub fn default_eps(data: &[TrainSample], c: &Constellation<f64>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut v: Vec<f64> = data
        .par_iter()
        .map(|s| RadmmDetector::new(&s.belief, s.sigma2, c)?.initial_eps(&s.y))
        .collect::<Result<_>>()?;
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v[v.len() / 2])
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-30.0, 30.0)).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// `penalty 4^{q-1} / (2 alpha^2)`, the convexity limit of a plane weight.
fn weight_limit(penalty: f64, plane: usize, alpha: f64) -> f64 {
    penalty * (1u64 << (2 * plane)) as f64 / (2.0 * alpha * alpha)
}

/// Maps between network parameters and an unconstrained vector. Every
/// vector decodes to parameters satisfying the plane convexity condition.
#[derive(Clone, Debug)]
pub struct SearchSpace {
    kind: NetworkKind,
    layers: usize,
    q: usize,
    m: usize,
    alpha: f64,
    train_w: bool,
    cg_iters_first: usize,
}

impl SearchSpace {
    pub fn new(init: &NetworkParams, c: &Constellation<f64>, m: usize, train_w: bool) -> Self {
        let cg_iters_first = match init {
            NetworkParams::Radmm(p) => p.cg_iters_first,
            NetworkParams::Lc(_) => 0,
        };
        Self {
            kind: init.kind(),
            layers: init.layers(),
            q: c.bits_per_dimension(),
            m,
            alpha: c.alpha(),
            train_w: train_w && init.kind() == NetworkKind::Radmmnet,
            cg_iters_first,
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            NetworkKind::Lcradmmnet => 1 + self.layers * (self.q + 1),
            NetworkKind::Radmmnet => {
                self.layers * (self.q + 3) + if self.train_w { self.m * self.m } else { 0 }
            }
        }
    }

    pub fn encode(&self, p: &NetworkParams) -> Vec<f64> {
        let mut th = Vec::with_capacity(self.dim());
        match p {
            NetworkParams::Lc(p) => {
                th.push(softplus_inv(p.delta));
                for (kappa, &ups) in p.kappa.iter().zip(&p.upsilon) {
                    for (q, &k) in kappa.iter().enumerate() {
                        th.push(logit(k / weight_limit(p.delta, q, self.alpha)));
                    }
                    th.push(logit(ups / 2.0));
                }
            }
            NetworkParams::Radmm(p) => {
                for l in &p.layers {
                    th.push(softplus_inv(l.mu));
                    for (q, &b) in l.beta.iter().enumerate() {
                        th.push(logit(b / weight_limit(l.mu, q, self.alpha)));
                    }
                    th.push(softplus_inv(l.eps));
                    th.push(logit(l.relax / 2.0));
                }
                if self.train_w {
                    th.extend_from_slice(p.w.as_row_major());
                }
            }
        }
        th
    }

    /// Decoding; `w_fixed` supplies `W` when it is not trained.
    pub fn decode(&self, th: &[f64], w_fixed: &RealMatrix<f64>) -> NetworkParams {
        let mut it = th.iter().copied();
        let mut next = || it.next().expect("vector of search-space dimension");
        match self.kind {
            NetworkKind::Lcradmmnet => {
                let delta = softplus(next());
                let mut kappa = Vec::with_capacity(self.layers);
                let mut upsilon = Vec::with_capacity(self.layers);
                for _ in 0..self.layers {
                    kappa.push(
                        (0..self.q)
                            .map(|q| weight_limit(delta, q, self.alpha) * sigmoid(next()))
                            .collect(),
                    );
                    upsilon.push(2.0 * sigmoid(next()));
                }
                NetworkParams::Lc(LcParams {
                    delta,
                    kappa,
                    upsilon,
                })
            }
            NetworkKind::Radmmnet => {
                let mut layers = Vec::with_capacity(self.layers);
                for _ in 0..self.layers {
                    let mu = softplus(next());
                    let beta = (0..self.q)
                        .map(|q| weight_limit(mu, q, self.alpha) * sigmoid(next()))
                        .collect();
                    let eps = softplus(next());
                    let relax = 2.0 * sigmoid(next());
                    layers.push(RadmmNetLayer {
                        mu,
                        beta,
                        eps,
                        relax,
                    });
                }
                let w = if self.train_w {
                    RealMatrix::from_row_major(
                        self.m,
                        self.m,
                        (0..self.m * self.m).map(|_| next()).collect(),
                    )
                } else {
                    w_fixed.clone()
                };
                NetworkParams::Radmm(RadmmNetParams {
                    layers,
                    w,
                    cg_iters_first: self.cg_iters_first,
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Step sizes of the two phases (pre-training, fine-tuning).
    pub step_sizes: Vec<f64>,
    /// SPSA perturbation half-width in the unconstrained space.
    pub perturbation: f64,
    /// SPSA steps between validation checks.
    pub steps_per_epoch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub minibatch: usize,
    pub train_w: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_sizes: vec![0.01, 0.001],
            perturbation: 0.05,
            steps_per_epoch: 10,
            max_epochs: 30,
            patience: 5,
            minibatch: 250,
            train_w: false,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Validation loss before training and after every epoch.
    pub val_history: Vec<f64>,
    pub best_val: f64,
    pub initial_val: f64,
}

impl TrainOutcome {
    /// Running minimum of the validation history.
    pub fn best_envelope(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.val_history
            .iter()
            .map(|&v| {
                best = best.min(v);
                best
            })
            .collect()
    }
}

/// SPSA with Adam moments; each phase restarts from the best point so far
/// and stops after `patience` epochs without a validation improvement.
pub fn train(
    init: &NetworkParams,
    data: &[TrainSample],
    val: &[TrainSample],
    c: &Constellation<f64>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if data.is_empty() || val.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if cfg.patience == 0 {
        return Err(Error::Config("patience must be at least 1".into()));
    }
    let m = data[0].belief.m();
    let space = SearchSpace::new(init, c, m, cfg.train_w);
    let w_fixed = match init {
        NetworkParams::Radmm(p) => p.w.clone(),
        NetworkParams::Lc(_) => RealMatrix::identity(m),
    };
    let mut step_counter = 0usize;
    let eval = |th: &[f64], set: &[TrainSample], step: usize| -> Result<f64> {
        let l = space.decode(th, &w_fixed).loss(set, c)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(Error::DivergenceDetected(step))
        }
    };
    let mut best_th = space.encode(init);
    let initial_val = eval(&best_th, val, 0)?;
    let mut best_val = initial_val;
    let mut history = vec![initial_val];
    let mut rng = derive_rng_stream(cfg.seed, 0, Lane::Trainer);
    let dim = space.dim();
    let mb = cfg.minibatch.clamp(1, data.len());
    for &lr in &cfg.step_sizes {
        let mut th = best_th.clone();
        let (mut m1, mut m2) = (vec![0.0; dim], vec![0.0; dim]);
        let mut t = 0i32;
        let mut stale = 0usize;
        for _ in 0..cfg.max_epochs {
            for _ in 0..cfg.steps_per_epoch {
                step_counter += 1;
                t += 1;
                let start = rng.random_range(0..data.len());
                let batch: Vec<TrainSample> = (0..mb)
                    .map(|i| data[(start + i) % data.len()].clone())
                    .collect();
                let delta: Vec<f64> = (0..dim)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                let plus: Vec<f64> = th
                    .iter()
                    .zip(&delta)
                    .map(|(a, d)| a + cfg.perturbation * d)
                    .collect();
                let minus: Vec<f64> = th
                    .iter()
                    .zip(&delta)
                    .map(|(a, d)| a - cfg.perturbation * d)
                    .collect();
                let lp = eval(&plus, &batch, step_counter)?;
                let lm = eval(&minus, &batch, step_counter)?;
                let scale = (lp - lm) / (2.0 * cfg.perturbation);
                let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
                for i in 0..dim {
                    let g = scale * delta[i];
                    m1[i] = b1 * m1[i] + (1.0 - b1) * g;
                    m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
                    let mh = m1[i] / (1.0 - b1.powi(t));
                    let vh = m2[i] / (1.0 - b2.powi(t));
                    th[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
            let v = eval(&th, val, step_counter)?;
            history.push(v);
            if v < best_val {
                best_val = v;
                best_th = th.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        params: space.decode(&best_th, &w_fixed),
        val_history: history,
        best_val,
        initial_val,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedEntry {
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_iters_first: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerEntry {
    Radmm {
        mu: f64,
        beta: Vec<f64>,
        eps: f64,
        relax: f64,
    },
    Lc {
        kappa: Vec<f64>,
        relax: f64,
    },
}

/// On-disk form of trained parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub network: NetworkKind,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub layers: usize,
    pub shared: SharedEntry,
    pub per_layer: Vec<LayerEntry>,
}

impl ParamFile {
    pub fn from_params(p: &NetworkParams, m: usize, k: usize, q: usize) -> Self {
        match p {
            NetworkParams::Radmm(p) => Self {
                network: NetworkKind::Radmmnet,
                m,
                k,
                q,
                layers: p.layers.len(),
                shared: SharedEntry {
                    w: Some(p.w.as_row_major().to_vec()),
                    delta: None,
                    cg_iters_first: Some(p.cg_iters_first),
                },
                per_layer: p
                    .layers
                    .iter()
                    .map(|l| LayerEntry::Radmm {
                        mu: l.mu,
                        beta: l.beta.clone(),
                        eps: l.eps,
                        relax: l.relax,
                    })
                    .collect(),
            },
            NetworkParams::Lc(p) => Self {
                network: NetworkKind::Lcradmmnet,
                m,
                k,
                q,
                layers: p.layers(),
                shared: SharedEntry {
                    w: None,
                    delta: Some(p.delta),
                    cg_iters_first: None,
                },
                per_layer: p
                    .kappa
                    .iter()
                    .zip(&p.upsilon)
                    .map(|(k, &u)| LayerEntry::Lc {
                        kappa: k.clone(),
                        relax: u,
                    })
                    .collect(),
            },
        }
    }

    pub fn to_params(&self) -> Result<NetworkParams> {
        if self.per_layer.len() != self.layers {
            return Err(Error::Config(format!(
                "parameter file declares {} layers but lists {}",
                self.layers,
                self.per_layer.len()
            )));
        }
        let bad = || Error::Config("layer entry does not match the network kind".into());
        match self.network {
            NetworkKind::Radmmnet => {
                let w = match &self.shared.w {
                    Some(v) if v.len() == self.m * self.m => {
                        RealMatrix::from_row_major(self.m, self.m, v.clone())
                    }
                    Some(v) => {
                        return Err(Error::Config(format!(
                            "W has {} entries, expected {}",
                            v.len(),
                            self.m * self.m
                        )))
                    }
                    None => RealMatrix::identity(self.m),
                };
                let layers = self
                    .per_layer
                    .iter()
                    .map(|l| match l {
                        LayerEntry::Radmm {
                            mu,
                            beta,
                            eps,
                            relax,
                        } => Ok(RadmmNetLayer {
                            mu: *mu,
                            beta: beta.clone(),
                            eps: *eps,
                            relax: *relax,
                        }),
                        LayerEntry::Lc { .. } => Err(bad()),
                    })
                    .collect::<Result<_>>()?;
                Ok(NetworkParams::Radmm(RadmmNetParams {
                    layers,
                    w,
                    cg_iters_first: self.shared.cg_iters_first.unwrap_or(15),
                }))
            }
            NetworkKind::Lcradmmnet => {
                let delta = self
                    .shared
                    .delta
                    .ok_or_else(|| Error::Config("lcradmmnet file lacks shared.delta".into()))?;
                let mut kappa = Vec::new();
                let mut upsilon = Vec::new();
                for l in &self.per_layer {
                    match l {
                        LayerEntry::Lc { kappa: k, relax } => {
                            kappa.push(k.clone());
                            upsilon.push(*relax);
                        }
                        LayerEntry::Radmm { .. } => return Err(bad()),
                    }
                }
                Ok(NetworkParams::Lc(LcParams {
                    delta,
                    kappa,
                    upsilon,
                }))
            }
        }
    }

    pub fn check_dims(&self, m: usize, k: usize, q: usize) -> Result<()> {
        if (self.m, self.k, self.q) != (m, k, q) {
            return Err(Error::Config(format!(
                "parameter file is for M={}, K={}, Q={}, experiment uses M={m}, K={k}, Q={q}",
                self.m, self.k, self.q
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
