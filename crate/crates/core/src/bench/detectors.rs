//! The detector zoo as seen by the harness: one enum, one dispatch.

use std::fmt;
use std::str::FromStr;

use crate::baseline::{mismatched_ml, mismatched_mmse, robust_mmse, RobustMlWork};
use crate::channel::CsiBelief;
use crate::error::{Error, Result};
use crate::lcradmm::{LcDetector, LcParams};
use crate::radmm::{RadmmDetector, RadmmNetParams, RadmmParams};
use crate::sim::C64;
use crate::sysmodel::Constellation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    MismatchedMmse,
    RobustMmse,
    MismatchedMl,
    RobustMl,
    Radmm,
    Radmmnet,
    Lcradmm,
    Lcradmmnet,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 8] = [
        DetectorKind::MismatchedMmse,
        DetectorKind::RobustMmse,
        DetectorKind::MismatchedMl,
        DetectorKind::RobustMl,
        DetectorKind::Radmm,
        DetectorKind::Radmmnet,
        DetectorKind::Lcradmm,
        DetectorKind::Lcradmmnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::MismatchedMmse => "mismatched_mmse",
            DetectorKind::RobustMmse => "robust_mmse",
            DetectorKind::MismatchedMl => "mismatched_ml",
            DetectorKind::RobustMl => "robust_ml",
            DetectorKind::Radmm => "radmm",
            DetectorKind::Radmmnet => "radmmnet",
            DetectorKind::Lcradmm => "lcradmm",
            DetectorKind::Lcradmmnet => "lcradmmnet",
        }
    }

    /// Whether the detector uses the CSI error statistics.
    pub fn is_robust(self) -> bool {
        !matches!(
            self,
            DetectorKind::MismatchedMmse | DetectorKind::MismatchedMl
        )
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown detector kind '{s}'")))
    }
}

/// Fully resolved detector ready for per-block use.
#[derive(Clone, Debug)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub label: String,
    pub radmm: RadmmParams<f64>,
    pub radmmnet: Option<RadmmNetParams<f64>>,
    pub lc: LcParams<f64>,
}

impl DetectorSpec {
    /// Default parameters with `depth` iterations / layers.
    pub fn new(kind: DetectorKind, depth: usize, c: &Constellation<f64>) -> Self {
        let mut radmm = RadmmParams::default_for(c);
        radmm.iters = depth;
        Self {
            kind,
            label: kind.name().to_string(),
            radmm,
            radmmnet: None,
            lc: LcParams::default_for(c, depth),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Hard decisions for every slot of one block sharing `belief`.
    pub fn detect_block(
        &self,
        belief: &CsiBelief<f64>,
        sigma2: f64,
        ys: &[Vec<C64>],
        c: &Constellation<f64>,
    ) -> Result<Vec<Vec<C64>>> {
        let h = belief.h_mat();
        let soft = |x: Vec<C64>| c.slice(&x);
        match self.kind {
            DetectorKind::MismatchedMmse => ys
                .iter()
                .map(|y| mismatched_mmse(y, h, sigma2).map(soft))
                .collect(),
            DetectorKind::RobustMmse => ys
                .iter()
                .map(|y| robust_mmse(y, h, belief.sigma_row(), sigma2).map(soft))
                .collect(),
            DetectorKind::MismatchedMl => ys.iter().map(|y| mismatched_ml(y, h, c)).collect(),
            DetectorKind::RobustMl => {
                let work = RobustMlWork::new(belief.m(), belief.h_hat(), belief.sigma_h(), sigma2)?;
                ys.iter().map(|y| work.exhaustive(y, c)).collect()
            }
            DetectorKind::Radmm => {
                let det = RadmmDetector::new(belief, sigma2, c)?;
                ys.iter()
                    .map(|y| det.detect(y, &self.radmm).map(|d| d.x_hard))
                    .collect()
            }
            DetectorKind::Radmmnet => {
                let p = self
                    .radmmnet
                    .as_ref()
                    .ok_or_else(|| Error::Config("radmmnet needs network parameters".into()))?;
                let det = RadmmDetector::new(belief, sigma2, c)?;
                ys.iter()
                    .map(|y| det.forward(y, p).map(|d| d.x_hard))
                    .collect()
            }
            DetectorKind::Lcradmm | DetectorKind::Lcradmmnet => {
                let det = LcDetector::new(belief, sigma2, self.lc.delta, c)?;
                ys.iter()
                    .map(|y| det.detect(y, &self.lc).map(|d| d.x_hard))
                    .collect()
            }
        }
    }
}
