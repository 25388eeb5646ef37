//! Robust MIMO detection under imperfect channel state information.
// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod baseline;
pub mod bench;
pub mod channel;
pub mod detection;
pub mod error;
pub mod lcradmm;
pub mod numerics;
pub mod radmm;
pub mod rdakf;
pub mod rng;
pub mod scalar;
pub mod selftest;
pub mod sim;
pub mod sysmodel;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::{CVector, Cplx, Real};

/// Double-precision aliases.
pub type C64 = Cplx<f64>;
pub type ComplexMatrix64 = numerics::ComplexMatrix<f64>;
pub type CsiBelief64 = channel::CsiBelief<f64>;
pub type Constellation64 = sysmodel::Constellation<f64>;
pub type RadmmParams64 = radmm::RadmmParams<f64>;
pub type LcParams64 = lcradmm::LcParams<f64>;

/// Single-precision aliases.
pub type C32 = Cplx<f32>;
pub type ComplexMatrix32 = numerics::ComplexMatrix<f32>;
pub type CsiBelief32 = channel::CsiBelief<f32>;
pub type Constellation32 = sysmodel::Constellation<f32>;
pub type RadmmParams32 = radmm::RadmmParams<f32>;
pub type LcParams32 = lcradmm::LcParams<f32>;
