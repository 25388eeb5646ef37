//! Complex linear-algebra kernels shared by every detector.

mod cg;
mod cholesky;
mod contract;
mod matrix;
mod spectral;
pub mod vector;

pub use cg::{cg_solve, CgSolution};
pub use cholesky::{hermitian_solve, HermitianFactor, JITTER};
pub use contract::{
    block_contract, block_contract_outer, block_contract_rows, block_contract_rows_outer,
};
pub use matrix::{ComplexMatrix, RealMatrix};
pub use spectral::{spectral_upper_bound, POWER_ITERATIONS, SAFETY_FACTOR};
