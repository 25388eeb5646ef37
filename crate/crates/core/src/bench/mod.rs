//! Monte-Carlo experiments: detector dispatch, cells, sweeps and CSV rows.

pub mod config;
pub mod detectors;
pub mod harness;
pub mod record;

pub use config::{run_nmse_experiment, run_ser_experiment, run_training, ExperimentConfig};
pub use detectors::{DetectorKind, DetectorSpec};
pub use harness::{cell_seed, run_nmse_cell, run_ser_cell, McBudget};
pub use record::{format_g6, to_csv_string, write_csv, ResultRecord, CSV_HEADER};
