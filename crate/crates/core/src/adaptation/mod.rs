//! Pre-training, single-image adaptation, and evaluation sweeps.

mod config;
mod experiment;
mod matrix;
mod metrics;
mod scenario;
mod train;

pub use config::{derive_seed, AdaptationConfig, PretrainConfig, Strategy};
pub use experiment::{AdaptationRun, Architecture, ExperimentConfig, NetSpec};
pub use matrix::{
    evaluate_matrix, losses_to_csv, records_to_csv, ExperimentMatrix, MatrixCell, SweepScenario, MATRIX_CSV_HEADER,
    RECORD_CSV_HEADER,
};
pub use metrics::{psnr, PSNR_CAP_DB};
pub use scenario::{noise_sigma_for_snr, DeskSetup, MaskSpec};
pub use train::{adapt, pretrain, AdaptationOutcome, AdaptationRecord, PretrainOutcome};
