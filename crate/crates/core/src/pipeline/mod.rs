//! Two-stage training, evaluation protocols, the traversal baseline and the
//! design loop.

mod config;
mod eval;
mod train;

pub use config::TrainConfig;
pub use eval::{
    baseline_traverse, binarization_study, candidate_noise, dataset_report, design, eval_generator, eval_simulator, summarize,
    BinarizationStudy, Candidate, DatasetReport, DesignMode, DesignTarget, EvalReport, GeneratorEval, Traversal,
};
pub use train::{generated_binarity, simulator_mse, train_generator, train_simulator, EpochLoss, LossCurve};

use crate::datagen::{split, DeviceRecord};
use crate::error::Result;

/// Fraction of records used for training; the rest are held out.
pub const TRAIN_FRACTION: f64 = 0.8;

/// Seeded 80/20 split into (train, validation).
pub fn split_dataset(records: &[DeviceRecord], seed: u64) -> Result<(Vec<DeviceRecord>, Vec<DeviceRecord>)> {
    split(records, TRAIN_FRACTION, seed)
}
