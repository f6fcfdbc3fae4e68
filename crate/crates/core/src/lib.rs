//! Tandem neural inverse design of metasurface color filters.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: a small reverse-mode differentiation engine (tape, layers,
//!   Adam, step decay, seeded initialization).
//! - [`metrics`]: MSE, differentiable SSIM, the composite generator loss,
//!   binarization and near-binarity.
//! - [`encoding`]: contrast-vector encoding of transmittance spectra and
//!   synthetic design targets.
//! - [`datagen`]: random polygon unit cells, rasterization, the analytic
//!   surrogate solver, augmentation and the dataset file format.
//! - [`models`]: simulator and generator networks plus checkpoints.
//! - [`pipeline`]: two-stage training, evaluation, the traversal baseline,
//!   the design loop and dataset reports.

pub mod datagen;
pub mod encoding;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;

pub use datagen::{DeviceRecord, Period, ShapeImage, Spectrum, IMAGE_SIDE, SPECTRUM_LEN};
pub use encoding::ContrastVector;
pub use error::{Error, Result};
pub use models::{GeneratorModel, SimulatorModel};
pub use nn::{ParamStore, Real, Tape, Tensor, Var};
