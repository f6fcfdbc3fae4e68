//! Minimal reverse-mode differentiation engine.

pub mod conv;
mod init;
mod optim;
mod real;
mod tape;
mod tensor;

pub use init::{init_weights, init_weights_with_std, NormalSampler, INIT_STD};
pub use optim::{step_lr, Adam, Param, ParamId, ParamKind, ParamStore};
pub use real::{gemm, MatRef, Real};
pub use tape::{Activation, BatchStats, Tape, Var, LEAKY_SLOPE};
pub use tensor::Tensor;

/// Epsilon inside normalization layers.
pub const NORM_EPS: f64 = 1e-5;
/// Weight of the newest batch in running normalization statistics.
pub const NORM_MOMENTUM: f64 = 0.1;
