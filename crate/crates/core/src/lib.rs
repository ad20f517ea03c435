//! Wind power forecasting with a multi-head-attention transformer and
//! recurrent (LSTM/GRU) baselines.
//!
//! Everything runs on the small reverse-mode autodiff engine in [`tensor`]:
//! models record their forward pass on a [`Tape`], the tape is swept in
//! reverse for gradients, and [`training::adam_step`] applies the update.
//!
//! The pipeline is
//! [`data`] (CSV ingest, min-max scaling, rolling windows) →
//! [`training::fit`] (Adam on the halved MSE) →
//! [`bench::evaluate`] (MSE/MAE/MAPE/R²) →
//! [`bench::run_benchmark_grid`] (step × sequence × model comparison).

pub mod attention;
pub mod baselines;
pub mod bench;
pub mod checkpoint;
pub mod data;
mod error;
pub mod forecaster;
pub mod kv;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use forecaster::{Forecaster, ModelConfig, ModelKind};
pub use tensor::{ModelParameters, Parameter, Tape, Tensor, Var};

/// Random generator owned by one job. ChaCha keeps streams identical
/// across platforms for a given seed.
pub type JobRng = rand_chacha::ChaCha8Rng;
