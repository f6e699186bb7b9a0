//! Embedded feature selection with concrete autoencoders.
//!
//! The crate is `no_std` and only needs `alloc`. It contains everything that
//! is pure computation:
//!
//! - [`tensor`]: dense row-major `f64` tensors and the seeded random source.
//! - [`autodiff`]: a define-by-run reverse-mode tape.
//! - [`concrete`]: the Gumbel-Softmax selector layer, its four logit
//!   parametrizations, temperature annealing and the unique-percentage metric.
//! - [`objectives`]: MSE, cross-entropy, the generalized Jensen-Shannon
//!   diversity term and evaluation metrics.
//! - [`model`]: the MLP decoder, the combined selector/decoder model and the
//!   SGD/Adam optimizers.
//! - [`analysis`]: closed-form one-step update rules for the direct, scalar
//!   and full-matrix parametrizations, plus per-step update tracing.
//! - [`data`]: in-memory datasets, class-mean imputation, train-only min-max
//!   scaling, split assignment and synthetic datasets with planted features.
//! - [`training`]: the training loop, best-validation model selection,
//!   evaluation, speedup computation and sweeps.
//!
//! File formats, CSV ingestion and the command-line interface live in the
//! companion `ipcae` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod analysis;
pub mod autodiff;
pub mod concrete;
pub mod data;
pub mod error;
pub mod model;
pub mod objectives;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Rng, Shape, Tensor};

/// The ten fixed seeds used for repeated runs.
pub const FIXED_SEEDS: [u64; 10] = [11, 22, 33, 44, 55, 66, 77, 88, 99, 1010];
