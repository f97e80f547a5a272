//! Data-instance-prior GAN training on desk-scale problems.
//!
//! A generator and projection discriminator are conditioned on frozen
//! feature-extractor embeddings `C(x)` of real training instances. The crate
//! contains everything needed to run and evaluate that setup without an
//! external ML framework:
//!
//! - [`tape`], [`optim`], [`spectral`]: reverse-mode autodiff, Adam, EMA and
//!   spectral normalization over dense `f64` matrices.
//! - [`nets`]: conditional generator, projection discriminator, extractors.
//! - [`prior`]: prior sets, vicinal-mix and Gaussian-mixture prior samplers.
//! - [`train`]: the alternating discriminator/generator training loop.
//! - [`metrics`]: FID, k-NN precision/recall, inversion error, the
//!   data-copying statistic, discriminator overfit gap and mode coverage.
//! - [`data`]: synthetic transfer benchmarks and the dataset file format.

pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod prior;
pub mod seed;
pub mod spectral;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::{ParamSet, Tensor};
