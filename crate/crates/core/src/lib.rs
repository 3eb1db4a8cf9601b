//! Set prediction with a learned negative-binomial cardinality.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: log-gamma, digamma and the negative binomial / Poisson / Gamma
//!   densities the cardinality model is built on.
//! - [`cardloss`]: the cardinality negative log-likelihood, its analytic gradients,
//!   the weighted-sigmoid `(alpha, beta)` head and a squared-error baseline.
//! - [`cardnet`]: a small dense network trained with SGD to predict `(alpha, beta)`.
//! - [`setinfer`]: cardinality-then-elements MAP set inference and finite-set sampling.
//! - [`detect`]: box overlap, greedy and cardinality-constrained NMS, F1 and
//!   log-average miss rate.
//! - [`mlmetrics`]: multi-label precision / recall / F1, top-k sweeps and cardinality error.
//! - [`synth`]: seeded generators for counting, multi-label and detection data.
//! - [`cli`]: the command implementations and file formats behind the `setnet` binary.

pub mod cardloss;
pub mod cardnet;
pub mod cli;
pub mod detect;
mod error;
pub mod mlmetrics;
pub mod numerics;
pub mod setinfer;
pub mod synth;

pub use error::{Error, Result};
