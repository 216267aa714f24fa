//! Factorized neural transducer (FNT) decoding with external language models.
//!
//! The crate is organized around the predictor stream of an FNT: the
//! vocabulary predictor emits a normalized log distribution over word-pieces,
//! and external models are mixed into that stream before it is joined with the
//! encoder scores.
//!
//! - [`lm`]: vocabulary, log-domain helpers and the [`lm::ExternalLm`] contract.
//! - [`ngram`]: Kneser-Ney training, ARPA I/O and a sorted-array trie with
//!   rank-limited queries.
//! - [`classlm`]: class-based n-gram models with per-class prefix trees.
//! - [`fusion`]: shallow fusion, linear, log-linear and conditional linear
//!   interpolation.
//! - [`decoder`]: time-synchronous transducer beam search.
//! - [`sim`]: a deterministic FNT scorer and synthetic scenario generator.
//! - [`eval`]: WER scoring, weight sweeps and latency benchmarks.

pub mod classlm;
pub mod decoder;
mod error;
pub mod eval;
pub mod fusion;
pub mod lm;
pub mod ngram;
pub mod sim;

pub use error::{Error, Result};
