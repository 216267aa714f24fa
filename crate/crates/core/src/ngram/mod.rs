//! Backoff n-gram language models over word-piece ids.
//!
//! Models are trained with interpolated modified Kneser-Ney ([`train_kneser_ney`])
//! or read from ARPA files ([`load_arpa`]) and stored in a sorted-array trie
//! ([`NgramModel`]). Each context node keeps its word arcs sorted by
//! descending probability so the `r` most likely continuations can be read
//! off as a prefix, with fallback to shorter contexts when a node runs out.

mod arpa;
mod cache;
mod kn;
mod trie;

pub use arpa::{load_arpa, read_arpa, save_arpa, write_arpa};
pub use cache::CachedNgram;
pub use kn::{train_kneser_ney, Discounts, FALLBACK_DISCOUNT};
pub use trie::{NgramModel, NodeId, WordArc, ROOT};

use crate::lm::{ScoreVector, TokenId};

/// Default rank limit for conditional interpolation.
pub const DEFAULT_RANK_R: usize = 200;

/// One n-gram with its natural-log probability and optional backoff weight.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramEntry {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub backoff: Option<f64>,
}

/// Flat per-order listing of a backoff model. `entries[n - 1]` holds the n-grams.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NgramTable {
    pub entries: Vec<Vec<NgramEntry>>,
}

impl NgramTable {
    pub fn order(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseEntry {
    pub word: TokenId,
    pub log_prob: f64,
    /// Length of the n-gram that supplied the probability.
    pub order: u8,
}

/// Result of a rank-limited query: exact backoff probabilities for a subset of words.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseLmQueryResult {
    pub entries: Vec<SparseEntry>,
}

impl SparseLmQueryResult {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: TokenId) -> Option<f64> {
        self.entries.iter().find(|e| e.word == word).map(|e| e.log_prob)
    }

    pub fn to_score_vector(&self) -> ScoreVector {
        ScoreVector::sparse(
            self.entries.iter().map(|e| e.word).collect(),
            self.entries.iter().map(|e| e.log_prob).collect(),
            false,
        )
        .expect("query results never hold NaN")
    }
}
