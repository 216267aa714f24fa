//! Vocabulary, log-domain conventions and the external-LM contract.
//!
//! All probabilities are natural-log values. `-inf` ([`LOG_ZERO`]) marks an
//! impossible event; NaN is rejected at every boundary.

mod score;
mod vocab;

pub(crate) use score::weighted;
pub use score::{log_add, log_softmax, log_sum_exp, ScoreVector, Support, LOG_ZERO};
pub use vocab::{detokenize, is_class_tag, TokenId, Vocabulary, BOS, EOS, WORD_BOUNDARY};

/// Opaque state key of an external language model.
///
/// Backends decide what the ids mean; n-gram backends store the truncated
/// token history. Equal states must yield equal distributions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LmState(Vec<TokenId>);

impl LmState {
    pub fn new(ids: Vec<TokenId>) -> Self {
        LmState(ids)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }
}

/// A language model that can be attached to decoder hypotheses.
///
/// `top_r` entries must be bit-identical to the same entries of `full_dist`.
pub trait ExternalLm: Send + Sync {
    /// Size of the output distribution.
    fn vocab_size(&self) -> usize;

    fn initial_state(&self) -> LmState;

    fn advance(&self, state: &LmState, token: TokenId) -> LmState;

    /// Normalized log distribution over the full vocabulary.
    fn full_dist(&self, state: &LmState) -> ScoreVector;

    /// Up to `r` highest-ranked entries as a sparse vector.
    fn top_r(&self, state: &LmState, r: usize) -> ScoreVector;
}
