use std::sync::Arc;

use super::EncoderOutput;
use crate::lm::{ExternalLm, LmState, ScoreVector};

/// Stand-in for a trained transducer: an LM as predictor and encoder-supplied blank logits.
#[derive(Clone)]
pub struct FntScorer {
    predictor: Arc<dyn ExternalLm>,
    /// Added to the blank logit per symbol already emitted in the current frame.
    pub gamma: f64,
}

impl std::fmt::Debug for FntScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FntScorer")
            .field("vocab_size", &self.predictor.vocab_size())
            .field("gamma", &self.gamma)
            .finish()
    }
}

impl FntScorer {
    pub fn new(predictor: Arc<dyn ExternalLm>, gamma: f64) -> Self {
        FntScorer { predictor, gamma }
    }

    pub fn predictor(&self) -> &Arc<dyn ExternalLm> {
        &self.predictor
    }

    pub fn vocab_size(&self) -> usize {
        self.predictor.vocab_size()
    }

    pub fn initial_state(&self) -> LmState {
        self.predictor.initial_state()
    }

    pub fn predictor_scores(&self, state: &LmState) -> ScoreVector {
        self.predictor.full_dist(state)
    }

    pub fn blank_logit(&self, enc: &EncoderOutput, t: usize, emitted: usize) -> f64 {
        enc.blank_logit(t) + self.gamma * emitted as f64
    }
}
