use crate::classlm::{ClassModel, ClmState, RankGate};
use crate::fusion::{clm_interp, AugmentedEntry};
use crate::lm::{log_sum_exp, ScoreVector, LOG_ZERO};
use crate::Result;

/// Augmented predictor and encoder channels over `S¹ ∥ S² ∥ S³`.
#[derive(Debug, Clone)]
pub struct AugmentedScores {
    pub entries: Vec<AugmentedEntry>,
    /// Encoder score of each entry's word, in entry order.
    pub z_t: Vec<f64>,
    pub cat1_available: bool,
}

impl AugmentedScores {
    pub fn width(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Log posteriors of every channel and of blank after the final softmax.
    pub fn joint(&self, z_blank: f64) -> (Vec<f64>, f64) {
        let mut joint: Vec<f64> = self.entries.iter().zip(&self.z_t).map(|(e, zt)| zt + e.z_u).collect();
        joint.push(z_blank);
        let norm = log_sum_exp(&joint).unwrap_or(LOG_ZERO);
        if norm == LOG_ZERO {
            joint.pop();
            return (vec![LOG_ZERO; joint.len()], LOG_ZERO);
        }
        joint.iter_mut().for_each(|v| *v -= norm);
        let blank = joint.pop().unwrap_or(LOG_ZERO);
        (joint, blank)
    }
}

/// Class LM interpolation of `z_u` at `state`, with the encoder channel copied per word.
pub fn build_augmented(
    clm: &ClassModel,
    state: &ClmState,
    z_t: &[f64],
    z_u: &ScoreVector,
    alpha: f64,
    rank_r: usize,
    gate: &RankGate,
) -> Result<AugmentedScores> {
    let sets = clm.enumerate_transitions(state, gate);
    let ranked = if sets.cat1_available() {
        clm.ngram().top_r_at(sets.exit_node, rank_r.max(1))
    } else {
        Default::default()
    };
    let entries = clm_interp(z_u, &sets, &ranked, alpha)?;
    let z_t = entries.iter().map(|e| z_t[e.transition.word as usize]).collect();
    Ok(AugmentedScores {
        entries,
        z_t,
        cat1_available: sets.cat1_available(),
    })
}
